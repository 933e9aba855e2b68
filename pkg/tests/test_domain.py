import math

import pytest

from plcmac.domain import (ConfigError, HOMEPLUG_1_0, INFINITE, PhyTimings,
                           SATURATED, Scenario, StageSchedule, Variant,
                           apply_variant, frame_durations, parse_variant,
                           preset_schedule)


def test_preset_ca32():
    s = preset_schedule("CA3/2")
    assert s.W == (7, 15, 15, 31)
    assert s.M == (0, 1, 3, 15)
    assert s.m == 4


def test_preset_ca10():
    s = preset_schedule("ca10")
    assert s.W == (7, 15, 31, 63)
    assert s.M == (0, 1, 3, 15)


@pytest.mark.parametrize("name", ["CA3/2", "ca32", "Ca3-2", " CA3/2 "])
def test_preset_spellings(name):
    assert preset_schedule(name).W[3] == 31


def test_preset_unknown():
    with pytest.raises(ConfigError):
        preset_schedule("ca21")


def test_schedule_accessors_are_one_based():
    s = preset_schedule("ca32")
    assert s.window(1) == 7
    assert s.window(4) == 31
    assert s.defer_init(2) == 1


def test_schedule_validation():
    with pytest.raises(ConfigError):
        StageSchedule(W=(), M=())
    with pytest.raises(ConfigError):
        StageSchedule(W=(7, 15), M=(0,))
    with pytest.raises(ConfigError):
        StageSchedule(W=(-1,), M=(0,))
    with pytest.raises(ConfigError):
        StageSchedule(W=(7,), M=(-2,))
    with pytest.raises(ConfigError):
        StageSchedule(W=(7,), M=(8,))  # M may not exceed W
    with pytest.raises(ConfigError):
        StageSchedule(W=(7.5,), M=(0,))


def test_schedule_allows_infinite_and_m_equal_w():
    s = StageSchedule(W=(7, 15), M=(INFINITE, 15))
    assert s.defer_init(1) is INFINITE
    assert s.defer_init(2) == 15


def test_variant_parsing():
    assert parse_variant("standard") is Variant.STANDARD
    assert parse_variant("no-defer") is Variant.NO_DEFERRAL
    assert parse_variant("NO_DEFERRAL") is Variant.NO_DEFERRAL
    assert parse_variant("always-defer") is Variant.ALWAYS_DEFER
    assert parse_variant(Variant.STANDARD) is Variant.STANDARD
    with pytest.raises(ConfigError):
        parse_variant("sometimes-defer")


def test_apply_variant():
    s = preset_schedule("ca32")
    assert apply_variant(s, Variant.STANDARD) is s
    nd = apply_variant(s, Variant.NO_DEFERRAL)
    assert nd.M == (INFINITE,) * 4
    assert nd.W == s.W
    ad = apply_variant(s, Variant.ALWAYS_DEFER)
    assert ad.M == (0, 0, 0, 0)
    assert ad.W == s.W


def test_frame_durations_homeplug():
    t_s, t_c = frame_durations(HOMEPLUG_1_0)
    assert t_s == t_c
    assert t_s == pytest.approx(1359.02, abs=1e-9)


def test_phy_timings_validation():
    with pytest.raises(ConfigError):
        PhyTimings(sigma=-1, prs0=0, prs1=0, t_fra=1, t_res=0, rifs=0,
                   cifs=0, payload_bits=100)
    with pytest.raises(ConfigError):
        PhyTimings(sigma=1, prs0=0, prs1=0, t_fra=1, t_res=0, rifs=0,
                   cifs=0, payload_bits=0)


def test_scenario_validation():
    s = preset_schedule("ca32")
    sc = Scenario(n=3, schedule=s, timings=HOMEPLUG_1_0, lam=SATURATED)
    assert sc.saturated
    sc2 = Scenario(n=3, schedule=s, timings=HOMEPLUG_1_0, lam=5.0)
    assert not sc2.saturated
    with pytest.raises(ConfigError):
        Scenario(n=0, schedule=s, timings=HOMEPLUG_1_0, lam=1.0)
    with pytest.raises(ConfigError):
        Scenario(n=1, schedule=s, timings=HOMEPLUG_1_0, lam=-1.0)
    with pytest.raises(ConfigError):
        Scenario(n=1, schedule=s, timings=HOMEPLUG_1_0, lam=1.0, queue_cap=0)
    with pytest.raises(ConfigError):
        Scenario(n=1, schedule=s, timings=HOMEPLUG_1_0, lam=1.0,
                 queue_cap=10, preload=11)


def test_saturated_sentinel():
    assert SATURATED == math.inf
    assert repr(INFINITE) == "INFINITE"
