import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmcsim.core import ConverterParams, FaultSpec, Health
from mmcsim.detection import (
    DetectorConfig, InjectionSupervisor, LocationReport, LocationState, arm_fault_event,
    classify_polarity, deviations, injection_supervisor, location_step,
)
from mmcsim.simulate import simulate, thresholds

CFG = DetectorConfig()
T0 = 0.02
DT = 1e-5


def test_classifier_examples():
    assert classify_polarity(-1.0, 80.0, 4.5) == Health.T1_OPEN
    assert classify_polarity(-80.0, 1.0, 4.5) == Health.T2_OPEN
    assert classify_polarity(-80.0, 80.0, 4.5) is None
    # pinned near zero: positive conduction is the blocked path
    assert classify_polarity(-1.0, 1.0, 4.5) == Health.T2_OPEN


@given(st.floats(-500, 500), st.floats(0, 500), st.floats(0.1, 20))
def test_classifier_partition(lo, span, eps):
    res = classify_polarity(lo, lo + span, eps)
    if res == Health.T1_OPEN:
        assert lo > -eps and lo + span >= eps
    elif res == Health.T2_OPEN:
        assert lo + span < eps
    else:
        assert lo <= -eps and lo + span >= eps


def test_arm_event_fires_after_delay():
    t = np.arange(0.0, 0.1, DT)
    i = 40.0 + 40.0 * np.sin(2 * np.pi * 50 * t)  # non-negative after onset
    t_ev, ft = arm_fault_event(0.05, CFG, t, i, 4.5, T0)
    assert t_ev == pytest.approx(0.06)
    assert ft == Health.T1_OPEN
    t_ev, _ = arm_fault_event(0.05, DetectorConfig(arm_detect_delay=0.0), t, i, 4.5, T0)
    assert t_ev == 0.05


def test_arm_event_bipolar_current_is_indeterminate():
    t = np.arange(0.0, 0.1, DT)
    i = 50.0 * np.sin(2 * np.pi * 50 * t)
    cfg = DetectorConfig(arm_detect_delay=T0)  # window spans a whole period
    assert arm_fault_event(0.05, cfg, t, i, 4.5, T0)[1] is None


def test_supervisor_enables_on_event_at_risk():
    thr1, thr2 = thresholds(ConverterParams())
    assert 50.0 < thr2 < thr1
    sup = InjectionSupervisor(5 * T0)
    assert not sup.step(False, True, 0.05, False)
    assert not sup.step(True, False, 0.06, False)
    assert sup.step(True, 50.0 < thr2, 0.06, False)
    assert sup.active


def test_supervisor_expires_after_max_periods():
    sup = InjectionSupervisor(5 * T0)
    t = 0.06
    assert sup.step(True, True, t, False)
    while sup.step(True, True, t, False):
        t += DT
    assert sup.end - sup.start == pytest.approx(5 * T0, abs=DT)
    assert not sup.step(True, True, t + 1.0, False)  # one shot per event


def test_supervisor_stops_on_location():
    enable, state = injection_supervisor(True, True, 0.06, False, CFG, 50.0)
    assert enable
    enable, state = injection_supervisor(True, True, 0.07, True, CFG, 50.0, state)
    assert not enable and state.end == 0.07


def test_location_equal_voltages_no_flags():
    st_ = LocationState.create(12, CFG, DT)
    for k in range(2000):
        assert location_step(np.full(12, 2000.0), k * DT, CFG, st_) == []
    assert not st_.flagged.any()


def _u(dev_sm1):
    u = np.full(12, 2000.0)
    u[0] += dev_sm1
    return u


def test_location_flags_after_dwell():
    st_ = LocationState.create(12, CFG, DT)
    hit = []
    for k in range(700):
        hit += [(k, i) for i in location_step(_u(8.0), k * DT, CFG, st_)]
    assert hit == [(499, 0)]
    assert st_.flag_times[0] == pytest.approx(499 * DT)
    assert st_.active[0] == 0.0


def test_location_short_excursion_resets_timer():
    st_ = LocationState.create(12, CFG, DT)
    for k in range(300):
        location_step(_u(8.0), k * DT, CFG, st_)
    assert st_.dwell[0] == 300
    location_step(_u(1.0), 300 * DT, CFG, st_)
    assert st_.dwell[0] == 0
    for k in range(301, 601):
        assert location_step(_u(8.0) if k < 500 else _u(1.0), k * DT, CFG, st_) == []
    assert not st_.flagged.any()


def test_location_excludes_bypassed_from_reference():
    u = np.full(12, 2000.0)
    u[5] = 1500.0
    act = np.ones(12)
    act[5] = 0.0
    assert deviations(u, act).max() == pytest.approx(0.0)
    assert deviations(u)[0] == pytest.approx(500.0 / 11)


def test_detector_config_validation():
    for kw in (dict(U_TH=0.0), dict(delta_T=0.0), dict(arm_detect_delay=-1.0),
               dict(injection_max_periods=0), dict(eps_frac=0.0)):
        with pytest.raises(ValueError):
            DetectorConfig(**kw)


def test_report_serialization():
    rep = LocationReport(t_fault=0.05, event_time=0.06, fault_type="T1_OPEN", flags={1: 0.075},
                         located_sm=1, injection_window=(0.06, 0.075))
    d = rep.to_dict()
    assert d["location_time"] == pytest.approx(0.025)
    assert d["flags"] == {"1": 0.075}
    assert LocationReport().to_dict()["location_time"] is None


@pytest.mark.parametrize("ft", ["T1", "T2"])
@pytest.mark.parametrize("injection", [False, True])
def test_report_invariants(ft, injection):
    from conftest import fault_run
    rep = fault_run(ft, injection).report
    assert rep.located_sm == 1
    assert list(rep.flags) == [1]
    assert rep.flags[1] >= rep.event_time >= rep.t_fault
    if injection:
        start, end = rep.injection_window
        assert rep.event_time <= start <= end <= rep.event_time + 5 * T0 + 1e-9
    else:
        assert rep.injection_window is None


def test_disabled_injection_never_injects():
    from conftest import fault_run
    r = fault_run("T1", False)
    assert np.all(r.inj == 0.0)


def test_location_runs_on_faulty_arm_of_other_phase():
    conv = ConverterParams()
    r = simulate(conv, fault=FaultSpec(phase="b", arm="lower", sm_index=7, fault_type="T1"),
                 t_end=0.12)
    assert r.instrumented_arm == 3
    assert r.report.located_sm == 7
    assert list(r.report.flags) == [7]
