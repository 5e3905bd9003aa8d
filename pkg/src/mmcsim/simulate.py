"""Closed-loop time-domain runs: plant, controllers and fault location in one kernel."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .analysis import CriterionInput, unipolarity_threshold
from .control import ControlParams, INJECTION_PHASE
from .core import ConverterParams, ConverterState, DivergenceError, FaultSpec, Health, plant_constants
from .detection import DetectorConfig, LocationReport


@dataclass
class SimResult:
    """Decimated traces of one run plus the location outcome.

    ``u_c`` and ``flags`` belong to the instrumented arm (the faulty arm when
    a fault is configured, otherwise arm ``ap``).
    """

    t: np.ndarray
    i_arm: np.ndarray
    i_z: np.ndarray
    u_c: np.ndarray
    gate_sums: np.ndarray
    inj: np.ndarray
    flags: np.ndarray
    report: LocationReport
    status: int
    state: ConverterState
    instrumented_arm: int
    negative_voltage_steps: int
    window: tuple

    @property
    def diverged(self):
        return self.status == kernels.STATUS_DIVERGED


def thresholds(conv: ConverterParams, n_faulty=1):
    """Unipolarity thresholds ``(T1, T2)`` for the converter's operating point."""
    inp = CriterionInput(conv.U_dc, int(conv.N), conv.f_c, conv.L_s, conv.m,
                         max(conv.cos_phi, 0.0), n_faulty)
    return (unipolarity_threshold(inp, Health.T1_OPEN), unipolarity_threshold(inp, Health.T2_OPEN))


def build_constants(conv: ConverterParams, ctrl: ControlParams, det: DetectorConfig,
                    fault: FaultSpec | None = None, decim=10, freeze_caps=False):
    thr1, thr2 = thresholds(conv)
    n_ctrl = ctrl.samples_per_control(conv.dt)
    T0 = 1.0 / conv.f0
    fault_kw = {}
    if fault is not None:
        fault.check(conv)
        t_event = fault.t_fault + det.arm_detect_delay
        fault_kw = dict(
            has_fault=True, f_arm=fault.arm_index, f_sm=fault.sm_index - 1,
            f_type=int(fault.fault_type), t_fault=float(fault.t_fault),
            t_event=t_event, t_cls_end=t_event + det.classify_timeout_periods * T0,
        )
    return plant_constants(
        conv, freeze_caps,
        kp=float(ctrl.kp), kr=float(ctrl.kr), wc=float(ctrl.wc),
        v_lim=ctrl.limit_frac * conv.U_dc, k_bal=float(ctrl.k_bal),
        I_2nd=ctrl.injection_amplitude(conv), h_inj=float(ctrl.h_inj),
        phi2_T1=INJECTION_PHASE[Health.T1_OPEN], phi2_T2=INJECTION_PHASE[Health.T2_OPEN],
        eps_I=det.eps_frac * conv.rated_arm_current, thr_T1=thr1, thr_T2=thr2,
        inj_enabled=bool(det.injection_enabled), inj_max=det.injection_max_periods * T0,
        u_th=float(det.U_TH), n_dwell=max(1, int(round(det.delta_T / ctrl.T_s))),
        decim=int(decim), n_ctrl=n_ctrl, **fault_kw,
    )


def simulate(conv: ConverterParams, ctrl: ControlParams | None = None,
             det: DetectorConfig | None = None, fault: FaultSpec | None = None,
             t_end=0.3, decim=10, freeze_caps=False, raise_on_divergence=False,
             u_c0=None):
    """Run from the ideal steady state at ``t = 0`` to ``t_end``.

    Parameters
    ----------
    conv, ctrl, det
        Converter, control and detector settings (defaults if ``None``).
    fault
        Open-circuit fault to apply, or ``None`` for a healthy run.
    t_end : float
        Simulated time in seconds.
    decim : int
        Keep every ``decim``-th step in the traces.
    freeze_caps : bool
        Hold capacitor voltages at their initial values.
    raise_on_divergence : bool
        Raise :class:`DivergenceError` instead of returning a diverged result.
    u_c0 : array_like, optional
        Initial capacitor voltages, shape ``(6, N)``; nominal by default.
    """
    ctrl = ControlParams() if ctrl is None else ctrl
    det = DetectorConfig() if det is None else det
    if int(decim) != decim or decim < 1:
        raise ValueError("decim must be an integer >= 1")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    k = build_constants(conv, ctrl, det, fault, decim, freeze_caps)
    state = ConverterState.initial(conv)
    if u_c0 is not None:
        u0 = np.asarray(u_c0, dtype=np.float64)
        if u0.shape != state.u_c.shape:
            raise ValueError(f"u_c0 must have shape {state.u_c.shape}")
        state.u_c[:] = u0
    n_sm = int(conv.N)
    n_steps = int(round(t_end / conv.dt))
    n_rec = (n_steps + decim - 1) // decim
    w_res = ctrl.resonant_frequencies(conv)
    x1 = np.zeros((3, w_res.size))
    x2 = np.zeros_like(x1)
    active = np.ones((6, n_sm))
    rec = dict(t=np.zeros(n_rec), i=np.zeros((n_rec, 6)), iz=np.zeros((n_rec, 3)),
               uc=np.zeros((n_rec, n_sm)), g=np.zeros((n_rec, 6)), inj=np.zeros(n_rec),
               fl=np.zeros((n_rec, n_sm)))
    flag_time = np.full(n_sm, -1.0)
    info = np.full(11, -1.0)
    status = kernels.run_loop(k, n_steps, 0.0, state.u_c, state.health, active, state.i_arm,
                              x1, x2, w_res, rec["t"], rec["i"], rec["iz"], rec["uc"], rec["g"],
                              rec["inj"], rec["fl"], flag_time, info)
    status = int(status)
    n_done = n_rec
    if status == kernels.STATUS_DIVERGED:
        n_done = int(info[6]) // decim + 1
        if raise_on_divergence:
            raise DivergenceError(f"run diverged at t={info[6] * conv.dt:.6g} s")
    state.bypassed = active == 0.0
    state.t = n_steps * conv.dt if status == kernels.STATUS_OK else info[6] * conv.dt

    report = _report(info, flag_time, fault)
    return SimResult(
        t=rec["t"][:n_done], i_arm=rec["i"][:n_done], i_z=rec["iz"][:n_done],
        u_c=rec["uc"][:n_done], gate_sums=rec["g"][:n_done], inj=rec["inj"][:n_done],
        flags=rec["fl"][:n_done], report=report, status=status, state=state,
        instrumented_arm=int(k.f_arm), negative_voltage_steps=int(info[7]),
        window=(float(info[8]), float(info[9])),
    )


def _opt(x):
    return None if x < 0 else float(x)


def _report(info, flag_time, fault):
    if fault is None:
        return LocationReport()
    cls = int(info[1])
    flags = {i + 1: float(t) for i, t in enumerate(flag_time) if t >= 0}
    start, end = _opt(info[2]), _opt(info[3])
    return LocationReport(
        t_fault=float(fault.t_fault),
        event_time=_opt(info[0]),
        fault_type=Health(cls).name if cls in (1, 2) else None,
        classified_at=_opt(info[10]),
        injection_window=(start, end) if start is not None else None,
        flags=flags,
        located_sm=None if info[5] < 0 else int(info[5]) + 1,
    )


def second_harmonic_amplitude(t, x, f0):
    """Amplitude of the ``2 f0`` component of ``x`` over whole periods of ``t``."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    T0 = 1.0 / f0
    n_per = math.floor((t[-1] - t[0]) / T0 + 1e-9)
    if n_per < 1:
        raise ValueError("need at least one full period")
    sel = t < t[0] + n_per * T0 - 1e-12
    w = 2.0 * 2.0 * math.pi * f0
    ts, xs = t[sel], x[sel]
    c = 2.0 * np.mean(xs * np.cos(w * ts))
    s = 2.0 * np.mean(xs * np.sin(w * ts))
    return float(math.hypot(c, s))


__all__ = ["SimResult", "simulate", "build_constants", "thresholds", "second_harmonic_amplitude"]
