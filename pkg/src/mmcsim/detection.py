"""Arm-event stub, polarity classifier, injection supervisor and SM location."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import Health


@dataclass(frozen=True)
class DetectorConfig:
    """Location thresholds and supervisor limits.

    ``eps_frac`` scales the rated arm current into the classifier band
    ``eps_I``. The classifier keeps retrying on a sliding one-period window
    for ``classify_timeout_periods`` periods after the arm event.
    """

    U_TH: float = 5.0
    delta_T: float = 5e-3
    arm_detect_delay: float = 10e-3
    injection_enabled: bool = True
    injection_max_periods: int = 5
    eps_frac: float = 0.02
    classify_timeout_periods: float = 2.0

    def __post_init__(self):
        if not self.U_TH > 0:
            raise ValueError("U_TH must be positive")
        if not self.delta_T > 0:
            raise ValueError("delta_T must be positive")
        if self.arm_detect_delay < 0:
            raise ValueError("arm_detect_delay must be >= 0")
        if int(self.injection_max_periods) != self.injection_max_periods or self.injection_max_periods < 1:
            raise ValueError("injection_max_periods must be an integer >= 1")
        if not 0 < self.eps_frac < 1:
            raise ValueError("eps_frac must lie in (0, 1)")
        if self.classify_timeout_periods < 0:
            raise ValueError("classify_timeout_periods must be >= 0")


@dataclass
class LocationReport:
    """Outcome of one run of the location procedure. Times in seconds, SMs 1-based."""

    t_fault: float | None = None
    event_time: float | None = None
    fault_type: str | None = None
    classified_at: float | None = None
    injection_window: tuple | None = None
    flags: dict = field(default_factory=dict)
    located_sm: int | None = None

    @property
    def location_time(self):
        if self.located_sm is None or self.t_fault is None:
            return None
        return self.flags[self.located_sm] - self.t_fault

    def to_dict(self):
        return {
            "t_fault": self.t_fault,
            "event_time": self.event_time,
            "fault_type": self.fault_type,
            "classified_at": self.classified_at,
            "injection_window": list(self.injection_window) if self.injection_window else None,
            "flags": {str(k): v for k, v in sorted(self.flags.items())},
            "located_sm": self.located_sm,
            "location_time": self.location_time,
        }


def classify_polarity(i_min, i_max, eps):
    """Fault type from the window extremes, or ``None`` for a bipolar window.

    ``max < eps`` gives ``T2_OPEN`` (checked first, so a window confined to
    ``(-eps, eps)`` is T2), ``min > -eps`` gives ``T1_OPEN``.
    """
    code = kernels.classify_polarity(float(i_min), float(i_max), float(eps))
    return None if code == kernels.INDETERMINATE else Health(code)


def arm_fault_event(t_fault, cfg: DetectorConfig, t, i_arm, eps, period):
    """Event time and fault type from a sampled faulty-arm current.

    The event fires ``arm_detect_delay`` after onset. The type is read from
    the last ``period`` seconds of post-fault samples up to the event; if that
    window is bipolar the type is ``None``.
    """
    t = np.asarray(t, dtype=np.float64)
    i = np.asarray(i_arm, dtype=np.float64)
    t_event = t_fault + cfg.arm_detect_delay
    mask = (t >= max(t_fault, t_event - period)) & (t <= t_event)
    if not mask.any():
        return t_event, None
    return t_event, classify_polarity(i[mask].min(), i[mask].max(), eps)


@dataclass
class InjectionSupervisor:
    """Enable latch for the injection; it runs at most once per event."""

    max_duration: float
    start: float | None = None
    end: float | None = None

    @property
    def active(self):
        return self.start is not None and self.end is None

    def step(self, event, at_risk, t, located):
        if self.end is not None:
            return False
        if self.start is None:
            if event and at_risk and not located:
                self.start = t
                return True
            return False
        if located or t - self.start >= self.max_duration:
            self.end = t
            return False
        return True


def injection_supervisor(event, criterion_risk, t, located, cfg: DetectorConfig, f0, state=None):
    """Functional wrapper around :class:`InjectionSupervisor`; returns ``(enable, state)``."""
    if state is None:
        state = InjectionSupervisor(cfg.injection_max_periods / f0)
    return state.step(event, criterion_risk, t, located), state


@dataclass
class LocationState:
    """Per-SM dwell counters (in samples) and flags of one arm."""

    n_dwell: int
    dwell: np.ndarray
    flagged: np.ndarray
    active: np.ndarray
    flag_times: dict = field(default_factory=dict)

    @classmethod
    def create(cls, n_sm, cfg: DetectorConfig, dt):
        return cls(int(round(cfg.delta_T / dt)), np.zeros(n_sm, dtype=np.int64),
                   np.zeros(n_sm, dtype=bool), np.ones(n_sm))


def location_step(u_C, t, cfg: DetectorConfig, state: LocationState, bypass=True):
    """One sample of the threshold/dwell rule; returns 0-based indices flagged now.

    Deviation is ``|u_i - mean(other active SMs)|``. A counter grows while it
    exceeds ``U_TH`` and resets on any sample at or below it.
    """
    u = np.asarray(u_C, dtype=np.float64)
    _, newly = kernels.location_update(u, state.active.copy(), state.dwell, state.flagged,
                                       float(cfg.U_TH), state.n_dwell)
    idx = [int(i) for i in np.flatnonzero(newly)]
    for i in idx:
        state.flag_times[i] = t
        if bypass:
            state.active[i] = 0.0
    return idx


def deviations(u_C, active=None):
    """Deviation of every SM from the mean of the other active ones."""
    u = np.asarray(u_C, dtype=np.float64)
    act = np.ones(u.shape[-1]) if active is None else np.asarray(active, dtype=np.float64)
    n = act.sum()
    total = (u * act).sum(axis=-1, keepdims=True)
    ref = (total - u * act) / np.maximum(n - act, 1.0)
    return np.abs(u - ref) * act


__all__ = [
    "DetectorConfig", "LocationReport", "classify_polarity", "arm_fault_event",
    "InjectionSupervisor", "injection_supervisor", "LocationState", "location_step",
    "deviations",
]
