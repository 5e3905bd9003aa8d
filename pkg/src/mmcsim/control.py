"""Arm references, carrier phase-shifted PWM, balancing and circulating-current control."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ConverterParams, Health

PHASE_OFFSETS = kernels.PHASE_OFFSETS

# injection phase per fault type
INJECTION_PHASE = {Health.T1_OPEN: -0.5 * math.pi, Health.T2_OPEN: 0.5 * math.pi}


@dataclass(frozen=True)
class ControlParams:
    """Gains and injection settings.

    ``I_2nd=None`` resolves to a quarter of the rated AC current amplitude
    (half of it, times the arm share), see :meth:`injection_amplitude`.
    ``T_s`` is the control and detection sample period; it must be an
    integer multiple of the integration step.
    """

    k_bal: float = 2e-3
    kp: float = 2.0
    kr: float = 200.0
    wc: float = 5.0
    limit_frac: float = 0.1
    I_2nd: float | None = None
    h_inj: int = 2
    T_s: float = 1e-5

    def __post_init__(self):
        if self.h_inj not in (1, 2):
            raise ValueError("h_inj must be 1 or 2")
        if self.I_2nd is not None and self.I_2nd < 0:
            raise ValueError("I_2nd must be >= 0")
        if self.k_bal < 0 or self.kp < 0 or self.kr < 0 or self.wc <= 0:
            raise ValueError("gains must be non-negative and wc positive")
        if not self.T_s > 0:
            raise ValueError("T_s must be positive")
        if not 0 < self.limit_frac <= 1:
            raise ValueError("limit_frac must be in (0, 1]")

    def samples_per_control(self, dt):
        n = int(round(self.T_s / dt))
        if n < 1 or abs(n * dt - self.T_s) > 1e-9 * self.T_s:
            raise ValueError(f"T_s = {self.T_s:g} s is not an integer multiple of dt = {dt:g} s")
        return n

    def injection_amplitude(self, conv: ConverterParams):
        if self.I_2nd is not None:
            return float(self.I_2nd)
        return 0.5 * conv.rated_ac_current * 0.5

    def resonant_frequencies(self, conv: ConverterParams):
        """Resonator set of the suppressor: always ``2w``, plus ``w`` when injecting at ``w``."""
        w = conv.omega
        return np.array([2.0 * w]) if self.h_inj == 2 else np.array([2.0 * w, w])


@dataclass(frozen=True)
class CarrierBank:
    """``n`` unit triangles at ``f_c``, shifted by ``1/n`` of a period."""

    n: int
    f_c: float

    def values(self, t):
        return kernels.carrier_values(float(t), float(self.f_c), int(self.n))

    def on_fraction(self, s, t, dt):
        """Exact fraction of ``[t, t+dt)`` during which ``s >= carrier`` (``s`` per SM)."""
        s = np.asarray(s, dtype=np.float64).reshape(1, -1)
        active = np.ones_like(s)
        # u_ref = 0 with offsets = s reproduces the bare comparison
        return kernels.pwm_duty(np.zeros(1), s, float(t), float(dt), float(self.f_c),
                                active, 1.0)[0]


def reference_arm_voltages(t, conv: ConverterParams, v_z=None):
    """Per-arm voltage references ``U_dc/2 -+ U_m sin(wt + phi_x)``, minus ``v_z`` per phase."""
    e = conv.U_m * np.sin(conv.omega * t + PHASE_OFFSETS)
    vz = np.zeros(3) if v_z is None else np.asarray(v_z, dtype=np.float64)
    out = np.empty(6)
    out[0::2] = 0.5 * conv.U_dc - e - vz
    out[1::2] = 0.5 * conv.U_dc + e - vz
    return out


def balancing_offsets(u_c, i_arm, k_bal, active=None):
    """Offsets ``k_bal * sgn(i) * (mean - u_i)`` for one arm; zero-sum over active SMs."""
    u = np.asarray(u_c, dtype=np.float64).reshape(1, -1)
    act = np.ones_like(u) if active is None else np.asarray(active, dtype=np.float64).reshape(1, -1)
    return kernels.balancing_offsets(u, act, np.array([float(i_arm)]), float(k_bal))[0]


def cps_pwm_gates(u_ref_arm, offsets, carriers: CarrierBank, u_C_nom, t, active=None):
    """0/1 gate commands of one arm at time ``t``.

    Bypassed SMs (``active == 0``) get gate 0 and the reference is spread over
    the remaining ones.
    """
    off = np.asarray(offsets, dtype=np.float64).reshape(1, -1)
    act = np.ones_like(off) if active is None else np.asarray(active, dtype=np.float64).reshape(1, -1)
    c = carriers.values(t)
    g = kernels.pwm_gates(np.array([float(u_ref_arm)]), off, c, act, float(u_C_nom))[0]
    return g.astype(np.int64)


@dataclass
class SuppressorState:
    """Resonator states, shaped ``(channels, resonators)``."""

    x1: np.ndarray = field(default_factory=lambda: np.zeros((3, 1)))
    x2: np.ndarray = field(default_factory=lambda: np.zeros((3, 1)))

    @classmethod
    def zeros(cls, channels=3, resonators=1):
        return cls(np.zeros((channels, resonators)), np.zeros((channels, resonators)))

    def reset(self):
        self.x1[:] = 0.0
        self.x2[:] = 0.0


def suppressor_step(i_z_meas, i_z_ref, state: SuppressorState, ctrl: ControlParams,
                    conv: ConverterParams, w_res=None):
    """Proportional-resonant correction voltage per phase; updates ``state`` in place.

    The output is clamped to ``limit_frac * U_dc`` with conditional
    integration as anti-windup. Subtract it from both arm references.
    """
    err = np.atleast_1d(np.asarray(i_z_ref, dtype=np.float64) - np.asarray(i_z_meas, dtype=np.float64))
    w = ctrl.resonant_frequencies(conv) if w_res is None else np.asarray(w_res, dtype=np.float64)
    if state.x1.shape != (err.shape[0], w.shape[0]):
        raise ValueError("suppressor state shape does not match channels x resonators")
    return kernels.pr_step(err, state.x1, state.x2, ctrl.kp, ctrl.kr, ctrl.wc, w,
                           ctrl.limit_frac * conv.U_dc, conv.dt)


def injection_reference(t, fault_type, I_2nd, h_inj, omega, phase=0):
    """``I_2nd sin(h (wt + phi_x) + phi_2nd)`` for phase index ``phase``."""
    ft = Health.parse(fault_type)
    if ft not in INJECTION_PHASE:
        raise ValueError("injection needs a T1 or T2 fault type")
    return I_2nd * math.sin(h_inj * (omega * t + PHASE_OFFSETS[phase]) + INJECTION_PHASE[ft])


__all__ = [
    "ControlParams", "CarrierBank", "SuppressorState", "INJECTION_PHASE",
    "reference_arm_voltages", "balancing_offsets", "cps_pwm_gates",
    "suppressor_step", "injection_reference",
]
