"""Switched model of a three-phase half-bridge MMC.

Arms are indexed ``0..5`` in the order ``ap, an, bp, bn, cp, cn``. Submodule
indices are 0-based internally; :class:`FaultSpec` uses the 1-based numbering
of the converter nameplate.
"""
from __future__ import annotations

import cmath
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

ARM_NAMES = ("ap", "an", "bp", "bn", "cp", "cn")
PHASES = ("a", "b", "c")


class Health(enum.IntEnum):
    HEALTHY = kernels.HEALTHY
    T1_OPEN = kernels.T1_OPEN
    T2_OPEN = kernels.T2_OPEN

    @classmethod
    def parse(cls, value):
        """Accept an enum member, its int code or a name such as ``"T1"``."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"T1": cls.T1_OPEN, "T1OPEN": cls.T1_OPEN, "T2": cls.T2_OPEN,
                   "T2OPEN": cls.T2_OPEN, "NONE": cls.HEALTHY}
        if key in aliases:
            return aliases[key]
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown health/fault type {value!r}") from None


class DivergenceError(RuntimeError):
    """Raised when a state leaves the physically meaningful range."""


class NegativeVoltageWarning(RuntimeWarning):
    """A capacitor voltage went below zero, which points at a modeling bug."""


@dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of the converter and its AC connection.

    ``L_ac``/``R_ac`` describe the grid impedance behind which the AC phase
    sources sit; the source EMF is solved so that the requested ``I_m`` and
    ``cos_phi`` flow in steady state (see :meth:`grid_source`), including
    the fundamental error that capacitor ripple adds to the converter EMF
    when ``emf_ripple_correction`` is set.
    """

    U_dc: float = 24e3
    U_m: float = 11e3
    N: int = 12
    S_nom: float = 7.5e6
    C: float = 3e-3
    U_C_nom: float = 2.0e3
    L_s: float = 8e-3
    R_s: float = 0.1
    f0: float = 50.0
    f_c: float = 1200.0
    I_m: float = 50.0
    cos_phi: float = 750e3 / (1.5 * 11e3 * 50.0)
    dt: float = 1e-5
    L_ac: float = 50e-3
    R_ac: float = 0.5
    emf_ripple_correction: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ("U_dc", "U_m", "S_nom", "C", "U_C_nom", "L_s", "f0", "f_c", "dt")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if self.R_s < 0 or self.R_ac < 0 or self.L_ac < 0 or self.I_m < 0:
            raise ValueError("R_s, R_ac, L_ac and I_m must be non-negative")
        if not math.isclose(self.U_C_nom, self.U_dc / self.N, rel_tol=1e-9):
            raise ValueError(f"U_C_nom must equal U_dc/N = {self.U_dc / self.N:g} V")
        if not 0.0 < self.m <= 1.0:
            raise ValueError(f"modulation index U_m/(U_dc/2) = {self.m:g} outside (0, 1]")
        if not -1.0 <= self.cos_phi <= 1.0:
            raise ValueError("cos_phi must lie in [-1, 1]")
        if self.dt > 1.0 / (50.0 * self.f_c) * (1 + 1e-12):
            raise ValueError("dt must resolve each carrier period with >= 50 steps")

    @property
    def m(self):
        return self.U_m / (0.5 * self.U_dc)

    @property
    def omega(self):
        return 2.0 * math.pi * self.f0

    @property
    def phi(self):
        """Load angle of the phase current; negative means lagging."""
        return -math.acos(self.cos_phi)

    @property
    def I_dc(self):
        return 0.75 * self.m * self.I_m * self.cos_phi

    @property
    def rated_ac_current(self):
        """Phase-current amplitude at nominal apparent power."""
        return 2.0 * self.S_nom / (3.0 * self.U_m)

    @property
    def rated_arm_current(self):
        """Peak arm current at nominal power: a third of the DC current plus half the AC amplitude."""
        return self.S_nom / (3.0 * self.U_dc) + 0.5 * self.rated_ac_current

    def converter_emf(self, n_samples=720):
        """Fundamental phasor of the converter EMF under nominal-voltage modulation.

        Evaluates the averaged arm model over one period: each SM follows
        ``du/dt = s i / C`` with the ideal duty ``s`` and arm current, and the
        arm voltage is ``s N (U_C_nom + ripple)``. Without ripple correction
        the result is ``U_m``.
        """
        if not self.emf_ripple_correction:
            return complex(self.U_m, 0.0)
        th = np.linspace(0.0, 2.0 * math.pi, n_samples, endpoint=False)
        h = th[1] / self.omega
        i_ac = 0.5 * self.I_m * np.sin(th + self.phi)
        e_ref = self.U_m * np.sin(th)
        n_u = self.N * self.U_C_nom
        emf = np.zeros_like(th)
        for sign in (1.0, -1.0):  # upper, lower arm
            s = (0.5 * self.U_dc - sign * e_ref) / n_u
            i = self.I_dc / 3.0 + sign * i_ac
            q = np.cumsum(s * i) * h / self.C
            u_arm = s * self.N * (self.U_C_nom + q - q.mean())
            emf -= 0.5 * sign * u_arm
        return complex(2.0 * np.mean(emf * np.sin(th)), 2.0 * np.mean(emf * np.cos(th)))

    def grid_source(self):
        """Amplitude and angle of the AC source EMF.

        Solves ``E = E_conv - Z I`` with phasors referred to the converter
        reference, ``Z = R_s/2 + R_ac + j w (L_s/2 + L_ac)`` and ``E_conv``
        from :meth:`converter_emf`.
        """
        z = complex(0.5 * self.R_s + self.R_ac, self.omega * (0.5 * self.L_s + self.L_ac))
        e = self.converter_emf() - z * cmath.rect(self.I_m, self.phi)
        return abs(e), cmath.phase(e)

    def steady_arm_currents(self, t=0.0):
        """Ideal arm currents ``I_dc/3 +- (I_m/2) sin(wt + phi_x + phi)``."""
        ang = self.omega * t + kernels.PHASE_OFFSETS + self.phi
        i_x = self.I_m * np.sin(ang)
        out = np.empty(6)
        out[0::2] = self.I_dc / 3.0 + 0.5 * i_x
        out[1::2] = self.I_dc / 3.0 - 0.5 * i_x
        return out


@dataclass
class SubmoduleState:
    u_C: float
    gate: int = 0
    health: Health = Health.HEALTHY
    bypassed: bool = False


@dataclass
class ConverterState:
    """Six arms of ``N`` submodules plus arm currents and the clock.

    Stored as arrays; :meth:`submodule` gives a record view of one SM.
    """

    u_c: np.ndarray
    gates: np.ndarray
    health: np.ndarray
    bypassed: np.ndarray
    i_arm: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, params: ConverterParams, t=0.0, i_arm=None):
        n = int(params.N)
        return cls(
            u_c=np.full((6, n), float(params.U_C_nom)),
            gates=np.zeros((6, n)),
            health=np.zeros((6, n), dtype=np.int64),
            bypassed=np.zeros((6, n), dtype=bool),
            i_arm=params.steady_arm_currents(t) if i_arm is None else np.asarray(i_arm, float).copy(),
            t=float(t),
        )

    def copy(self):
        return ConverterState(self.u_c.copy(), self.gates.copy(), self.health.copy(),
                              self.bypassed.copy(), self.i_arm.copy(), self.t)

    def submodule(self, arm, index):
        return SubmoduleState(float(self.u_c[arm, index]), int(round(self.gates[arm, index])),
                              Health(int(self.health[arm, index])), bool(self.bypassed[arm, index]))

    @property
    def i_z(self):
        return circulating_current(self.i_arm[0::2], self.i_arm[1::2])

    @property
    def i_x(self):
        return self.i_arm[0::2] - self.i_arm[1::2]


@dataclass(frozen=True)
class FaultSpec:
    phase: str = "a"
    arm: str = "upper"
    sm_index: int = 1
    fault_type: Health = Health.T1_OPEN
    t_fault: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "fault_type", Health.parse(self.fault_type))
        if self.fault_type == Health.HEALTHY:
            raise ValueError("fault_type must be T1 or T2")
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        if self.arm not in ("upper", "lower"):
            raise ValueError("arm must be 'upper' or 'lower'")
        if self.t_fault < 0:
            raise ValueError("t_fault must be >= 0")
        if int(self.sm_index) != self.sm_index or self.sm_index < 1:
            raise ValueError("sm_index is 1-based and must be >= 1")

    @property
    def arm_index(self):
        return 2 * PHASES.index(self.phase) + (0 if self.arm == "upper" else 1)

    def check(self, params: ConverterParams):
        if self.sm_index > params.N:
            raise ValueError(f"sm_index {self.sm_index} out of range 1..{params.N}")


def circulating_current(i_p, i_n):
    return 0.5 * (i_p + i_n)


def sm_inserted(sm: SubmoduleState, i_arm):
    """Whether the capacitor is in the current path; zero current counts as positive."""
    return bool(kernels.sm_inserted(int(sm.gate), int(sm.health), bool(sm.bypassed), float(i_arm)))


def sm_output_voltage(sm: SubmoduleState, i_arm):
    return sm.u_C if sm_inserted(sm, i_arm) else 0.0


def capacitor_step(sm: SubmoduleState, i_arm, dt, C):
    """Capacitor voltage after one step of ``i_arm``; negative results are flagged, not clamped."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = sm.u_C + (i_arm * dt / C if sm_inserted(sm, i_arm) else 0.0)
    if u < 0.0:
        warnings.warn(f"capacitor voltage went negative ({u:.6g} V)", NegativeVoltageWarning,
                      stacklevel=2)
    return u


def plant_constants(params: ConverterParams, freeze_caps=False, **overrides):
    """Kernel constant record for the plant part of a :class:`ConverterParams`.

    Control and detection entries get inert values; :mod:`mmcsim.simulate`
    fills them in for closed-loop runs.
    """
    e_g, delta_g = params.grid_source()
    base = dict(
        U_dc=float(params.U_dc), U_m=float(params.U_m), C=float(params.C),
        U_C_nom=float(params.U_C_nom), L_s=float(params.L_s), R_s=float(params.R_s),
        omega=params.omega, f_c=float(params.f_c), dt=float(params.dt),
        L_ac=float(params.L_ac), R_ac=float(params.R_ac), E_g=e_g, delta_g=delta_g,
        i_guard=100.0 * params.rated_arm_current, u_guard=5.0 * params.U_C_nom,
        freeze_caps=bool(freeze_caps),
        I_dc3=params.I_dc / 3.0, kp=0.0, kr=0.0, wc=1.0, v_lim=0.1 * params.U_dc, k_bal=0.0,
        I_2nd=0.0, h_inj=2.0, phi2_T1=-0.5 * math.pi, phi2_T2=0.5 * math.pi,
        has_fault=False, f_arm=0, f_sm=0, f_type=1, t_fault=1e300,
        t_event=1e300, t_cls_end=1e300, T0=1.0 / params.f0, eps_I=0.0,
        thr_T1=0.0, thr_T2=0.0, I_m_op=float(params.I_m),
        inj_enabled=False, inj_max=0.0, u_th=1e300, n_dwell=1, decim=1, n_ctrl=1,
    )
    base.update(overrides)
    return kernels.SimConst(**base)


def converter_step(state: ConverterState, gates, params: ConverterParams, freeze_caps=False):
    """Advance the plant by ``params.dt`` under the given 6xN gate matrix.

    ``gates`` may hold on-time fractions in ``[0, 1]`` as well as 0/1
    commands. Raises :class:`DivergenceError` when the guard trips.
    """
    gates = np.asarray(gates, dtype=np.float64)
    if gates.shape != state.u_c.shape:
        raise ValueError(f"gates shape {gates.shape} does not match {state.u_c.shape}")
    k = plant_constants(params, freeze_caps)
    active = (~state.bypassed).astype(np.float64)
    g = gates * active
    i_new, ins = kernels.plant_step(state.i_arm, state.u_c, g, state.health, active, state.t, k)
    u_c = state.u_c if freeze_caps else state.u_c + ins * i_new.reshape(-1, 1) * (params.dt / params.C)
    new = ConverterState(u_c.copy(), g, state.health.copy(), state.bypassed.copy(),
                         np.asarray(i_new).copy(), state.t + params.dt)
    if np.abs(new.i_arm).max() > k.i_guard or new.u_c.max() > k.u_guard:
        raise DivergenceError(f"state left the guard band at t={new.t:.6g} s")
    if new.u_c.min() < 0.0:
        warnings.warn("capacitor voltage went negative", NegativeVoltageWarning, stacklevel=2)
    return new


def inject_fault(state: ConverterState, spec: FaultSpec, n_sm=None):
    """Return a copy of ``state`` with the target submodule's health set; idempotent."""
    n = state.u_c.shape[1] if n_sm is None else n_sm
    if not 1 <= spec.sm_index <= n:
        raise ValueError(f"sm_index {spec.sm_index} out of range 1..{n}")
    new = state.copy()
    new.health[spec.arm_index, spec.sm_index - 1] = int(spec.fault_type)
    return new


__all__ = [
    "ARM_NAMES", "PHASES", "Health", "DivergenceError", "NegativeVoltageWarning",
    "ConverterParams", "SubmoduleState", "ConverterState", "FaultSpec",
    "circulating_current", "sm_inserted", "sm_output_voltage", "capacitor_step",
    "plant_constants", "converter_step", "inject_fault",
]
