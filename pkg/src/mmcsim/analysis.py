"""Closed-form power balance, unipolarity thresholds and their sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Health


def dc_current(I_m, m, cos_phi):
    """DC-side current from AC/DC power balance, ``(3m/4) I_m cos_phi``."""
    return 0.75 * m * I_m * cos_phi


@dataclass(frozen=True)
class CriterionInput:
    U_dc: float = 24e3
    N: int = 12
    f_c: float = 1200.0
    L_s: float = 8e-3
    m: float = 0.9
    cos_phi: float = 1.0
    N_f: int = 1

    def validate(self):
        for name in ("U_dc", "N", "f_c", "L_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.m > 0:
            raise ValueError("m must be positive")
        if not 0 <= self.cos_phi <= 1:
            raise ValueError("cos_phi must lie in [0, 1]")
        if not 1 <= self.N_f <= self.N:
            raise ValueError("N_f must lie in 1..N")
        if self.m * self.cos_phi >= 2:
            raise ValueError("m * cos_phi must stay below 2")
        return self


def unipolarity_threshold(inp: CriterionInput, fault_type):
    """Phase-current amplitude below which the faulty arm current turns unipolar.

    ``U_dc N_f / ((2 -+ m cos_phi) N f_c L_s)``, minus sign for T1 and plus for T2.
    """
    inp.validate()
    ft = Health.parse(fault_type)
    mc = inp.m * inp.cos_phi
    if ft == Health.T1_OPEN:
        den = 2.0 - mc
    elif ft == Health.T2_OPEN:
        den = 2.0 + mc
    else:
        raise ValueError("fault_type must be T1 or T2")
    return inp.U_dc * inp.N_f / (den * inp.N * inp.f_c * inp.L_s)


@dataclass(frozen=True)
class SweepCase:
    """One impact-factor case: base parameters plus the N range swept."""

    case_id: int
    params: CriterionInput
    label: str = ""
    fault_types: tuple = (Health.T1_OPEN, Health.T2_OPEN)
    n_values: tuple = field(default_factory=lambda: tuple(range(4, 41, 2)))

    def __post_init__(self):
        if not self.n_values:
            raise ValueError("sweep range must be non-empty")


def _case(cid, label, **kw):
    base = CriterionInput(**kw)
    return SweepCase(cid, base, label)


# The nine built-in cases; entries the table leaves open keep m = 0.9 and N_f = 1.
TABLE_CASES = (
    _case(1, "L_s=8mH", L_s=8e-3, cos_phi=1.0, f_c=1200.0, m=0.9),
    _case(2, "L_s=5mH", L_s=5e-3, cos_phi=1.0, f_c=1200.0, m=0.9),
    _case(3, "f_c=2kHz,m=0.9", L_s=8e-3, cos_phi=1.0, f_c=2000.0, m=0.9),
    _case(4, "f_c=2kHz,m=0.8", L_s=8e-3, cos_phi=1.0, f_c=2000.0, m=0.8),
    _case(5, "cos_phi=1", L_s=8e-3, cos_phi=1.0, f_c=1200.0, m=0.9),
    _case(6, "cos_phi=0.86", L_s=8e-3, cos_phi=0.86, f_c=1200.0, m=0.9),
    _case(7, "cos_phi=0,N_f=1", L_s=8e-3, cos_phi=0.0, f_c=1200.0, m=0.9, N_f=1),
    _case(8, "cos_phi=0,N_f=2", L_s=8e-3, cos_phi=0.0, f_c=1200.0, m=0.9, N_f=2),
    _case(9, "cos_phi=0,N_f=3", L_s=8e-3, cos_phi=0.0, f_c=1200.0, m=0.9, N_f=3),
)

# figure groups the cases are plotted in
FIGURE_GROUPS = {
    "inductance": (1, 2),
    "modulation": (3, 4),
    "power_factor": (5, 6),
    "faulty_count": (7, 8, 9),
}


def get_cases(ids=None):
    by_id = {c.case_id: c for c in TABLE_CASES}
    if ids is None:
        return list(TABLE_CASES)
    out = []
    for i in ids:
        if int(i) not in by_id:
            raise ValueError(f"unknown case id {i}; valid ids are 1..{len(TABLE_CASES)}")
        out.append(by_id[int(i)])
    return out


def impact_sweep(cases):
    """Threshold rows ``(case_id, N, I_T1, I_T2, error)`` over each case's N range.

    Rows whose parameters are invalid for a given N carry NaN thresholds and
    the error text instead of aborting the sweep.
    """
    rows = []
    for case in cases:
        for n in case.n_values:
            inp = replace(case.params, N=int(n))
            vals = {}
            err = ""
            for ft in (Health.T1_OPEN, Health.T2_OPEN):
                try:
                    vals[ft] = unipolarity_threshold(inp, ft)
                except ValueError as exc:
                    vals[ft] = math.nan
                    err = str(exc)
            rows.append((case.case_id, int(n), vals[Health.T1_OPEN], vals[Health.T2_OPEN], err))
    return rows


def faulty_current_component(S, U_c, L_s, dt, fault_type, condition=None):
    """Integral of the arm-current deficit caused by an open switch.

    T1: ``sum(S U_c / (2 L_s) dt)`` over samples where the arm current is
    negative; T2: ``sum((S - 1) U_c / (2 L_s) dt)`` where it is positive.
    ``condition`` is a boolean mask of the samples where that sign holds
    (default: all samples). ``S`` may be a 0/1 trace or on-time fractions.
    """
    ft = Health.parse(fault_type)
    s = np.asarray(S, dtype=np.float64)
    mask = np.ones_like(s, dtype=bool) if condition is None else np.asarray(condition, dtype=bool)
    if ft == Health.T1_OPEN:
        integrand = s
    elif ft == Health.T2_OPEN:
        integrand = s - 1.0
    else:
        raise ValueError("fault_type must be T1 or T2")
    return float(np.sum(integrand[mask]) * U_c * dt / (2.0 * L_s))


__all__ = [
    "dc_current", "CriterionInput", "unipolarity_threshold", "SweepCase",
    "TABLE_CASES", "FIGURE_GROUPS", "get_cases", "impact_sweep", "faulty_current_component",
]
