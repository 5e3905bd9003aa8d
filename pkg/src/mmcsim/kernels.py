"""Hot numeric kernels.

Everything here is written in array-style numpy that numba can also compile,
so the same source runs jitted (default) or interpreted when
``MMCSIM_DISABLE_NUMBA=1``. Arrays use the arm order
``ap, an, bp, bn, cp, cn``; arm ``a`` belongs to phase ``a // 2`` and is an
upper arm when ``a % 2 == 0``.
"""
from collections import namedtuple

import numpy as np

from ._accel import jit

HEALTHY = 0
T1_OPEN = 1
T2_OPEN = 2

# classifier outcome
INDETERMINATE = 0

STATUS_OK = 0
STATUS_DIVERGED = 3

# the classification window is tracked as this many min/max bins
N_BINS = 20

PHASE_OFFSETS = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])

SimConst = namedtuple(
    "SimConst",
    [
        # plant
        "U_dc", "U_m", "C", "U_C_nom", "L_s", "R_s", "omega", "f_c", "dt",
        "L_ac", "R_ac", "E_g", "delta_g", "i_guard", "u_guard", "freeze_caps",
        # control
        "I_dc3", "kp", "kr", "wc", "v_lim", "k_bal",
        "I_2nd", "h_inj", "phi2_T1", "phi2_T2",
        # fault
        "has_fault", "f_arm", "f_sm", "f_type", "t_fault",
        # detection
        "t_event", "t_cls_end", "T0", "eps_I", "thr_T1", "thr_T2", "I_m_op",
        "inj_enabled", "inj_max", "u_th", "n_dwell",
        # recording and control sampling (plant steps per control sample)
        "decim", "n_ctrl",
    ],
)


@jit
def sm_inserted(gate, health, bypassed, i_arm):
    """Scalar conduction decision for one submodule."""
    if bypassed:
        return False
    if health == T1_OPEN:
        return gate == 1 and i_arm >= 0.0
    if health == T2_OPEN:
        return gate == 1 or i_arm >= 0.0
    return gate == 1


@jit
def inserted_matrix(gates, health, active, i_arm):
    """Array form of :func:`sm_inserted`; returns 0/1 floats shaped like ``gates``."""
    pos = (i_arm >= 0.0).astype(np.float64).reshape(-1, 1)
    h0 = (health == HEALTHY).astype(np.float64)
    h1 = (health == T1_OPEN).astype(np.float64)
    h2 = (health == T2_OPEN).astype(np.float64)
    ins = h0 * gates + h1 * gates * pos + h2 * (gates + pos - gates * pos)
    return ins * active


@jit
def carrier_values(t, f_c, n):
    """Unit triangular carriers, one per submodule, shifted by 1/n of a period."""
    x = t * f_c + np.arange(n) / n
    frac = x - np.floor(x)
    return np.abs(2.0 * frac - 1.0)


@jit
def balancing_offsets(u_c, active, i_arm, k_bal):
    """Per-SM modulation offsets pulling each capacitor toward its arm mean."""
    n_act = np.maximum(active.sum(axis=1), 1.0)
    mean = (u_c * active).sum(axis=1) / n_act
    sgn = 2.0 * (i_arm >= 0.0).astype(np.float64) - 1.0
    return k_bal * sgn.reshape(-1, 1) * (mean.reshape(-1, 1) - u_c) * active


@jit
def pwm_gates(u_ref, offsets, carriers, active, u_c_nom):
    """Compare saturated normalized signals with the carriers.

    Bypassed submodules get gate 0 and the arm reference is spread over the
    remaining active ones.
    """
    n_act = np.maximum(active.sum(axis=1), 1.0)
    s = u_ref.reshape(-1, 1) / (n_act.reshape(-1, 1) * u_c_nom) + offsets
    s = np.minimum(np.maximum(s, 0.0), 1.0)
    on = (s >= carriers.reshape(1, -1)) & (s > 0.0)
    return on.astype(np.float64) * active


@jit
def pwm_duty(u_ref, offsets, t, dt, f_c, active, u_c_nom):
    """Fraction of ``[t, t + dt)`` each submodule spends gated on.

    Same modulation law as :func:`pwm_gates`, but the carrier crossings are
    located exactly inside the step instead of being sampled at ``t``. With a
    unit triangle, ``s >= carrier`` holds on the phase interval
    ``[(1 - s)/2, (1 + s)/2]`` of every period, so the on-time is an interval
    overlap. Requires ``f_c * dt < 1``.
    """
    n = offsets.shape[1]
    n_act = np.maximum(active.sum(axis=1), 1.0)
    s = u_ref.reshape(-1, 1) / (n_act.reshape(-1, 1) * u_c_nom) + offsets
    s = np.minimum(np.maximum(s, 0.0), 1.0)
    x = t * f_c + np.arange(n) / n
    p0 = (x - np.floor(x)).reshape(1, -1)
    dp = f_c * dt
    p1 = p0 + dp
    a = 0.5 * (1.0 - s)
    b = 0.5 * (1.0 + s)
    on = (np.maximum(np.minimum(p1, b) - np.maximum(p0, a), 0.0)
          + np.maximum(np.minimum(p1, b + 1.0) - np.maximum(p0, a + 1.0), 0.0))
    return np.minimum(on / dp, 1.0) * active


@jit
def pr_step(err, x1, x2, kp, kr, wc, w_res, limit, dt):
    """One step of a proportional + multi-resonant regulator, in place.

    ``x1``/``x2`` are (channels, resonators) states of
    ``s / (s^2 + 2 wc s + w^2)``; each resonator contributes ``kr * 2 wc * x2``
    so its gain at resonance is ``kr``. Integration is skipped on channels
    whose output is clamped and whose error would push further into the clamp.
    """
    n_ch = err.shape[0]
    n_res = w_res.shape[0]
    out = np.empty(n_ch)
    for c in range(n_ch):
        y_old = kp * err[c]
        for r in range(n_res):
            y_old += kr * 2.0 * wc * x2[c, r]
        new1 = np.empty(n_res)
        new2 = np.empty(n_res)
        y = kp * err[c]
        for r in range(n_res):
            w = w_res[r]
            new2[r] = x2[c, r] + dt * (err[c] - w * w * x1[c, r] - 2.0 * wc * x2[c, r])
            new1[r] = x1[c, r] + dt * new2[r]
            y += kr * 2.0 * wc * new2[r]
        if abs(y) > limit and y * err[c] > 0.0:
            y = y_old
        else:
            for r in range(n_res):
                x1[c, r] = new1[r]
                x2[c, r] = new2[r]
        out[c] = min(max(y, -limit), limit)
    return out


@jit
def location_update(u_c, active, dwell, flagged, u_th, n_dwell):
    """Advance the per-SM threshold/dwell timers of one arm, in place.

    Returns ``(deviation, newly_flagged)``. ``dwell`` counts consecutive
    samples above ``u_th``; a submodule is flagged once that count reaches
    ``n_dwell``.
    """
    n = u_c.shape[0]
    dev = np.zeros(n)
    newly = np.zeros(n, dtype=np.bool_)
    n_act = active.sum()
    total = (u_c * active).sum()
    for i in range(n):
        if active[i] == 0.0 or flagged[i] or n_act < 2.0:
            dwell[i] = 0
            continue
        ref = (total - u_c[i]) / (n_act - 1.0)
        dev[i] = abs(u_c[i] - ref)
        if dev[i] > u_th:
            dwell[i] += 1
        else:
            dwell[i] = 0
        if dwell[i] >= n_dwell:
            flagged[i] = True
            newly[i] = True
    return dev, newly


@jit
def classify_polarity(i_min, i_max, eps):
    """Fault type from the extreme values of the faulty-arm current.

    A current confined to ``(-eps, eps)`` reads as T2: an open upper switch
    leaves the positive path intact, so positive peaks that small mean
    positive conduction is what is blocked.
    """
    if i_max < eps:
        return T2_OPEN
    if i_min > -eps:
        return T1_OPEN
    return INDETERMINATE


@jit
def advance_currents(i_arm, u_arm, t, k):
    """Integrate the arm currents one step; returns the new (6,) array.

    Circulating loop per phase: ``2 L di_z/dt = U_dc - u_p - u_n - 2 R i_z``.
    Output loop against a grid source behind ``L_ac``/``R_ac`` with an
    isolated neutral:
    ``(L/2 + L_ac) di_x/dt = (u_n - u_p)/2 - v_g - v_N - (R/2 + R_ac) i_x``.
    Resistive terms are taken implicitly.
    """
    i_p = i_arm[0::2]
    i_n = i_arm[1::2]
    u_p = u_arm[0::2]
    u_n = u_arm[1::2]
    i_z = 0.5 * (i_p + i_n)
    i_x = i_p - i_n
    dt = k.dt
    i_z = (i_z + dt / (2.0 * k.L_s) * (k.U_dc - u_p - u_n)) / (1.0 + dt * k.R_s / k.L_s)
    # midpoint sample, consistent with the step-averaged arm voltages
    v_g = k.E_g * np.sin(k.omega * (t + 0.5 * dt) + PHASE_OFFSETS + k.delta_g)
    drive = 0.5 * (u_n - u_p) - v_g
    drive = drive - drive.mean()
    l_eq = 0.5 * k.L_s + k.L_ac
    r_eq = 0.5 * k.R_s + k.R_ac
    i_x = (i_x + dt / l_eq * drive) / (1.0 + dt * r_eq / l_eq)
    out = np.empty(6)
    out[0::2] = i_z + 0.5 * i_x
    out[1::2] = i_z - 0.5 * i_x
    return out


@jit
def plant_step(i_arm, u_c, gates, health, active, t, k):
    """Advance arm currents one step; return ``(i_new, inserted fractions)``.

    Healthy conduction does not depend on the current sign. An arm holding a
    faulted submodule does, and deciding from the sign at the start of the
    step makes the current chatter around zero with an amplitude set by
    ``dt``. Instead both sign hypotheses are advanced (the update is affine
    in the arm voltages) and the self-consistent one is kept. When neither
    is consistent the current is clamped by the open switch: the two
    hypotheses are blended so the new arm current is exactly zero.
    """
    ins = inserted_matrix(gates, health, active, i_arm)
    u_arm = (ins * u_c).sum(axis=1)
    i_new = advance_currents(i_arm, u_arm, t, k)
    n_arm, n_sm = u_c.shape
    for a in range(n_arm):
        faulty = False
        for j in range(n_sm):
            if health[a, j] != HEALTHY and active[a, j] > 0.0:
                faulty = True
        if not faulty:
            continue
        ins_p = ins[a].copy()
        ins_n = ins[a].copy()
        for j in range(n_sm):
            if active[a, j] > 0.0:
                g = gates[a, j]
                if health[a, j] == T1_OPEN:
                    ins_p[j] = g
                    ins_n[j] = 0.0
                elif health[a, j] == T2_OPEN:
                    ins_p[j] = 1.0
                    ins_n[j] = g
        u_p = u_arm.copy()
        u_p[a] = (ins_p * u_c[a]).sum()
        u_n = u_arm.copy()
        u_n[a] = (ins_n * u_c[a]).sum()
        i_p = advance_currents(i_arm, u_p, t, k)
        i_n = advance_currents(i_arm, u_n, t, k)
        # more inserted voltage never raises the current, so i_p[a] <= i_n[a]
        if i_p[a] >= 0.0:
            lam = 1.0
        elif i_n[a] < 0.0:
            lam = 0.0
        else:
            lam = i_n[a] / (i_n[a] - i_p[a])
        i_new = lam * i_p + (1.0 - lam) * i_n
        if lam > 0.0 and lam < 1.0:
            i_new[a] = 0.0
        ins[a] = lam * ins_p + (1.0 - lam) * ins_n
        u_arm[a] = lam * u_p[a] + (1.0 - lam) * u_n[a]
    return i_new, ins


@jit
def run_loop(k, n_steps, t0, u_c, health, active, i_arm, x1, x2, w_res,
             rec_t, rec_i, rec_iz, rec_uc, rec_g, rec_inj, rec_flag,
             flag_time, info):
    """Fold the converter, controllers and fault-location logic over time.

    State arrays are updated in place. ``info`` receives, in order: event
    time, classified type, injection start, injection end, first flag time,
    located SM index, diverged step, negative-voltage count, the minimum
    and maximum faulty-arm current of the last classification window, and
    the time the fault type was resolved.
    Returns a status code.
    """
    n_sm = u_c.shape[1]
    n_arm = u_c.shape[0]
    n_phase = 3
    inst = k.f_arm
    dwell = np.zeros(n_sm, dtype=np.int64)
    flagged = np.zeros(n_sm, dtype=np.bool_)
    fault_applied = False
    event_fired = False
    cls = INDETERMINATE
    at_risk = False
    inj_on = False
    inj_done = False
    inj_start = -1.0
    inj_end = -1.0
    located = False
    win_min = 1e300
    win_max = -1e300
    bin_len = k.T0 / N_BINS
    bmin = np.full(N_BINS, 1e300)
    bmax = np.full(N_BINS, -1e300)
    cur_bin = -1
    n_used = 0
    neg_count = 0
    status = STATUS_OK
    info[6] = -1.0
    t_s = k.dt * k.n_ctrl
    u_ref = np.zeros(n_arm)
    offsets = np.zeros((n_arm, n_sm))
    inj = np.zeros(n_phase)
    i_z = np.zeros(n_phase)
    for step in range(n_steps):
        t = t0 + step * k.dt
        if k.has_fault and not fault_applied and t >= k.t_fault:
            health[k.f_arm, k.f_sm] = k.f_type
            fault_applied = True

        i_z = 0.5 * (i_arm[0::2] + i_arm[1::2])

        if step % k.n_ctrl == 0:
            # arm-level detector stub and sliding-window polarity classifier
            if fault_applied and cls == INDETERMINATE and t < k.t_cls_end:
                b = int((t - k.t_fault) / bin_len)
                slot = b % N_BINS
                if b != cur_bin:
                    cur_bin = b
                    bmin[slot] = 1e300
                    bmax[slot] = -1e300
                    if n_used < N_BINS:
                        n_used += 1
                v = i_arm[k.f_arm]
                if v < bmin[slot]:
                    bmin[slot] = v
                if v > bmax[slot]:
                    bmax[slot] = v
                if t >= k.t_event:
                    if not event_fired:
                        event_fired = True
                        info[0] = t
                    win_min = bmin[:n_used].min()
                    win_max = bmax[:n_used].max()
                    cls = classify_polarity(win_min, win_max, k.eps_I)
                    if cls == T1_OPEN:
                        at_risk = k.I_m_op < k.thr_T1
                    elif cls == T2_OPEN:
                        at_risk = k.I_m_op < k.thr_T2
                    if cls != INDETERMINATE:
                        info[10] = t
                    info[1] = cls
            elif fault_applied and not event_fired and t >= k.t_event:
                event_fired = True
                info[0] = t

            # injection supervisor
            if event_fired and not inj_done:
                if inj_on:
                    if located or t - inj_start >= k.inj_max:
                        inj_on = False
                        inj_done = True
                        inj_end = t
                        # drop the resonant memory of the injected pattern
                        x1[:] = 0.0
                        x2[:] = 0.0
                elif k.inj_enabled and at_risk and not located:
                    inj_on = True
                    inj_start = t

            # references, held until the next control sample; evaluated at
            # mid-hold so the zero-order hold adds no fundamental phase lag
            theta = k.omega * (t + 0.5 * t_s) + PHASE_OFFSETS
            e = k.U_m * np.sin(theta)
            i_ref = np.full(n_phase, k.I_dc3)
            inj = np.zeros(n_phase)
            if inj_on:
                phi2 = k.phi2_T1 if cls == T1_OPEN else k.phi2_T2
                inj = k.I_2nd * np.sin(k.h_inj * theta + phi2)
                i_ref = i_ref + inj
            v_z = pr_step(i_ref - i_z, x1, x2, k.kp, k.kr, k.wc, w_res, k.v_lim, t_s)
            u_ref[0::2] = 0.5 * k.U_dc - e - v_z
            u_ref[1::2] = 0.5 * k.U_dc + e - v_z
            offsets = balancing_offsets(u_c, active, i_arm, k.k_bal)

            # fault location on the detected arm, finished once an SM is found
            if event_fired and not located:
                dev, newly = location_update(u_c[inst].copy(), active[inst].copy(), dwell,
                                             flagged, k.u_th, k.n_dwell)
                for i in range(n_sm):
                    if newly[i]:
                        flag_time[i] = t
                        active[inst, i] = 0.0
                        if not located:
                            located = True
                            info[4] = t
                            info[5] = i

        gates = pwm_duty(u_ref, offsets, t, k.dt, k.f_c, active, k.U_C_nom)

        if step % k.decim == 0:
            r = step // k.decim
            rec_t[r] = t
            rec_i[r] = i_arm
            rec_iz[r] = i_z
            rec_uc[r] = u_c[inst]
            rec_g[r] = gates.sum(axis=1)
            rec_inj[r] = inj[inst // 2]
            rec_flag[r] = flagged.astype(np.float64)

        # plant: voltages from present currents, then currents, then capacitors
        i_new, ins = plant_step(i_arm, u_c, gates, health, active, t, k)
        i_arm[:] = i_new
        if not k.freeze_caps:
            u_c += ins * i_arm.reshape(-1, 1) * (k.dt / k.C)
        if u_c.min() < 0.0:
            neg_count += 1
        if np.abs(i_arm).max() > k.i_guard or u_c.max() > k.u_guard:
            status = STATUS_DIVERGED
            info[6] = step
            break

    info[2] = inj_start
    info[3] = inj_end if inj_end >= 0.0 or not inj_on else t0 + n_steps * k.dt
    info[7] = neg_count
    info[8] = win_min
    info[9] = win_max
    return status
