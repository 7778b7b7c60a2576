"""Compiled twin of :class:`merge_advisor.sim.Simulation` for sweep throughput.

Same state, same update order and the same floating-point expressions as the
object-based engine, laid out in flat arrays so numba can compile the whole
run. Replay, trajectory recording and the command log stay in the reference
engine; tests compare the two on every supported feature.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GRAVITY = 9.81

# indices into the packed float parameter vector
DT, DURATION, WARMUP, LENGTH = 0, 1, 2, 3
R2_START, R3_START, RAMP_LEN, MERGE_X, MAIN_LEN = 4, 5, 6, 7, 8
A_M, B_N, S_MIN, T_S, DELTA, B_HARD = 9, 10, 11, 12, 13, 14
V_MAIN, V_R1, V_ENTRY_MAIN, NOSE_BRAKING = 15, 16, 17, 18
IDLE, EFF, MASS, ROLL, DRAG, RHO, ENERGY = 19, 20, 21, 22, 23, 24, 25
N_FLOAT = 26

STATUS_OK = 0
STATUS_COLLISION = 1


@njit(cache=True)
def _desired_gap(v, dv, prm):
    s = prm[S_MIN] + prm[T_S] * v + v * dv / (2.0 * math.sqrt(prm[A_M] * prm[B_N]))
    return max(s, 0.0)


@njit(cache=True)
def _free(v, vmax, prm):
    return prm[A_M] * (1.0 - (v / vmax) ** prm[DELTA])


@njit(cache=True)
def _idm(v, s, dv, vmax, prm):
    r = _desired_gap(v, dv, prm) / s
    a = prm[A_M] * (1.0 - (v / vmax) ** prm[DELTA] - r * r)
    return min(max(a, -prm[B_HARD]), prm[A_M])


@njit(cache=True)
def _fuel_rate(v, a, prm):
    resist = prm[ROLL] * prm[MASS] * GRAVITY + 0.5 * prm[RHO] * prm[DRAG] * v * v
    power = prm[MASS] * a * v + resist * v
    return prm[IDLE] + max(power, 0.0) / (prm[EFF] * prm[ENERGY])


@njit(cache=True)
def _idle(spawned_at, until, prm):
    start = max(spawned_at, prm[WARMUP])
    end = min(until, prm[DURATION])
    return prm[IDLE] * max(end - start, 0.0)


@njit(cache=True)
def _first_behind(pos, n, x):
    lo = 0
    hi = n
    while lo < hi:
        mid = (lo + hi) // 2
        if pos[mid] > x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def run_kernel(arr_main, arr_ramp, prm, tick_every, guidance_on, cooperative, check_follower):
    dt = prm[DT]
    L = prm[LENGTH]
    n_steps = arr_main.shape[0]
    n_m_total = int(arr_main.sum())
    n_r_total = int(arr_ramp.sum())

    qm_time = np.empty(n_m_total)
    qr_time = np.empty(n_r_total)
    qm_head = 0
    qm_tail = 0
    qr_head = 0
    qr_tail = 0
    fuel_m = np.zeros(n_m_total)
    fuel_r = np.zeros(n_r_total)

    cap_m = int(prm[MAIN_LEN] / L) + n_r_total + 8
    m_pos = np.empty(cap_m)
    m_spd = np.empty(cap_m)
    m_acc = np.empty(cap_m)
    m_org = np.empty(cap_m, dtype=np.int64)  # 0 mainline origin, 1 ramp origin
    m_ser = np.empty(cap_m, dtype=np.int64)
    nm = 0
    cap_r = int(prm[RAMP_LEN] / L) + 8
    r_pos = np.empty(cap_r)
    r_spd = np.empty(cap_r)
    r_acc = np.empty(cap_r)
    r_ser = np.empty(cap_r, dtype=np.int64)
    r_stop = np.zeros(cap_r, dtype=np.bool_)
    nr = 0

    merge_speeds = np.empty(n_r_total)
    n_merges = 0
    failures = 0
    exited = 0
    backlog = np.empty(n_steps // tick_every + 1, dtype=np.int64)
    n_backlog = 0
    cmd_target = -1
    cmd_accel = 0.0
    status = STATUS_OK
    fail_time = 0.0
    fail_lead = -1
    fail_follow = -1
    fail_road = -1

    for k in range(n_steps):
        t = k * dt

        # 1. arrivals and insertion
        for _ in range(arr_main[k]):
            qm_time[qm_tail] = t
            qm_tail += 1
        for _ in range(arr_ramp[k]):
            qr_time[qr_tail] = t
            qr_tail += 1
        if qm_head < qm_tail:
            ok = True
            if nm > 0:
                gap = m_pos[nm - 1] - L
                if gap < prm[S_MIN]:
                    ok = False
                else:
                    v_e = prm[V_ENTRY_MAIN]
                    if gap < _desired_gap(v_e, v_e - m_spd[nm - 1], prm):
                        ok = False
            if ok:
                m_pos[nm] = 0.0
                m_spd[nm] = prm[V_ENTRY_MAIN]
                m_acc[nm] = 0.0
                m_org[nm] = 0
                m_ser[nm] = qm_head
                fuel_m[qm_head] += _idle(qm_time[qm_head], t, prm)
                nm += 1
                qm_head += 1
        if qr_head < qr_tail:
            ok = True
            if nr > 0:
                gap = r_pos[nr - 1] - L
                if gap < prm[S_MIN]:
                    ok = False
                else:
                    v_e = prm[V_R1]
                    if gap < _desired_gap(v_e, v_e - r_spd[nr - 1], prm):
                        ok = False
            if ok:
                r_pos[nr] = 0.0
                r_spd[nr] = prm[V_R1]
                r_acc[nr] = 0.0
                r_ser[nr] = qr_head
                r_stop[nr] = False
                fuel_r[qr_head] += _idle(qr_time[qr_head], t, prm)
                nr += 1
                qr_head += 1

        # 2. guidance tick
        if k % tick_every == 0:
            if guidance_on:
                cmd_target = -1
                if nr > 0 and r_pos[0] >= prm[R2_START]:
                    x = prm[MERGE_X] - (prm[RAMP_LEN] - r_pos[0])
                    v = r_spd[0]
                    lead = -1
                    overlap = False
                    for j in range(nm):
                        rear = m_pos[j] - L
                        if rear > x:
                            if lead < 0 or rear < m_pos[lead] - L:
                                lead = j
                        elif m_pos[j] > x - L:
                            overlap = True
                            break
                    if overlap:
                        a = -prm[B_HARD]
                    elif lead < 0:
                        a = max(min(_free(v, prm[V_MAIN], prm), prm[A_M]), -prm[B_HARD])
                    else:
                        gap = m_pos[lead] - L - x
                        a = _idm(v, gap, v - m_spd[lead], prm[V_MAIN], prm)
                    cmd_target = r_ser[0]
                    cmd_accel = a
            backlog[n_backlog] = nr + (qr_tail - qr_head)
            n_backlog += 1

        # 3. accelerations
        for j in range(nm):
            if j == 0:
                m_acc[j] = _free(m_spd[j], prm[V_MAIN], prm)
            else:
                gap = m_pos[j - 1] - L - m_pos[j]
                m_acc[j] = _idm(m_spd[j], gap, m_spd[j] - m_spd[j - 1], prm[V_MAIN], prm)
        if cooperative and nr > 0 and r_pos[0] >= prm[R2_START]:
            x = prm[MERGE_X] - (prm[RAMP_LEN] - r_pos[0])
            rear = x - L
            i = _first_behind(m_pos, nm, rear)
            if i < nm:
                gap = rear - m_pos[i]
                if gap > 0:
                    a = _idm(m_spd[i], gap, m_spd[i] - r_spd[0], prm[V_MAIN], prm)
                    m_acc[i] = min(m_acc[i], a)
        for j in range(nr):
            vmax = prm[V_R1] if r_pos[j] < prm[R2_START] else prm[V_MAIN]
            if j == 0:
                a = _free(r_spd[j], vmax, prm)
            else:
                gap = r_pos[j - 1] - L - r_pos[j]
                a = _idm(r_spd[j], gap, r_spd[j] - r_spd[j - 1], vmax, prm)
            if cmd_target >= 0 and cmd_target == r_ser[j]:
                a = min(a, cmd_accel) if j > 0 else cmd_accel
            d = prm[RAMP_LEN] - r_pos[j]
            if d <= 0.01:
                a = min(a, 0.0)
            else:
                need = r_spd[j] * r_spd[j] / (2.0 * d)
                if need >= prm[NOSE_BRAKING]:
                    a = min(a, -need)
            r_acc[j] = max(min(a, prm[A_M]), -prm[B_HARD])

        # 4. integration
        for j in range(nm):
            v = m_spd[j] + m_acc[j] * dt
            if v < 0.0:
                v = 0.0
            m_spd[j] = v
            m_pos[j] += v * dt
        end = prm[RAMP_LEN]
        for j in range(nr):
            v = r_spd[j] + r_acc[j] * dt
            if v < 0.0:
                v = 0.0
            r_spd[j] = v
            r_pos[j] += v * dt
            if r_pos[j] >= end:
                r_pos[j] = end
                r_spd[j] = 0.0
            if not r_stop[j] and r_spd[j] < 0.1 and end - r_pos[j] < 1.0:
                r_stop[j] = True
                failures += 1

        for j in range(1, nm):
            if m_pos[j - 1] - L - m_pos[j] <= 0.0:
                status = STATUS_COLLISION
                fail_road = 0
                fail_lead = j - 1
                fail_follow = j
                break
        if status == STATUS_OK:
            for j in range(1, nr):
                if r_pos[j - 1] - L - r_pos[j] <= 0.0:
                    status = STATUS_COLLISION
                    fail_road = 1
                    fail_lead = j - 1
                    fail_follow = j
                    break
        if status != STATUS_OK:
            fail_time = t
            break

        # 5. lane changes, leading ramp vehicle first
        keep = 0
        for j in range(nr):
            merged = False
            if r_pos[j] >= prm[R3_START]:
                x = prm[MERGE_X] - (prm[RAMP_LEN] - r_pos[j])
                v = r_spd[j]
                i = _first_behind(m_pos, nm, x)
                ok = True
                if i > 0:
                    gap = m_pos[i - 1] - L - x
                    need = _desired_gap(v, v - m_spd[i - 1], prm)
                    ok = gap > 0 and gap >= need
                if i < nm:
                    gap = x - L - m_pos[i]
                    need = _desired_gap(m_spd[i], m_spd[i] - v, prm)
                    if check_follower:
                        ok = ok and gap > 0 and gap >= need
                    else:
                        ok = ok and gap > 0
                if ok:
                    for q in range(nm, i, -1):
                        m_pos[q] = m_pos[q - 1]
                        m_spd[q] = m_spd[q - 1]
                        m_acc[q] = m_acc[q - 1]
                        m_org[q] = m_org[q - 1]
                        m_ser[q] = m_ser[q - 1]
                    m_pos[i] = x
                    m_spd[i] = v
                    m_acc[i] = r_acc[j]
                    m_org[i] = 1
                    m_ser[i] = r_ser[j]
                    nm += 1
                    merge_speeds[n_merges] = v
                    n_merges += 1
                    merged = True
            if not merged:
                r_pos[keep] = r_pos[j]
                r_spd[keep] = r_spd[j]
                r_acc[keep] = r_acc[j]
                r_ser[keep] = r_ser[j]
                r_stop[keep] = r_stop[j]
                keep += 1
        nr = keep

        # 6. fuel after warm-up
        if t >= prm[WARMUP]:
            for j in range(nm):
                inc = _fuel_rate(m_spd[j], m_acc[j], prm) * dt
                if m_org[j] == 0:
                    fuel_m[m_ser[j]] += inc
                else:
                    fuel_r[m_ser[j]] += inc
            for j in range(nr):
                fuel_r[r_ser[j]] += _fuel_rate(r_spd[j], r_acc[j], prm) * dt

        # 7. exits
        keep = 0
        for j in range(nm):
            if m_pos[j] > prm[MAIN_LEN]:
                exited += 1
            else:
                m_pos[keep] = m_pos[j]
                m_spd[keep] = m_spd[j]
                m_acc[keep] = m_acc[j]
                m_org[keep] = m_org[j]
                m_ser[keep] = m_ser[j]
                keep += 1
        nm = keep

    if status == STATUS_OK:
        for q in range(qm_head, qm_tail):
            fuel_m[q] += _idle(qm_time[q], prm[DURATION], prm)
        for q in range(qr_head, qr_tail):
            fuel_r[q] += _idle(qr_time[q], prm[DURATION], prm)

    counts = np.array([status, qm_tail, qr_tail, qm_head, qr_head, nm, nr, exited,
                       failures, n_merges, n_backlog, fail_road, fail_lead, fail_follow],
                      dtype=np.int64)
    return counts, fail_time, fuel_m, fuel_r, merge_speeds[:n_merges], backlog[:n_backlog]
