"""Compiled per-problem SCA loop.

The numpy batch in gpsolver runs all problems of a batch in lockstep, so
every iteration pays full-batch array work until the slowest problem
converges, and each tiny array op costs more in dispatch than in flops.
This kernel runs the identical algorithm one problem at a time in nopython
mode: same condensation, same projected damped Newton with backtracking,
same acceptance and stopping rules, same constants. Numbers can drift from
the numpy path at the last-ulp level (different summation and libm
rounding), nothing more.

Compiled lazily; gpsolver falls back to the numpy implementation when
numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:          # pragma: no cover - exercised only without numba
    njit = None

_LN2 = float(np.log(2.0))
_LN10 = float(np.log(10.0))


def available() -> bool:
    return njit is not None


if njit is not None:

    @njit(cache=True)
    def _solve_spd(H, rhs, n, out):
        """Gaussian elimination with partial pivoting; False on a dead pivot."""
        A = np.empty((n, n + 1))
        for i in range(n):
            for j in range(n):
                A[i, j] = H[i, j]
            A[i, n] = rhs[i]
        for c in range(n):
            piv = c
            big = abs(A[c, c])
            for r in range(c + 1, n):
                if abs(A[r, c]) > big:
                    big = abs(A[r, c])
                    piv = r
            if big <= 1e-300:
                return False
            if piv != c:
                for j in range(c, n + 1):
                    tmp = A[c, j]
                    A[c, j] = A[piv, j]
                    A[piv, j] = tmp
            inv = 1.0 / A[c, c]
            for r in range(c + 1, n):
                fac = A[r, c] * inv
                if fac != 0.0:
                    for j in range(c, n + 1):
                        A[r, j] -= fac * A[c, j]
        for i in range(n - 1, -1, -1):
            acc = A[i, n]
            for j in range(i + 1, n):
                acc -= A[i, j] * out[j]
            out[i] = acc / A[i, i]
        return True

    @njit(cache=True)
    def _row_objective(W, SV, SC, DC, DK, P, T, n):
        f = 0.0
        for t in range(T):
            if W[t] == 0.0:
                continue
            sv = SV[t]
            s = SC[t] * P[sv] if sv >= 0 else SC[t]
            d = DC[t]
            for v in range(n):
                d += DK[t, v] * P[v]
            f += W[t] * np.log2(1.0 + s / d)
        return f

    @njit(cache=True)
    def _row_g(q, Z, WL, DC, DK, P, T, n):
        acc = 0.0
        for v in range(n):
            acc += q[v] * Z[v]
        for t in range(T):
            if WL[t] == 0.0:
                continue
            d = DC[t]
            for v in range(n):
                d += DK[t, v] * P[v]
            acc -= WL[t] * np.log(d)
        return acc

    @njit(cache=True)
    def _row_inner(q, Z, FM, lo, hi, WL, DC, DK, T, n,
                   max_inner_iters, inner_tol):
        """Projected damped Newton for one problem; Z is updated in place."""
        P = np.empty(n)
        Pt = np.empty(n)
        grad = np.empty(n)
        step = np.empty(n)
        trial = np.empty(n)
        H = np.empty((n, n))
        U = np.empty((T, n))
        WU = np.empty((T, n))
        diag = np.empty(n)
        frozen = np.empty(n, np.bool_)

        any_free = False
        for v in range(n):
            if Z[v] < lo[v]:
                Z[v] = lo[v]
            elif Z[v] > hi[v]:
                Z[v] = hi[v]
            P[v] = np.exp(Z[v]) if FM[v] else 0.0
            if FM[v]:
                any_free = True
        if not any_free:
            return
        g = _row_g(q, Z, WL, DC, DK, P, T, n)

        for _it in range(max_inner_iters):
            for v in range(n):
                P[v] = np.exp(Z[v]) if FM[v] else 0.0
            for v in range(n):
                diag[v] = 0.0
            for t in range(T):
                if WL[t] == 0.0:
                    for v in range(n):
                        U[t, v] = 0.0
                        WU[t, v] = 0.0
                    continue
                d = DC[t]
                for v in range(n):
                    d += DK[t, v] * P[v]
                for v in range(n):
                    u = DK[t, v] * P[v] / d
                    U[t, v] = u
                    wu = WL[t] * u
                    WU[t, v] = wu
                    diag[v] += wu
            for v in range(n):
                grad[v] = (q[v] - diag[v]) if FM[v] else 0.0
                frozen[v] = (not FM[v]) \
                    or (Z[v] <= lo[v] + 1e-12 and grad[v] < 0.0) \
                    or (Z[v] >= hi[v] - 1e-12 and grad[v] > 0.0)
            for a in range(n):
                for b2 in range(n):
                    if frozen[a] or frozen[b2]:
                        H[a, b2] = 0.0
                    else:
                        acc = 0.0
                        for t in range(T):
                            acc += WU[t, a] * U[t, b2]
                        H[a, b2] = -acc
            for v in range(n):
                H[v, v] += 1.0 if frozen[v] else diag[v] + 1e-12 + 1e-9 * diag[v]
                grad[v] = 0.0 if frozen[v] else grad[v]
            ok = _solve_spd(H, grad, n, step)
            if not ok:
                for v in range(n):
                    step[v] = grad[v]
            for v in range(n):
                if frozen[v]:
                    step[v] = 0.0

            t_ls = 1.0
            improved = False
            g_new = g
            for _half in range(25):
                incr = 0.0
                for v in range(n):
                    z = Z[v] + t_ls * step[v]
                    if z < lo[v]:
                        z = lo[v]
                    elif z > hi[v]:
                        z = hi[v]
                    trial[v] = z
                    incr += grad[v] * (z - Z[v])
                for v in range(n):
                    Pt[v] = np.exp(trial[v]) if FM[v] else 0.0
                gt = _row_g(q, trial, WL, DC, DK, Pt, T, n)
                bump = incr if incr > 0.0 else 0.0
                if gt >= g + 1e-4 * bump - 1e-15:
                    for v in range(n):
                        Z[v] = trial[v]
                    g_new = gt
                    improved = True
                    break
                t_ls *= 0.5
            if not improved:
                return
            delta = g_new - g
            g = g_new
            if delta <= inner_tol * (1.0 + abs(g_new)):
                return

    @njit(cache=True)
    def sca_rows(W, SV, SC, DC, DK, UB, E, F0, FM, P_init,
                 p_min_w, sca_tol_db, stall_rel, inner_tol,
                 max_sca_iters, max_inner_iters, trust_db,
                 want_trace, tr, tcount):
        """Full SCA per problem row. Returns (P, f, converged, iters)."""
        B, T = W.shape
        n = UB.shape[1]
        P_out = np.zeros((B, n))
        f_out = np.zeros(B)
        conv = np.zeros(B, np.bool_)
        iters = np.zeros(B, np.int64)
        lo_v = np.log(p_min_w)

        q = np.empty(n)
        Z0 = np.empty(n)
        Z = np.empty(n)
        lo = np.empty(n)
        hi = np.empty(n)
        lo_s = np.empty(n)
        hi_s = np.empty(n)
        P = np.empty(n)
        P_new = np.empty(n)
        WL = np.empty(T)

        for b in range(B):
            any_free = False
            for v in range(n):
                lo[v] = lo_v
                ubv = UB[b, v]
                if FM[b, v]:
                    any_free = True
                    hi[v] = np.log(ubv if ubv > p_min_w else p_min_w)
                else:
                    hi[v] = lo_v
            for t in range(T):
                WL[t] = W[b, t] / _LN2
            for v in range(n):
                if FM[b, v]:
                    ubw = UB[b, v] if UB[b, v] > p_min_w else p_min_w
                    pv = P_init[b, v]
                    if pv < p_min_w:
                        pv = p_min_w
                    elif pv > ubw:
                        pv = ubw
                    P[v] = pv
                else:
                    P[v] = 0.0
            f = _row_objective(W[b], SV[b], SC[b], DC[b], DK[b], P, T, n)
            if want_trace:
                tr[b, 0] = f
                tcount[b] = 1
            if not any_free:
                for v in range(n):
                    P_out[b, v] = P[v]
                f_out[b] = f
                conv[b] = True
                continue

            done = False
            for _s in range(max_sca_iters):
                if done:
                    break
                # monomial condensation at the current point
                for v in range(n):
                    q[v] = 0.0
                for t in range(T):
                    if WL[t] == 0.0:
                        continue
                    pt0 = F0[b, t]
                    for v in range(n):
                        pt0 += E[b, t, v] * P[v]
                    wq = WL[t] / pt0
                    for v in range(n):
                        q[v] += wq * E[b, t, v] * P[v]
                for v in range(n):
                    pv = P[v] if P[v] > p_min_w else p_min_w
                    Z0[v] = np.log(pv)
                    Z[v] = Z0[v]
                if trust_db > 0.0:
                    r = trust_db * _LN10 / 10.0
                    for v in range(n):
                        lo_s[v] = lo[v] if lo[v] > Z0[v] - r else Z0[v] - r
                        hi_s[v] = hi[v] if hi[v] < Z0[v] + r else Z0[v] + r
                else:
                    for v in range(n):
                        lo_s[v] = lo[v]
                        hi_s[v] = hi[v]
                _row_inner(q, Z, FM[b], lo_s, hi_s, WL, DC[b], DK[b], T, n,
                           max_inner_iters, inner_tol)
                move = 0.0
                for v in range(n):
                    if FM[b, v]:
                        P_new[v] = np.exp(Z[v])
                        ref = P[v] if P[v] > p_min_w else p_min_w
                        mv = abs(10.0 * np.log10(P_new[v] / ref))
                        if mv > move:
                            move = mv
                    else:
                        P_new[v] = 0.0
                f_new = _row_objective(W[b], SV[b], SC[b], DC[b], DK[b],
                                       P_new, T, n)
                iters[b] += 1
                accept = f_new >= f - 1e-12 * (1.0 + abs(f))
                stalled = accept and (f_new - f <= stall_rel * (1.0 + abs(f)))
                if accept:
                    for v in range(n):
                        P[v] = P_new[v]
                    f = f_new
                    if want_trace:
                        tr[b, tcount[b]] = f
                        tcount[b] += 1
                if (accept and move < sca_tol_db) or stalled or not accept:
                    conv[b] = True
                    done = True
            for v in range(n):
                P_out[b, v] = P[v]
            f_out[b] = f
        return P_out, f_out, conv, iters
