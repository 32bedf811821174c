"""Weighted sum-rate power allocation via signomial programming.

The problem: maximize sum_t w_t * log2(1 + S_t(p) / D_t(p)) over box-bounded
transmit powers, where each signal S_t is either (gain * one variable) or a
constant, and each denominator D_t is an affine posynomial
C_t + sum_v d_tv * p_v. Equivalent to minimizing a product of posynomial
ratios; solved by successive convex approximation: the full received-power
posynomial (D_t + S_t) is condensed to a best-fit monomial at the current
point (weighted AM-GM), which turns each iteration into a GP solved exactly
in log variables by a projected damped Newton method.

Everything is batch-first: a batch of same-shaped problems (one per cell
during coordination) is solved in lockstep. The public single-problem API
wraps batch size 1. `brute_force_power_oracle` is an independent global
check (dense dB grid plus local refinement) for up to 4 variables and never
calls the solver path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

P_MIN_W = 1e-7          # -40 dBm: GP-domain lower bound; true zero via snapping
_LN2 = float(np.log(2.0))
_LN10 = float(np.log(10.0))


@dataclass
class SolverConfig:
    sca_tol_db: float = 1e-3       # stop SCA when max power move is below this
    sca_stall_rel: float = 1e-9    # or when the objective improvement is below this
    inner_tol: float = 1e-6        # relative objective tolerance of the GP solve
    max_sca_iters: int = 25
    max_inner_iters: int = 50
    p_min_w: float = P_MIN_W
    snap_to_zero: bool = True
    trim_to_cap: bool = True
    rate_cap: float = 6.0          # cap used by the exact utility and the trim
    trust_region_db: float = 0.0   # per-condensation move bound, 0 disables


@dataclass
class SolverReport:
    powers: np.ndarray
    objective_trace: list          # weighted sum-rate objective per accepted iterate
    iterations: int
    converged: bool
    utility_linear: float          # final objective (same form as the trace)
    utility_exact: float           # sum ln(1 + w * capped rate) at the final powers
    snapped: list = field(default_factory=list)


@dataclass
class PowerProblem:
    """One weighted sum-rate instance.

    upper[v] is the power cap in watts (0 pins the variable off). Terms are
    parallel arrays; sig_var[t] is the signal variable index or -1 when the
    signal is the fixed power sig_coef[t]. den_coef[t, v] are the linear
    interference coefficients and den_const[t] the constant part (at least
    the receiver noise).
    """

    upper: np.ndarray        # (n,)
    weights: np.ndarray      # (T,)
    sig_var: np.ndarray      # (T,) int
    sig_coef: np.ndarray     # (T,)
    den_const: np.ndarray    # (T,)
    den_coef: np.ndarray     # (T, n)
    var_ids: list | None = None

    @property
    def num_vars(self) -> int:
        return self.upper.shape[0]

    def objective(self, p: np.ndarray) -> float:
        """Weighted sum rate (b/s/Hz ignoring bandwidth) at powers p."""
        p = np.asarray(p, dtype=float)
        s = np.where(self.sig_var >= 0, self.sig_coef * p[np.maximum(self.sig_var, 0)],
                     self.sig_coef)
        d = self.den_const + self.den_coef @ p
        return float((self.weights * np.log2(1.0 + s / d)).sum())

    def to_json(self) -> str:
        ids = self.var_ids or [f"v{i}" for i in range(self.num_vars)]
        terms = []
        for t in range(self.weights.shape[0]):
            sig = ({"var": ids[int(self.sig_var[t])], "coef": float(self.sig_coef[t])}
                   if self.sig_var[t] >= 0 else {"const": float(self.sig_coef[t])})
            terms.append({
                "weight": float(self.weights[t]),
                "signal": sig,
                "den_const": float(self.den_const[t]),
                "den_coefs": {ids[v]: float(self.den_coef[t, v])
                              for v in range(self.num_vars) if self.den_coef[t, v] != 0.0},
            })
        return json.dumps({
            "variables": [{"id": ids[v], "p_max_w": float(self.upper[v])}
                          for v in range(self.num_vars)],
            "terms": terms,
        })

    @classmethod
    def from_json(cls, text: str) -> "PowerProblem":
        obj = json.loads(text)
        ids = [v["id"] for v in obj["variables"]]
        index = {vid: i for i, vid in enumerate(ids)}
        n = len(ids)
        upper = np.asarray([v["p_max_w"] for v in obj["variables"]], dtype=float)
        tt = obj["terms"]
        weights = np.asarray([t["weight"] for t in tt], dtype=float)
        sig_var = np.full(len(tt), -1, dtype=int)
        sig_coef = np.empty(len(tt))
        den_const = np.asarray([t["den_const"] for t in tt], dtype=float)
        den_coef = np.zeros((len(tt), n))
        for k, t in enumerate(tt):
            sig = t["signal"]
            if "var" in sig:
                sig_var[k] = index[sig["var"]]
                sig_coef[k] = sig["coef"]
            else:
                sig_coef[k] = sig["const"]
            for vid, c in t["den_coefs"].items():
                den_coef[k, index[vid]] = c
        return cls(upper, weights, sig_var, sig_coef, den_const, den_coef, ids)


# ---------------------------------------------------------------------------
# batched core
# ---------------------------------------------------------------------------

class ProblemBatch:
    """B same-shaped problems as stacked arrays (padding terms carry w=0)."""

    def __init__(self, W, SV, SC, DC, DK, UB, var_ids=None):
        self.W = W            # (B, T)
        self.SV = SV          # (B, T) int
        self.SC = SC          # (B, T)
        self.DC = DC          # (B, T)
        self.DK = DK          # (B, T, n)
        self.UB = UB          # (B, n)
        self.var_ids = var_ids
        self.B, self.T = W.shape
        self.n = UB.shape[1]
        # received-power posynomial (denominator + signal): F0 + E @ p
        E = DK.copy()
        F0 = DC.copy()
        bb, tt = np.nonzero(SV >= 0)
        E[bb, tt, SV[bb, tt]] += SC[bb, tt]
        bb, tt = np.nonzero((SV < 0) & (W > 0))
        F0[bb, tt] += SC[bb, tt]
        self.E = E
        self.F0 = F0
        # hot-path precomputations: log-2 weights, a flat gather index into
        # P.ravel() for the signal variable of each term, and the mask of
        # constant-signal terms
        self.WL = W / _LN2
        self._gidx = np.maximum(SV, 0) + (np.arange(self.B) * self.n)[:, None]
        self._sig_const = SV < 0

    @classmethod
    def single(cls, prob: PowerProblem) -> "ProblemBatch":
        return cls(prob.weights[None, :], prob.sig_var[None, :], prob.sig_coef[None, :],
                   prob.den_const[None, :], prob.den_coef[None, :, :], prob.upper[None, :],
                   prob.var_ids)

    def problem(self, b: int) -> PowerProblem:
        return PowerProblem(self.UB[b].copy(), self.W[b].copy(), self.SV[b].copy(),
                            self.SC[b].copy(), self.DC[b].copy(), self.DK[b].copy(),
                            self.var_ids)

    def objective(self, P: np.ndarray) -> np.ndarray:
        """(B,) weighted sum rate at powers P (B, n)."""
        s = np.where(self._sig_const, self.SC, self.SC * P.ravel()[self._gidx])
        d = self.DC + (self.DK @ P[..., None])[..., 0]
        return (self.W * np.log2(1.0 + s / d)).sum(axis=1)

    def exact_objective(self, P: np.ndarray, rate_cap: float = 6.0) -> np.ndarray:
        """(B,) sum ln(1 + w * capped rate) at powers P (B, n).

        This is the utility the schedulers actually optimize; the linear
        ``objective`` drops the outer log and the cap, which is only valid
        while rates sit below the cap.
        """
        s = np.where(self._sig_const, self.SC, self.SC * P.ravel()[self._gidx])
        d = self.DC + (self.DK @ P[..., None])[..., 0]
        r = np.minimum(np.log2(1.0 + s / d), rate_cap)
        return np.log1p(self.W * r).sum(axis=1)

    def condense_q(self, P0: np.ndarray) -> np.ndarray:
        """Monomial-condensation exponents folded into the linear z-coefficients.

        At anchor p0 the condensed maximization objective in z = ln p is
        q . z - sum_t w_t ln D_t(e^z) + const, with
        q_v = sum_t w_t * E_tv p0_v / (F0_t + E_t . p0).
        """
        pt0 = self.F0 + (self.E @ P0[..., None])[..., 0]
        return ((self.WL / pt0)[:, :, None] * self.E).sum(axis=1) * P0

    def _g(self, q, Z, FM):
        # q is exactly zero on masked variables, so q . Z needs no mask
        P = np.exp(Z) * FM
        D = self.DC + (self.DK @ P[..., None])[..., 0]
        return (q * Z).sum(-1) - (self.WL * np.log(D)).sum(-1)

    def inner_solve(self, q, Z0, FM, lo, hi, cfg: SolverConfig) -> np.ndarray:
        """Projected damped Newton on the condensed GP (concave in z)."""
        B, n = Z0.shape
        Z = np.clip(Z0, lo, hi)
        g = self._g(q, Z, FM)
        done = ~FM.any(axis=1)
        eye = np.arange(n)
        lo_eps = lo + 1e-12
        hi_eps = hi - 1e-12
        for _ in range(cfg.max_inner_iters):
            if done.all():
                break
            P = np.exp(Z) * FM
            D = self.DC + (self.DK @ P[..., None])[..., 0]
            U = self.DK * P[:, None, :] / D[..., None]          # (B,T,n)
            WU = self.WL[..., None] * U
            diag = WU.sum(axis=1)
            grad = (q - diag) * FM
            frozen = ~FM | ((Z <= lo_eps) & (grad < 0)) | ((Z >= hi_eps) & (grad > 0))
            gm = np.where(frozen, 0.0, grad)
            H = -(WU.transpose(0, 2, 1) @ U)
            keep = (~frozen).astype(float)
            H *= keep[:, :, None] * keep[:, None, :]
            H[:, eye, eye] += np.where(frozen, 1.0, diag + 1e-12 + 1e-9 * diag)
            try:
                step = np.linalg.solve(H, gm[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = gm
            step = np.where(frozen, 0.0, step)
            # backtracking line search with box projection
            t = np.ones(B)
            improved = done.copy()
            g_new = g.copy()
            Z_new = Z.copy()
            for _half in range(25):
                if improved.all():
                    break
                trial = np.clip(Z + t[:, None] * step, lo, hi)
                gt = self._g(q, trial, FM)
                incr = (gm * (trial - Z)).sum(-1)
                ok = ~improved & (gt >= g + 1e-4 * np.maximum(incr, 0.0) - 1e-15)
                Z_new[ok] = trial[ok]
                g_new[ok] = gt[ok]
                improved |= ok
                t = np.where(improved, t, t * 0.5)
            stalled = ~improved
            delta = g_new - g
            Z, g = Z_new, g_new
            done |= stalled | (delta <= cfg.inner_tol * (1.0 + np.abs(g_new)))
        return Z


def sca_solve_batch(pack: ProblemBatch, FM: np.ndarray, P_init: np.ndarray,
                    cfg: SolverConfig, trace: list | None = None):
    """SCA loop over a batch. Returns (P, f, converged, iters).

    Problems in the batch are independent, so each runs to its own stopping
    point; the compiled per-row path does exactly that and is preferred,
    with the lockstep numpy path kept as a fallback.
    """
    if _sca_kernel.available():
        return _sca_solve_batch_jit(pack, FM, P_init, cfg, trace)
    return _sca_solve_batch_numpy(pack, FM, P_init, cfg, trace)


def _sca_solve_batch_jit(pack: ProblemBatch, FM: np.ndarray, P_init: np.ndarray,
                         cfg: SolverConfig, trace: list | None = None):
    want = trace is not None
    width = cfg.max_sca_iters + 1 if want else 1
    tr = np.zeros((pack.B, width))
    tcount = np.zeros(pack.B, dtype=np.int64)
    P, f, conv, iters = _sca_kernel.sca_rows(
        pack.W, pack.SV, pack.SC, pack.DC, pack.DK, pack.UB, pack.E, pack.F0,
        FM, np.ascontiguousarray(P_init, dtype=float),
        float(cfg.p_min_w), float(cfg.sca_tol_db), float(cfg.sca_stall_rel),
        float(cfg.inner_tol), int(cfg.max_sca_iters), int(cfg.max_inner_iters),
        float(cfg.trust_region_db), want, tr, tcount)
    if want:
        rows = np.arange(pack.B)
        for k in range(int(tcount.max())):
            trace.append(tr[rows, np.minimum(k, tcount - 1)].copy())
    return P, f, conv, iters


def _sca_solve_batch_numpy(pack: ProblemBatch, FM: np.ndarray, P_init: np.ndarray,
                           cfg: SolverConfig, trace: list | None = None):
    lo = np.log(cfg.p_min_w)
    with np.errstate(divide="ignore"):
        hi = np.where(FM, np.log(np.maximum(pack.UB, cfg.p_min_w)), lo)
    P = np.where(FM, np.clip(P_init, cfg.p_min_w, np.maximum(pack.UB, cfg.p_min_w)), 0.0)
    f = pack.objective(P)
    if trace is not None:
        trace.append(f.copy())
    converged = ~FM.any(axis=1)
    iters = np.zeros(pack.B, dtype=int)
    for _s in range(cfg.max_sca_iters):
        act = ~converged
        if not act.any():
            break
        q = pack.condense_q(P)
        Z0 = np.log(np.clip(P, cfg.p_min_w, None))
        lo_s, hi_s = lo, hi
        if cfg.trust_region_db > 0.0:
            # classic condensation safeguard: each GP of the series may move
            # the iterate only a bounded distance from its anchor
            r = cfg.trust_region_db * _LN10 / 10.0
            lo_s = np.maximum(lo, Z0 - r)
            hi_s = np.minimum(hi, Z0 + r)
        Z = pack.inner_solve(q, Z0, FM, lo_s, hi_s, cfg)
        P_new = np.where(FM, np.exp(Z), 0.0)
        f_new = pack.objective(P_new)
        accept = act & (f_new >= f - 1e-12 * (1.0 + np.abs(f)))
        with np.errstate(divide="ignore", invalid="ignore"):
            move = np.abs(10.0 * np.log10(np.where(FM, P_new, 1.0) /
                                          np.where(FM, np.maximum(P, cfg.p_min_w), 1.0)))
        move = np.where(FM, move, 0.0).max(axis=1)
        iters[act] += 1
        # a condensation step that no longer improves the objective has hit
        # the series' fixed-point basin; further re-linearizations only
        # wander the plateau, so the row is done even when the move is large
        stalled = accept & (f_new - f <= cfg.sca_stall_rel * (1.0 + np.abs(f)))
        P = np.where(accept[:, None], P_new, P)
        f = np.where(accept, f_new, f)
        if trace is not None and accept.any():
            trace.append(f.copy())
        converged |= act & ((accept & (move < cfg.sca_tol_db)) | stalled | ~accept)
    return P, f, converged, iters


def snap_to_zero_batch(pack: ProblemBatch, FM: np.ndarray, P: np.ndarray,
                       f: np.ndarray, cfg: SolverConfig):
    """Greedy per-variable zeroing judged on the exact capped utility.

    The GP keeps variables at the -40 dBm floor; this post-pass sets one to
    true zero only when that strictly improves sum ln(1 + w * capped rate),
    then re-solves the remaining variables and keeps the re-solve only if it
    does not lower that utility. The linear objective is not consulted: it
    overvalues rate above the cap and would mute links that still carry
    utility. Returns (P, f, free_mask, snapped, extra_iters, all_converged).
    """
    free = FM.copy()
    snapped: list[tuple[int, int]] = []
    extra_iters = np.zeros(pack.B, dtype=int)
    all_conv = np.ones(pack.B, dtype=bool)
    fe = pack.exact_objective(P, cfg.rate_cap)
    for _round in range(pack.n):
        best_gain = np.zeros(pack.B)
        best_var = np.full(pack.B, -1, dtype=int)
        for v in range(pack.n):
            cand = free[:, v] & (P[:, v] > 0)
            if not cand.any():
                continue
            P_try = P.copy()
            P_try[:, v] = 0.0
            fe_try = pack.exact_objective(P_try, cfg.rate_cap)
            gain = np.where(cand, fe_try - fe, -np.inf)
            better = gain > np.maximum(best_gain, 1e-12)
            best_var = np.where(better, v, best_var)
            best_gain = np.where(better, gain, best_gain)
        rows = best_var >= 0
        if not rows.any():
            break
        for b in np.flatnonzero(rows):
            free[b, best_var[b]] = False
            P[b, best_var[b]] = 0.0
            snapped.append((int(b), int(best_var[b])))
        fe = pack.exact_objective(P, cfg.rate_cap)
        redo = rows & free.any(axis=1)
        if redo.any():
            FM2 = free & redo[:, None]
            P2, _f2, conv2, it2 = sca_solve_batch(pack, FM2, P, cfg, trace=None)
            P2 = np.where(redo[:, None], np.where(free, P2, 0.0), P)
            fe2 = pack.exact_objective(P2, cfg.rate_cap)
            take = redo & (fe2 >= fe - 1e-12)
            P = np.where(take[:, None], P2, P)
            fe = np.where(take, fe2, fe)
            extra_iters += np.where(take, it2, 0)
            all_conv &= np.where(take, conv2, True)
    f = pack.objective(P)
    return P, f, free, snapped, extra_iters, all_conv


def trim_to_cap_batch(pack: ProblemBatch, FM: np.ndarray, P: np.ndarray,
                      cfg: SolverConfig):
    """Shave own-link powers down to the level that just reaches the rate cap.

    Power beyond the cap-achieving SINR buys nothing under the exact capped
    utility; when some other link in the problem is still below the cap and
    hears the variable, shaving it is weakly improving for the whole
    network. A variable nothing benefits from is left alone, so isolated
    links keep the full-power solution. The shave iterates a few times
    because a cell's two powers interact (residual self-interference puts
    the downlink power in the uplink denominator, the paired uplink leaks
    into the downlink), so each cut moves the other link's boundary.
    Returns (P, f) with f the linear objective at the trimmed powers.
    """
    s_cap = 2.0 ** cfg.rate_cap - 1.0
    own = (pack.SV >= 0) & (pack.W > 0)
    live = pack.W > 0
    hears = (pack.DK > 0).astype(float)
    P = P.copy()
    for _ in range(12):
        s = np.where(pack._sig_const, pack.SC, pack.SC * P.ravel()[pack._gidx])
        d = pack.DC + (pack.DK @ P[..., None])[..., 0]
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(own & (s > s_cap * d * (1.0 + 1e-9)), s_cap * d / s, 1.0)
        bb, tt = np.nonzero(scale < 1.0)
        if bb.size == 0:
            break
        # a shave of variable v pays off only if some below-cap term hears v
        below = live & (s < s_cap * d)
        heard = (below.astype(float)[:, None, :] @ hears)[:, 0, :] > 0
        keep = heard[bb, pack.SV[bb, tt]]
        bb, tt = bb[keep], tt[keep]
        if bb.size == 0:
            break
        factor = np.ones_like(P)
        factor[bb, pack.SV[bb, tt]] = scale[bb, tt]
        P = np.where(FM, np.maximum(P * factor, np.where(P > 0, cfg.p_min_w, 0.0)), P)
    return P, pack.objective(P)


def unilateral_best_gain(pack: ProblemBatch, P: np.ndarray, rate_cap: float,
                         grid_db: float = 0.5, p_min_w: float = P_MIN_W) -> np.ndarray:
    """Best exact-utility gain available by moving any single power alone.

    For each problem, sweeps each variable over zero plus a dB grid from
    ``p_min_w`` up to its box cap while the other variables stay at ``P``,
    and reports the largest capped-utility improvement found. An allocation
    where this is ~zero for everyone is final: no transmitter can do better
    by changing only its own level, which is the natural stopping rule for
    the coordination rounds.
    """
    base = pack.exact_objective(P, rate_cap)
    best = np.zeros(len(P))
    ub_max = float(pack.UB.max())
    if ub_max <= 0.0:
        return best
    steps = int(np.ceil(10.0 * np.log10(ub_max / p_min_w) / grid_db)) + 1
    grid = np.concatenate([[0.0], p_min_w * 10.0 ** (grid_db * np.arange(steps + 1) / 10.0)])
    # signals and denominators at the resting point; a single-variable sweep
    # shifts each denominator by DK[:, :, v] times the power delta and only
    # rewrites the signal of terms whose own variable is v
    base_s = np.where(pack._sig_const, pack.SC, pack.SC * P.ravel()[pack._gidx])
    base_d = pack.DC + (pack.DK @ P[..., None])[..., 0]
    for v in range(P.shape[1]):
        gv = np.minimum(grid[None, :], pack.UB[:, v : v + 1])
        gv[pack.UB[:, v] <= 0.0, :] = 0.0
        delta = gv - P[:, v : v + 1]
        d = base_d[:, None, :] + pack.DK[:, :, v][:, None, :] * delta[:, :, None]
        sig_v = (pack.SV == v)[:, None, :]
        s = np.where(sig_v, pack.SC[:, None, :] * gv[:, :, None], base_s[:, None, :])
        r = np.minimum(np.log2(1.0 + s / d), rate_cap)
        util = np.log1p(pack.W[:, None, :] * r).sum(axis=2)
        best = np.maximum(best, util.max(axis=1) - base)
    return best


def solve_signomial(problem: PowerProblem, config: SolverConfig | None = None,
                    p_init: np.ndarray | None = None) -> SolverReport:
    """Solve one instance; init at the power caps unless a warm start is given."""
    cfg = config or SolverConfig()
    pack = ProblemBatch.single(problem)
    FM = pack.UB > 0.0
    if p_init is None:
        P0 = np.where(FM, pack.UB, 0.0)
    else:
        P0 = np.where(FM, np.asarray(p_init, dtype=float)[None, :], 0.0)
    raw_trace: list[np.ndarray] = []
    P, f, conv, iters = sca_solve_batch(pack, FM, P0, cfg, trace=raw_trace)
    snapped = []
    if cfg.snap_to_zero:
        P, f, FM, snapped, extra, snap_conv = snap_to_zero_batch(pack, FM, P, f, cfg)
        iters = iters + extra
        conv = conv & snap_conv
    if cfg.trim_to_cap:
        P, f = trim_to_cap_batch(pack, FM, P, cfg)
    trace = [float(v[0]) for v in raw_trace]
    # drop repeated tail entries from bookkeeping appends
    cleaned = [trace[0]]
    for v in trace[1:]:
        if v != cleaned[-1]:
            cleaned.append(v)
    powers = P[0]
    return SolverReport(
        powers=powers,
        objective_trace=cleaned,
        iterations=int(iters[0]),
        converged=bool(conv[0]),
        utility_linear=float(f[0]),
        utility_exact=exact_utility(problem, powers, cfg.rate_cap),
        snapped=[int(v) for (_b, v) in snapped],
    )


def exact_utility(problem: PowerProblem, p: np.ndarray, rate_cap: float = 6.0) -> float:
    """sum_t ln(1 + w_t * min(log2(1+SINR_t), cap)) at powers p."""
    p = np.asarray(p, dtype=float)
    s = np.where(problem.sig_var >= 0,
                 problem.sig_coef * p[np.maximum(problem.sig_var, 0)], problem.sig_coef)
    d = problem.den_const + problem.den_coef @ p
    r = np.minimum(np.log2(1.0 + s / d), rate_cap)
    return float(np.log1p(problem.weights * r).sum())


# ---------------------------------------------------------------------------
# independent oracle
# ---------------------------------------------------------------------------

def brute_force_power_oracle(problem: PowerProblem, grid_db_step: float = 0.25,
                             exact_chi: bool = False, rate_cap: float = 6.0,
                             p_min_w: float = P_MIN_W, include_zero: bool = False):
    """Global check by dense dB-grid search with local refinement (n <= 4).

    Grid levels per variable span [-40 dBm, cap], the same box the GP sees;
    ``include_zero`` adds a true-zero level per variable for checking the
    snap-to-zero pass. A 2 dB full product scan locates candidate basins
    (top ones kept), then nested local grids shrink to grid_db_step and two
    further {1/8, 1/64} x step passes. Returns (powers, objective). Never
    calls the SCA path.
    """
    n = problem.num_vars
    if n > 4:
        raise ValueError("oracle supports at most 4 variables")
    w = problem.weights
    sv = problem.sig_var
    sc = problem.sig_coef
    dc = problem.den_const
    dk = problem.den_coef

    def evaluate(pmat: np.ndarray) -> np.ndarray:
        out = np.empty(pmat.shape[0])
        for a in range(0, pmat.shape[0], 262144):
            pp = pmat[a:a + 262144]
            s = np.where(sv >= 0, sc * pp[:, np.maximum(sv, 0)], sc)
            d = dc + pp @ dk.T
            rr = np.log2(1.0 + s / d)
            if exact_chi:
                out[a:a + 262144] = np.log1p(w * np.minimum(rr, rate_cap)).sum(axis=1)
            else:
                out[a:a + 262144] = (w * rr).sum(axis=1)
        return out

    def dbm(x):
        return 10.0 * np.log10(x) + 30.0

    lo_dbm = dbm(p_min_w)

    def levels_full(ub_w: float, step: float) -> np.ndarray:
        if ub_w <= 0:
            return np.asarray([0.0])
        ub = dbm(ub_w)
        ladder = np.arange(ub, lo_dbm - 1e-9, -step)
        if ladder[-1] > lo_dbm + 1e-9:
            ladder = np.append(ladder, lo_dbm)
        watts = 10.0 ** ((ladder - 30.0) / 10.0)
        return np.append(watts, 0.0) if include_zero else watts

    def levels_local(center_w: float, ub_w: float, window: float, step: float) -> np.ndarray:
        if ub_w <= 0:
            return np.asarray([0.0])
        if center_w <= 0:
            lad = np.arange(lo_dbm, min(lo_dbm + window, dbm(ub_w)) + 1e-9, step)
        else:
            c = dbm(center_w)
            lad = np.arange(c - window, c + window + 1e-9, step)
            lad = np.clip(lad, lo_dbm, dbm(ub_w))
        watts = np.unique(10.0 ** ((lad - 30.0) / 10.0))
        return np.append(watts, 0.0) if include_zero else watts

    def mesh(levels: list[np.ndarray]) -> np.ndarray:
        grids = np.meshgrid(*levels, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    # stage 1: coarse full scan, keep a handful of candidate basins
    coarse = 2.0
    pts = mesh([levels_full(problem.upper[v], coarse) for v in range(n)])
    vals = evaluate(pts)
    k = min(5, vals.shape[0])
    top = np.argpartition(vals, -k)[-k:]
    candidates = [pts[i] for i in top]
    best_p = pts[int(np.argmax(vals))]
    best_f = float(vals.max())

    # stage 2..4: shrink around each candidate
    plan = [(coarse, grid_db_step), (grid_db_step, grid_db_step / 8.0),
            (grid_db_step / 8.0, grid_db_step / 64.0)]
    for window, step in plan:
        new_candidates = []
        for cand in candidates:
            pts = mesh([levels_local(cand[v], problem.upper[v], window, step)
                        for v in range(n)])
            vals = evaluate(pts)
            i = int(np.argmax(vals))
            new_candidates.append(pts[i])
            if vals[i] > best_f:
                best_f = float(vals[i])
                best_p = pts[i]
        candidates = new_candidates
    return best_p, best_f
