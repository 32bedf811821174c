"""Distributed per-slot scheduling and power coordination.

Each BS selects its (downlink, uplink) UE pair locally, broadcasts its
weights, selected UE ids, and channel knowledge once per slot, then the BSs
run synchronized rounds: everyone reports the interference implied by the
last broadcast powers, re-solves a local two-variable power problem with its
neighbors' powers held fixed, and broadcasts the result when it improves the
exact utility it can see. The loop stops when no BS can improve by changing
its own powers, or when a re-solve would move nobody's power by more than a
small dB tolerance; that final check round is not counted and not charged to
the message budget.

All protocol knowledge is kept in (M, M) matrices where row b and column b
together hold exactly what BS b knows: row b is what b's own radios measured
or received in init payloads, column b is what b's UEs measured and reported
up. Power updates for cell b read only that slice plus the globally
broadcast vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelGains
from .gpsolver import (P_MIN_W, ProblemBatch, SolverConfig, sca_solve_batch,
                       snap_to_zero_batch, solve_signomial, trim_to_cap_batch,
                       unilateral_best_gain)
from .linklayer import LinkBudget, ScheduleDecision, rate
from .topology import Topology

GAIN_FIELD_BITS = 8          # every scalar in a control message is one octet
MBPS_PER_BSHZ = 10.0         # 10 MHz carrier: 1 b/s/Hz <-> 10 Mbps


def _chi(weight, rate_bshz):
    return np.log1p(weight * rate_bshz)


def best_pair(util, cand_d, cand_u):
    """Deterministic argmax over a (dl candidate, ul candidate) utility grid.

    Ties break on the lowest participating UE id, then the mode order
    DL-only, UL-only, FD, idle, then the pair ids themselves. Entries of -1
    stand for "leave that direction idle". Returns (dl_ue, ul_ue).
    """
    best = util.max()
    ti, tj = np.nonzero(util == best)
    big = 1 << 30
    di, uj = cand_d[ti], cand_u[tj]
    low = np.where(di < 0, big, di)
    low = np.minimum(low, np.where(uj < 0, big, uj))
    mode = np.where((di >= 0) & (uj < 0), 0,
                    np.where((di < 0) & (uj >= 0), 1,
                             np.where((di >= 0) & (uj >= 0), 2, 3)))
    order = np.lexsort((np.where(uj < 0, big, uj), np.where(di < 0, big, di), mode, low))
    k = order[0]
    return int(di[k]), int(uj[k])


def intra_cell_select(cell, ue_ids, weights, gains: ChannelGains, budget: LinkBudget,
                      elig_dl=None, elig_ul=None):
    """Pick the utility-maximizing (downlink UE, uplink UE) pair for one cell.

    Enumerates every pair from the eligible UEs plus "no link" on either
    side, scoring each with the in-cell SINRs at max power: the uplink UE's
    leakage into the downlink UE (measured entries only) and the BS
    self-interference are the only couplings considered at this stage.
    Returns (dl_ue, ul_ue) with -1 for an idle direction.
    """
    ue_ids = np.asarray(ue_ids, dtype=int)
    cand_d = ue_ids if elig_dl is None else ue_ids[elig_dl]
    cand_u = ue_ids if elig_ul is None else ue_ids[elig_ul]
    cand_d = np.concatenate([cand_d, [-1]])
    cand_u = np.concatenate([cand_u, [-1]])
    nd, nu = len(cand_d), len(cand_u)

    d_real = cand_d >= 0
    u_real = cand_u >= 0
    g_d = np.where(d_real, gains.g_bs_ue[cell, cand_d], 0.0)
    g_u = np.where(u_real, gains.g_bs_ue[cell, cand_u], 0.0)
    # cross gain from uplink candidate j to downlink candidate i, measured only
    gx = np.zeros((nd, nu))
    ij = np.ix_(d_real, u_real)
    gx[ij] = gains.g_ue_ue_measured[np.ix_(cand_u[u_real], cand_d[d_real])].T

    den_dl = budget.noise_ue_w + budget.p_max_ul_w * gx * u_real[None, :]
    sinr_dl = budget.p_max_dl_w * g_d[:, None] / den_dl
    den_ul = budget.noise_bs_w + budget.p_max_dl_w * budget.gamma * d_real[:, None]
    sinr_ul = budget.p_max_ul_w * g_u[None, :] / den_ul

    r_dl = rate(sinr_dl, budget.rate_cap)
    r_ul = rate(sinr_ul, budget.rate_cap)
    w_dl = np.where(d_real, weights[cand_d, 0], 0.0)
    w_ul = np.where(u_real, weights[cand_u, 1], 0.0)
    util = np.where(d_real[:, None], _chi(w_dl[:, None], r_dl), 0.0)
    util += np.where(u_real[None, :], _chi(w_ul[None, :], r_ul), 0.0)

    same = d_real[:, None] & u_real[None, :] & (cand_d[:, None] == cand_u[None, :])
    util[same] = -np.inf

    return best_pair(util, cand_d, cand_u)


def select_all_cells(topo: Topology, weights, gains: ChannelGains, budget: LinkBudget,
                     elig_dl=None, elig_ul=None) -> ScheduleDecision:
    sched = ScheduleDecision.empty(topo.num_bs)
    for b, ues in enumerate(topo.cells()):
        ed = None if elig_dl is None else elig_dl[ues]
        eu = None if elig_ul is None else elig_ul[ues]
        sched.dl_ue[b], sched.ul_ue[b] = intra_cell_select(
            b, ues, weights, gains, budget, ed, eu)
    return sched


@dataclass
class CoordinationState:
    """Everything the BSs know after the init exchange for one slot."""

    schedule: ScheduleDecision
    present_dl: np.ndarray     # (M,) bool
    present_ul: np.ndarray
    w_dl: np.ndarray           # (M,) PF weights, 0 where absent
    w_ul: np.ndarray
    own_dl_gain: np.ndarray    # (M,) serving-link gains (broadcast in init)
    own_ul_gain: np.ndarray
    x_dl: np.ndarray           # (M, M) x_dl[b, j] = gain BS b -> cell j's DL UE
    y_dl: np.ndarray           # (M, M) y_dl[b, j] = measured gain, b's UL UE -> j's DL UE
    x_ul: np.ndarray           # (M, M) x_ul[b, j] = gain BS b -> BS j; diagonal = gamma
    y_ul: np.ndarray           # (M, M) y_ul[b, j] = gain b's UL UE -> BS j
    noise_ue_w: float
    noise_bs_w: float
    init_bits: np.ndarray      # (M,) int, init message size per BS
    forwarded: np.ndarray      # (M,) int, UE-to-UE entries forwarded per BS


def init_round(schedule: ScheduleDecision, weights, gains: ChannelGains,
               topo: Topology, budget: LinkBudget) -> CoordinationState:
    """Build per-BS knowledge and account for the init broadcast sizes.

    Each BS's init message carries two weights, two UE ids, its serving-link
    gains plus the cross gains its own UEs measured toward every other BS
    (2M gain fields total), and one forwarded UE-to-UE entry per neighbor
    uplink UE its downlink UE could measure.
    """
    m = len(schedule.dl_ue)
    dl, ul = schedule.dl_ue, schedule.ul_ue
    pd, pu = dl >= 0, ul >= 0
    dls = np.where(pd, dl, 0)
    uls = np.where(pu, ul, 0)

    w_dl = np.where(pd, weights[dls, 0], 0.0)
    w_ul = np.where(pu, weights[uls, 1], 0.0)
    own_dl = np.where(pd, gains.g_bs_ue[np.arange(m), dls], 0.0)
    own_ul = np.where(pu, gains.g_bs_ue[np.arange(m), uls], 0.0)

    x_dl = np.where(pd[None, :], gains.g_bs_ue[:, dls], 0.0)
    gm = gains.g_ue_ue_measured
    y_dl = np.where(pu[:, None] & pd[None, :], gm[np.ix_(uls, dls)], 0.0)
    x_ul = gains.g_bs_bs.copy()
    np.fill_diagonal(x_ul, budget.gamma)
    y_ul = np.where(pu[:, None], gains.g_bs_ue[:, uls].T, 0.0)

    mask = gains.measured_mask
    fwd = np.where(pu[:, None] & pd[None, :], mask[np.ix_(uls, dls)], False)
    np.fill_diagonal(fwd, False)   # the own-cell pair is reported locally, not forwarded
    forwarded = fwd.sum(axis=0).astype(int)
    init_bits = (2 + 2 + 2 * m + forwarded) * GAIN_FIELD_BITS

    return CoordinationState(
        schedule=schedule, present_dl=pd, present_ul=pu, w_dl=w_dl, w_ul=w_ul,
        own_dl_gain=own_dl, own_ul_gain=own_ul, x_dl=x_dl, y_dl=y_dl,
        x_ul=x_ul, y_ul=y_ul, noise_ue_w=budget.noise_ue_w,
        noise_bs_w=budget.noise_bs_w, init_bits=init_bits, forwarded=forwarded)


def estimate_interference(state: CoordinationState, p_dl, p_ul):
    """Per-cell interference each BS would report for the given powers.

    Downlink: every other BS plus every scheduled uplink UE (own cell
    included) whose channel was measured. Uplink: residual self-interference
    plus other cells' BSs and uplink UEs. Cells with an idle direction
    report 0 for it.
    """
    i_dl = state.noise_ue_w + state.x_dl.T @ p_dl - np.diag(state.x_dl) * p_dl \
        + state.y_dl.T @ p_ul
    i_ul = state.noise_bs_w + state.x_ul.T @ p_dl \
        + state.y_ul.T @ p_ul - np.diag(state.y_ul) * p_ul
    return np.where(state.present_dl, i_dl, 0.0), np.where(state.present_ul, i_ul, 0.0)


def build_local_problems(state: CoordinationState, p_dl, p_ul, i_dl, i_ul, ub):
    """One two-variable problem per BS, neighbors frozen at their last powers.

    Variables are (own DL power, own UL power). Terms cover every active
    link in the network; for neighbor links the reported interference is
    corrected by removing the stale contribution of this BS's own two
    transmitters so the solver sees denominators as functions of its own
    variables only. Corrections are floored at the receiver noise power.

    Rates stay in spectral-efficiency units throughout, so the solver's
    exact utility sum ln(1 + w * capped rate) equals the scheduler's chi sum
    for the same links. Returns (batch, floor_hits).
    """
    m = len(p_dl)
    eye = np.eye(m, dtype=bool)
    pd = state.present_dl
    pu = state.present_ul

    # downlink terms, one per cell j with a scheduled downlink; the (b, j)
    # entry is cell j's downlink term as seen inside cell b's local problem
    skip_d = (~eye) & (p_dl <= 0.0)[None, :]
    W_d = np.where(skip_d | ~pd[None, :], 0.0, state.w_dl[None, :])
    SC_d = np.where(eye, 1.0, p_dl[None, :]) * (state.own_dl_gain * pd)[None, :]
    SV_d = np.where(eye & pd[None, :], 0, -1)
    corr_d = i_dl[None, :] - np.where(eye, 0.0, p_dl[:, None] * state.x_dl) \
        - p_ul[:, None] * state.y_dl
    DC_d = np.where(pd[None, :], np.maximum(corr_d, state.noise_ue_w), 1.0)
    DK0_d = np.where(eye | ~pd[None, :], 0.0, state.x_dl)
    DK1_d = np.where(pd[None, :], state.y_dl, 0.0)
    hits = int((~skip_d & pd[None, :]
                & (corr_d < state.noise_ue_w * (1 - 1e-9))).sum())

    # uplink terms; residual self-interference sits on the x_ul diagonal so
    # the own-cell term keeps its DL-power coefficient
    skip_u = (~eye) & (p_ul <= 0.0)[None, :]
    W_u = np.where(skip_u | ~pu[None, :], 0.0, state.w_ul[None, :])
    SC_u = np.where(eye, 1.0, p_ul[None, :]) * (state.own_ul_gain * pu)[None, :]
    SV_u = np.where(eye & pu[None, :], 1, -1)
    corr_u = i_ul[None, :] - p_dl[:, None] * state.x_ul \
        - np.where(eye, 0.0, p_ul[:, None] * state.y_ul)
    DC_u = np.where(pu[None, :], np.maximum(corr_u, state.noise_bs_w), 1.0)
    DK0_u = np.where(pu[None, :], state.x_ul, 0.0)
    DK1_u = np.where(eye | ~pu[None, :], 0.0, state.y_ul)
    hits += int((~skip_u & pu[None, :]
                 & (corr_u < state.noise_bs_w * (1 - 1e-9))).sum())

    # absent links would only pad every consumer with dead terms, so keep
    # just the scheduled columns
    keep = np.concatenate([pd, pu])
    W = np.concatenate([W_d, W_u], axis=1)[:, keep]
    SV = np.concatenate([SV_d, SV_u], axis=1)[:, keep]
    SC = np.concatenate([SC_d, SC_u], axis=1)[:, keep]
    DC = np.concatenate([DC_d, DC_u], axis=1)[:, keep]
    DK = np.stack([np.concatenate([DK0_d, DK0_u], axis=1)[:, keep],
                   np.concatenate([DK1_d, DK1_u], axis=1)[:, keep]], axis=2)

    return ProblemBatch(W=W, SV=SV, SC=SC, DC=DC, DK=DK, UB=ub), hits


@dataclass
class CoordConfig:
    tol_db: float = 0.5              # movement floor: stop when accepted moves are smaller
    unilateral_tol_db: float = 1e-3  # candidate fixed-point tolerance
    degrade_tol: float = 1e-9        # reject candidates that lower the exact utility estimate
    check_util_tol: float = 1e-5     # utility slack for the single-transmitter check
    check_grid_db: float = 0.5       # power grid resolution of that check
    cycle_tol_db: float = 0.05       # declare a revisited allocation a permanent cycle
    cycle_window: int = 6            # how many past rounds each BS remembers
    refine_sca_rounds: int = 0       # condensation steps per re-solve, 0 = run to depth
    refine_trust_db: float = 0.0     # per-round move bound for refinements, 0 = none
    max_iters: int = 20


@dataclass
class CoordinationResult:
    p_dl: np.ndarray
    p_ul: np.ndarray
    n_iterations: int
    terminated: bool           # False means the iteration cap stopped the loop
    init_bits: np.ndarray      # (M,)
    iter_bits_per_bs: int
    forwarded: np.ndarray
    solve_calls: int
    clamp_floor_hits: int = 0
    objective_traces: list = field(default_factory=list)


def _delta_db(p_new, p_old, on_eps=P_MIN_W / 2):
    on_new, on_old = p_new > on_eps, p_old > on_eps
    if np.any(on_new != on_old):
        return np.inf
    both = on_new & on_old
    if not both.any():
        return 0.0
    return float(np.abs(10.0 * np.log10(p_new[both] / p_old[both])).max())


def run_coordination(state: CoordinationState, budget: LinkBudget,
                     solver_cfg: SolverConfig | None = None,
                     coord_cfg: CoordConfig | None = None,
                     collect_traces: bool = False) -> CoordinationResult:
    """Synchronized report/update rounds until powers settle.

    Every round each BS solves its local problem against the others' last
    broadcast powers and keeps the candidate unless it lowers its own
    estimate of the exact utility (beyond ``degrade_tol``); the inner GP
    works on the linearized objective, but accept/terminate comparisons use
    the capped chi sum, which stops phantom chases above the rate cap while
    letting pure power-settling rounds through. From the second round on
    the committed allocation is first screened with the single-transmitter
    test: if no BS could raise the capped utility sum it can see by moving
    one of its own powers (within ``check_util_tol``), the allocation is
    final and the loop stops. As backstops the loop also ends when the
    re-solves land back on the current powers (within
    ``unilateral_tol_db``), when nothing is accepted, when every accepted
    move is below ``tol_db``, or when the committed allocation revisits one
    from a recent round (the update map is deterministic, so that orbit
    would repeat forever); the final check round is silent (nothing
    broadcast, nothing counted). Each committed round costs each BS one
    interference report and one power update (32 bits together).
    """
    solver_cfg = solver_cfg or SolverConfig()
    coord_cfg = coord_cfg or CoordConfig()
    m = len(state.present_dl)

    ub = np.zeros((m, 2))
    ub[:, 0] = np.where(state.present_dl, budget.p_max_dl_w, 0.0)
    ub[:, 1] = np.where(state.present_ul, budget.p_max_ul_w, 0.0)
    free = np.stack([state.present_dl, state.present_ul], axis=1)

    p_dl = ub[:, 0].copy()
    p_ul = ub[:, 1].copy()

    n_committed = 0
    terminated = False
    solve_calls = 0
    clamps = 0
    traces = []
    history = []

    for k in range(1, coord_cfg.max_iters + 1):
        i_dl, i_ul = estimate_interference(state, p_dl, p_ul)
        pack, hits = build_local_problems(state, p_dl, p_ul, i_dl, i_ul, ub)
        clamps += hits
        cur = np.stack([p_dl, p_ul], axis=1)
        if k >= 2:
            gain_1d = unilateral_best_gain(pack, cur, solver_cfg.rate_cap,
                                           coord_cfg.check_grid_db, solver_cfg.p_min_w)
            if float(gain_1d.max()) < coord_cfg.check_util_tol:
                terminated = True
                break
        p0 = np.clip(cur, solver_cfg.p_min_w, np.maximum(ub, solver_cfg.p_min_w))
        trace = [] if collect_traces else None
        # round one gets a full solve off the fresh init exchange; refinements
        # advance the warm-started GP series one condensation step per round,
        # since re-linearizing deeper against stale neighbor powers adds
        # nothing the next report will not overwrite
        step_cfg = solver_cfg
        if k >= 2 and coord_cfg.refine_sca_rounds > 0:
            step_cfg = replace(solver_cfg, max_sca_iters=coord_cfg.refine_sca_rounds,
                               trust_region_db=coord_cfg.refine_trust_db)
        P, f, conv, _ = sca_solve_batch(pack, free.copy(), p0, step_cfg, trace)
        if solver_cfg.snap_to_zero:
            P, f, _, _, _, _ = snap_to_zero_batch(pack, free.copy(), P, f, step_cfg)
        if solver_cfg.trim_to_cap:
            P, f = trim_to_cap_batch(pack, free, P, step_cfg)
        solve_calls += 1
        if collect_traces:
            traces.append(trace)
        P = np.where(free, P, 0.0)
        gain = pack.exact_objective(P, solver_cfg.rate_cap) \
            - pack.exact_objective(cur, solver_cfg.rate_cap)
        accept = gain > -coord_cfg.degrade_tol
        new_dl = np.where(accept, P[:, 0], p_dl)
        new_ul = np.where(accept, P[:, 1], p_ul)

        if k >= 2:
            cand = max(_delta_db(P[:, 0], p_dl), _delta_db(P[:, 1], p_ul))
            delta = max(_delta_db(new_dl, p_dl), _delta_db(new_ul, p_ul))
            if (cand < coord_cfg.unilateral_tol_db or not accept.any()
                    or delta < coord_cfg.tol_db):
                terminated = True
                break
        p_dl, p_ul = new_dl, new_ul
        n_committed = k
        # the rounds are deterministic in the committed powers, so landing on
        # an allocation seen before means the loop would repeat forever
        stacked = np.concatenate([p_dl, p_ul])
        if any(_delta_db(stacked, old) < coord_cfg.cycle_tol_db for old in history):
            terminated = True
            break
        history.append(stacked)
        if len(history) > coord_cfg.cycle_window:
            history.pop(0)

    return CoordinationResult(
        p_dl=p_dl, p_ul=p_ul, n_iterations=n_committed, terminated=terminated,
        init_bits=state.init_bits, iter_bits_per_bs=32 * n_committed,
        forwarded=state.forwarded, solve_calls=solve_calls,
        clamp_floor_hits=clamps, objective_traces=traces)


def power_update(cell, state: CoordinationState, p_dl, p_ul, budget: LinkBudget,
                 solver_cfg: SolverConfig | None = None, reports=None):
    """One BS's local re-solve given everyone's last broadcast powers.

    ``reports`` is the (I_dl, I_ul) pair the other BSs broadcast; when None
    it is recomputed from the same state. The update itself reads only the
    broadcast vectors, the reports, and BS ``cell``'s own knowledge rows;
    returns (dl power, ul power) for that cell.
    """
    solver_cfg = solver_cfg or SolverConfig()
    i_dl, i_ul = reports if reports is not None else estimate_interference(state, p_dl, p_ul)
    ub = np.zeros((len(p_dl), 2))
    ub[:, 0] = np.where(state.present_dl, budget.p_max_dl_w, 0.0)
    ub[:, 1] = np.where(state.present_ul, budget.p_max_ul_w, 0.0)
    pack, _ = build_local_problems(state, p_dl, p_ul, i_dl, i_ul, ub)
    sub = pack.problem(cell)
    p0 = np.clip(np.array([p_dl[cell], p_ul[cell]]), solver_cfg.p_min_w,
                 np.maximum(sub.upper, solver_cfg.p_min_w))
    rep = solve_signomial(sub, solver_cfg, p_init=p0)
    out = rep.powers.copy()
    out[~np.array([state.present_dl[cell], state.present_ul[cell]])] = 0.0
    return float(out[0]), float(out[1])


def init_bits_closed_form(num_cells: int, forwarded_entries: int) -> int:
    return (2 + 2 + 2 * num_cells + forwarded_entries) * GAIN_FIELD_BITS


def distributed_bits_closed_form(num_cells: int, forwarded_entries: int,
                                 n_iterations: int) -> int:
    """Per-BS control bits for one slot of distributed coordination."""
    return init_bits_closed_form(num_cells, forwarded_entries) + 32 * n_iterations


def ue_measurement_kbps(ues_per_cell: int, strong_interferers: int) -> float:
    """Per-cell UE measurement reporting load, one octet per entry every 2 ms."""
    return 4.0 * strong_interferers * ues_per_cell
