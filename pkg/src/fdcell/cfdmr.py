"""Centralized scheduling: sequential greedy UE selection, one global solve.

The central scheduler visits the cells in a random order and fixes each
cell's (downlink, uplink) pair one by one. A candidate pair is scored by the
utility it would earn against interference from the already-decided cells at
max power, minus the utility those decided links lose to the candidate's own
interference; leaving a direction (or the whole cell) idle is always on the
menu, so the running network utility never goes down. Once every cell is
decided, a single power problem over all selected links is solved with the
same engine the per-BS coordination uses.

The scheduler sees true gains for anything a BS can measure (BS-to-UE,
BS-to-BS) but only the reported subset of UE-to-UE channels, exactly like
the distributed protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelGains
from .dfdmr import GAIN_FIELD_BITS, _chi, best_pair
from .gpsolver import (ProblemBatch, SolverConfig, sca_solve_batch,
                       snap_to_zero_batch, trim_to_cap_batch)
from .linklayer import (LinkBudget, PowerAllocation, ScheduleDecision, rate)
from .topology import Topology


def greedy_select(topo: Topology, weights, gains: ChannelGains, budget: LinkBudget,
                  rng: np.random.Generator, elig_dl=None, elig_ul=None) -> ScheduleDecision:
    """Pick every cell's (downlink, uplink) pair in one sequential greedy pass.

    Cells are visited in a uniformly random order. Each candidate pair is
    charged max transmit powers and scored as its own utility under the
    interference of the cells decided so far, minus the exact utility drop
    it inflicts on those decided links; the best net gain wins, with idle
    directions always available at zero gain. Ties break like the per-cell
    selection (lowest UE id, then DL-only, UL-only, FD, idle).
    """
    m = topo.num_bs
    sched = ScheduleDecision.empty(m)
    gm = gains.g_ue_ue_measured
    p_d, p_u = budget.p_max_dl_w, budget.p_max_ul_w

    # interference accumulated from decided cells at max power, toward every
    # potential downlink receiver and every BS
    acc_ue = np.zeros(topo.num_ue)
    acc_bs = np.zeros(m)
    # decided links as parallel arrays: cell, weight, signal, denominator
    dl_cell: list[int] = []
    dl_rx: list[int] = []
    dl_w: list[float] = []
    dl_den: list[float] = []
    ul_cell: list[int] = []
    ul_rx: list[int] = []
    ul_w: list[float] = []
    ul_den: list[float] = []

    cells = topo.cells()
    for b in rng.permutation(m):
        ues = np.asarray(cells[b], dtype=int)
        cand_d = ues if elig_dl is None else ues[elig_dl[ues]]
        cand_u = ues if elig_ul is None else ues[elig_ul[ues]]
        cand_d = np.concatenate([cand_d, [-1]])
        cand_u = np.concatenate([cand_u, [-1]])
        d_real = cand_d >= 0
        u_real = cand_u >= 0
        di = np.where(d_real, cand_d, 0)
        uj = np.where(u_real, cand_u, 0)

        g_d = np.where(d_real, gains.g_bs_ue[b, di], 0.0)
        g_u = np.where(u_real, gains.g_bs_ue[b, uj], 0.0)
        gx = np.where(u_real[None, :] & d_real[:, None], gm[np.ix_(uj, di)].T, 0.0)

        den_dl = budget.noise_ue_w + acc_ue[di][:, None] + p_u * gx
        sinr_dl = p_d * g_d[:, None] / den_dl
        den_ul = budget.noise_bs_w + acc_bs[b] + p_d * budget.gamma * d_real[:, None]
        sinr_ul = p_u * g_u[None, :] / den_ul

        w_dl = np.where(d_real, weights[di, 0], 0.0)
        w_ul = np.where(u_real, weights[uj, 1], 0.0)
        util = np.where(d_real[:, None], _chi(w_dl[:, None], rate(sinr_dl, budget.rate_cap)), 0.0)
        util += np.where(u_real[None, :], _chi(w_ul[None, :], rate(sinr_ul, budget.rate_cap)), 0.0)

        # utility the decided links lose to this candidate's interference
        loss = np.zeros_like(util)
        if dl_cell:
            sig = p_d * gains.g_bs_ue[dl_cell, dl_rx]
            den0 = np.asarray(dl_den)
            add = (p_d * gains.g_bs_ue[b, dl_rx])[:, None, None] * d_real[None, :, None] \
                + (p_u * gm[np.ix_(uj, np.asarray(dl_rx))].T)[:, None, :] * u_real[None, None, :]
            before = _chi(np.asarray(dl_w), rate(sig / den0, budget.rate_cap))
            after = _chi(np.asarray(dl_w)[:, None, None],
                         rate(sig[:, None, None] / (den0[:, None, None] + add), budget.rate_cap))
            loss += (before[:, None, None] - after).sum(axis=0)
        if ul_cell:
            cs = np.asarray(ul_cell)
            sig = p_u * gains.g_bs_ue[cs, np.asarray(ul_rx)]
            den0 = np.asarray(ul_den)
            add = (p_d * gains.g_bs_bs[b, cs])[:, None, None] * d_real[None, :, None] \
                + (p_u * gains.g_bs_ue[np.ix_(cs, uj)])[:, None, :] * u_real[None, None, :]
            before = _chi(np.asarray(ul_w), rate(sig / den0, budget.rate_cap))
            after = _chi(np.asarray(ul_w)[:, None, None],
                         rate(sig[:, None, None] / (den0[:, None, None] + add), budget.rate_cap))
            loss += (before[:, None, None] - after).sum(axis=0)

        net = util - loss
        same = d_real[:, None] & u_real[None, :] & (cand_d[:, None] == cand_u[None, :])
        net[same] = -np.inf
        pick_d, pick_u = best_pair(net, cand_d, cand_u)
        best_net = net[np.flatnonzero(cand_d == pick_d)[0], np.flatnonzero(cand_u == pick_u)[0]]
        assert best_net >= -1e-12, "greedy accepted a utility-losing candidate"
        sched.dl_ue[b], sched.ul_ue[b] = pick_d, pick_u

        # fold the decision into the accumulators and the decided links;
        # capture the interference this cell's own links see before the
        # accumulators pick up the cell's own (signal) contributions
        i_ue_own = float(acc_ue[pick_d]) if pick_d >= 0 else 0.0
        i_bs_own = float(acc_bs[b])
        if dl_cell:
            rx = np.asarray(dl_rx)
            dl_den = list(np.asarray(dl_den)
                          + (p_d * gains.g_bs_ue[b, rx] if pick_d >= 0 else 0.0)
                          + (p_u * gm[pick_u, rx] if pick_u >= 0 else 0.0))
        if ul_cell:
            cs = np.asarray(ul_cell)
            ul_den = list(np.asarray(ul_den)
                          + (p_d * gains.g_bs_bs[b, cs] if pick_d >= 0 else 0.0)
                          + (p_u * gains.g_bs_ue[cs, pick_u] if pick_u >= 0 else 0.0))
        if pick_d >= 0:
            acc_ue += p_d * gains.g_bs_ue[b]
            acc_bs += p_d * gains.g_bs_bs[b]
        if pick_u >= 0:
            acc_ue += p_u * gm[pick_u]
            acc_bs += p_u * gains.g_bs_ue[:, pick_u]

        if pick_d >= 0:
            den = i_ue_own + budget.noise_ue_w \
                + (p_u * gm[pick_u, pick_d] if pick_u >= 0 else 0.0)
            dl_cell.append(b)
            dl_rx.append(pick_d)
            dl_w.append(float(weights[pick_d, 0]))
            dl_den.append(float(den))
        if pick_u >= 0:
            den = i_bs_own + budget.noise_bs_w \
                + (p_d * budget.gamma if pick_d >= 0 else 0.0)
            ul_cell.append(b)
            ul_rx.append(pick_u)
            ul_w.append(float(weights[pick_u, 1]))
            ul_den.append(float(den))

    return sched


def build_central_problem(sched: ScheduleDecision, weights, gains: ChannelGains,
                          budget: LinkBudget):
    """All-cell power problem: 2M variables (M downlink, M uplink powers).

    BS-to-UE and BS-to-BS couplings use true gains; UE-to-UE couplings use
    the measured subset only, own-cell uplink-to-downlink leakage included.
    The residual self-interference gain sits on the own downlink power in
    each uplink denominator. Returns (batch of one, free mask).
    """
    m = len(sched.dl_ue)
    t = 2 * m
    dl, ul = sched.dl_ue, sched.ul_ue
    on_d, on_u = dl >= 0, ul >= 0
    dls, uls = np.where(on_d, dl, 0), np.where(on_u, ul, 0)
    gm = gains.g_ue_ue_measured
    b = np.arange(m)

    W = np.zeros(t)
    SV = np.full(t, -1, dtype=int)
    SC = np.zeros(t)
    DC = np.ones(t)
    DK = np.zeros((t, t))
    UB = np.zeros(t)

    W[:m] = np.where(on_d, weights[dls, 0], 0.0)
    SV[:m] = np.where(on_d, b, -1)
    SC[:m] = np.where(on_d, gains.g_bs_ue[b, dls], 0.0)
    DC[:m] = np.where(on_d, budget.noise_ue_w, 1.0)
    x = np.where(on_d[None, :], gains.g_bs_ue[:, dls], 0.0)    # BS c -> cell j's DL UE
    x[b, b] = 0.0
    DK[:m, :m] = x.T
    y = np.where(on_u[:, None] & on_d[None, :], gm[np.ix_(uls, dls)], 0.0)
    DK[:m, m:] = y.T

    W[m:] = np.where(on_u, weights[uls, 1], 0.0)
    SV[m:] = np.where(on_u, m + b, -1)
    SC[m:] = np.where(on_u, gains.g_bs_ue[b, uls], 0.0)
    DC[m:] = np.where(on_u, budget.noise_bs_w, 1.0)
    xb = np.where(on_u[None, :], gains.g_bs_bs, 0.0)           # BS c -> BS j
    xb[b, b] = np.where(on_u, budget.gamma, 0.0)
    DK[m:, :m] = xb.T
    yb = np.where(on_u[:, None] & on_u[None, :], gains.g_bs_ue[:, uls].T, 0.0)
    yb[b, b] = 0.0
    DK[m:, m:] = yb.T

    UB[:m] = np.where(on_d, budget.p_max_dl_w, 0.0)
    UB[m:] = np.where(on_u, budget.p_max_ul_w, 0.0)

    pack = ProblemBatch(W=W[None], SV=SV[None], SC=SC[None], DC=DC[None],
                        DK=DK[None], UB=UB[None])
    return pack, (UB > 0.0)[None]


@dataclass
class CentralAllocation:
    powers: PowerAllocation
    objective: float           # exact capped utility at the returned powers
    fallback: bool             # True when the solve failed and caps were kept
    sca_iterations: int


def centralized_power_allocate(sched: ScheduleDecision, weights, gains: ChannelGains,
                               budget: LinkBudget,
                               solver_cfg: SolverConfig | None = None) -> CentralAllocation:
    """One global power solve for all selected links, max-power fallback."""
    cfg = solver_cfg or SolverConfig()
    pack, free = build_central_problem(sched, weights, gains, budget)
    ub = pack.UB
    p0 = np.clip(ub, cfg.p_min_w, np.maximum(ub, cfg.p_min_w))
    P, f, conv, iters = sca_solve_batch(pack, free.copy(), p0, cfg)
    if cfg.snap_to_zero:
        P, f, _, _, _, _ = snap_to_zero_batch(pack, free.copy(), P, f, cfg)
    if cfg.trim_to_cap:
        P, f = trim_to_cap_batch(pack, free, P, cfg)
    P = np.where(free, P, 0.0)
    fallback = not bool(conv[0])
    if fallback:
        P = np.where(free, ub, 0.0)
    m = len(sched.dl_ue)
    powers = PowerAllocation(P[0, :m].copy(), P[0, m:].copy())
    obj = float(pack.exact_objective(P, cfg.rate_cap)[0])
    return CentralAllocation(powers=powers, objective=obj, fallback=fallback,
                             sca_iterations=int(iters[0]))


def central_bits_closed_form(num_cells: int, ues_per_cell: int,
                             strong_interferers: int) -> int:
    """Per-BS control bits per slot when a central scheduler runs the network.

    Each BS uploads its BS-to-BS channels, its channels to every UE in the
    system, its own UEs' strong UE-to-UE entries, and their weights.
    """
    return (num_cells + num_cells * ues_per_cell
            + ues_per_cell * strong_interferers) * GAIN_FIELD_BITS


def central_report_entries(topo: Topology, gains: ChannelGains) -> np.ndarray:
    """(M,) strong UE-to-UE entries each BS's own UEs reported to it."""
    k_u = gains.measured_mask.sum(axis=0)
    return np.array([int(k_u[ues].sum()) for ues in topo.cells()])


def central_report_bits(topo: Topology, gains: ChannelGains) -> np.ndarray:
    """(M,) measured per-BS upload sizes, the closed form with actual counts."""
    m = topo.num_bs
    return (m + topo.num_ue + central_report_entries(topo, gains)) * GAIN_FIELD_BITS
