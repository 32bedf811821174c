"""Single-drop simulation loop: topology, channel, slots, accounting.

One drop = one random placement with frozen gains, simulated slot by slot.
Each slot runs the configured scheduler, a power step where the scheduler
has one (coordination for the distributed family, one global solve for the
centralized one, fixed caps for round robin), then realizes SINRs with true
gains and updates the proportional-fair averages. Everything a campaign
needs later is carried out of the loop in a DropResult.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .cfdmr import (central_report_bits, central_report_entries,
                    centralized_power_allocate, greedy_select)
from .channel import ChannelGains, ChannelModelParams, compute_channel_gains
from .dfdmr import init_round, run_coordination, select_all_cells
from .gpsolver import ProblemBatch, SolverConfig
from .linklayer import LinkBudget, PowerAllocation, rate, sinr_all
from .pf import RateTracker
from .topology import (Topology, generate_indoor_topology,
                       generate_outdoor_topology)
from .traffic import SLOT_S, TrafficState

SCHEDULERS = ("dfdmr", "cfdmr", "hd_sync", "dyn_tdd", "rr_hd", "rr_fd")
MODE_KEYS = ("fd", "dl_only", "ul_only", "none")


@dataclass
class DropConfig:
    scenario: str = "indoor_rrh"
    scheduler: str = "dfdmr"
    cancellation_db: float = np.inf
    slots: int = 1000
    ues_per_cell: int | None = None      # scenario default when None
    traffic: str = "full_buffer"         # or "ftp"
    beta: float = 0.99
    fading: bool = False
    collect_messages: bool = False
    collect_traces: bool = False

    def resolved_ues_per_cell(self) -> int:
        if self.ues_per_cell is not None:
            return self.ues_per_cell
        return 8 if self.scenario == "indoor_rrh" else 10


@dataclass
class DropResult:
    """Everything one simulated drop hands back to the campaign."""

    scenario: str
    scheduler: str
    cancellation_db: float
    drop_index: int
    slots: int
    ue_cell: np.ndarray            # (U,)
    served_bits: np.ndarray        # (U, 2) realized bits over the run
    mode_counts: dict              # cell-slot counts per MODE_KEYS entry
    n_iterations: np.ndarray       # (slots,) coordination rounds, 0 for non-iterative
    terminated: np.ndarray         # (slots,) bool, False when the cap stopped it
    control_bits: np.ndarray       # (M,) protocol bits sent per BS over the run
    forwarded_entries: np.ndarray  # (M,) UE-to-UE entries forwarded per BS (last slot)
    measured_k: float              # mean strong-interferer count of the drop
    delays_dl: list = field(default_factory=list)
    delays_ul: list = field(default_factory=list)
    delay_sum: np.ndarray | None = None          # (U, 2) under FTP
    files_completed: np.ndarray | None = None    # (U, 2) under FTP
    files_started: np.ndarray | None = None
    solver_failures: int = 0
    messages: list = field(default_factory=list)
    objective_traces: list = field(default_factory=list)
    init_utility_margin: float = np.inf  # min over slots of util(final) - util(max power)

    def mbps(self) -> np.ndarray:
        """(U, 2) mean per-UE throughput in Mbit/s over the whole run."""
        return self.served_bits / (self.slots * SLOT_S) / 1e6


def make_topology(cfg: DropConfig, seed) -> Topology:
    if cfg.scenario == "indoor_rrh":
        return generate_indoor_topology(seed, cfg.resolved_ues_per_cell())
    if cfg.scenario == "outdoor_pico":
        return generate_outdoor_topology(seed, cfg.resolved_ues_per_cell())
    raise ValueError(f"unknown scenario: {cfg.scenario}")


def drop_rngs(seed: int, drop_index: int):
    """Independent child streams for one drop, shared across systems.

    Keyed only by (seed, drop), so runs that differ in scheduler or
    cancellation see identical placements, gains, and random orders; that is
    what makes cross-system comparisons on "matched drops" meaningful.
    """
    ss = np.random.SeedSequence((seed, drop_index))
    topo_s, gains_s, sched_s, traffic_s = ss.spawn(4)
    return (np.random.default_rng(topo_s), np.random.default_rng(gains_s),
            np.random.default_rng(sched_s), np.random.default_rng(traffic_s))


def run_drop(cfg: DropConfig, seed: int, drop_index: int,
             solver_cfg: SolverConfig | None = None,
             coord_cfg=None) -> DropResult:
    if cfg.scheduler not in SCHEDULERS:
        raise ValueError(f"unknown scheduler: {cfg.scheduler}")
    rng_topo, rng_gains, rng_sched, rng_traffic = drop_rngs(seed, drop_index)
    topo = make_topology(cfg, rng_topo)
    params = ChannelModelParams.for_scenario(cfg.scenario, fading=cfg.fading)
    gains = compute_channel_gains(topo, params, rng_gains)
    budget = LinkBudget.for_scenario(params, cfg.cancellation_db)
    solver_cfg = solver_cfg or SolverConfig()

    tracker = RateTracker.init(topo.num_ue, beta=cfg.beta)
    state_ftp = (TrafficState.init(topo.num_ue, rng_traffic)
                 if cfg.traffic == "ftp" else None)

    m, u = topo.num_bs, topo.num_ue
    served = np.zeros((u, 2))
    mode_counts = {k: 0 for k in MODE_KEYS}
    n_iter = np.zeros(cfg.slots, dtype=int)
    term = np.ones(cfg.slots, dtype=bool)
    control_bits = np.zeros(m, dtype=int)
    forwarded = np.zeros(m, dtype=int)
    messages: list = []
    traces: list = []
    util_margin = np.inf
    failures = 0

    coordinating = cfg.scheduler in ("dfdmr", "hd_sync", "dyn_tdd")
    bw = budget.bandwidth_hz

    for slot in range(cfg.slots):
        t0 = slot * SLOT_S
        if state_ftp is not None:
            state_ftp.admit_arrivals(t0)
            elig_dl, elig_ul = state_ftp.eligibility()
        else:
            elig_dl = elig_ul = None

        w = tracker.weights()
        powers = None
        if cfg.scheduler == "dfdmr":
            sched = select_all_cells(topo, w, gains, budget, elig_dl, elig_ul)
        elif cfg.scheduler == "hd_sync":
            sched = baselines.hd_synchronous_schedule(
                slot, topo, w, gains, budget, elig_dl, elig_ul)
        elif cfg.scheduler == "dyn_tdd":
            sched = baselines.dynamic_tdd_schedule(
                topo, w, gains, budget, elig_dl, elig_ul)
        elif cfg.scheduler == "cfdmr":
            sched = greedy_select(topo, w, gains, budget, rng_sched, elig_dl, elig_ul)
        else:
            sched, powers = baselines.round_robin_schedule(
                slot, topo, cfg.scheduler[3:], budget, rng_sched)

        if coordinating:
            state = init_round(sched, w, gains, topo, budget)
            res = run_coordination(state, budget, solver_cfg,
                                   coord_cfg, collect_traces=cfg.collect_traces)
            powers = PowerAllocation(res.p_dl, res.p_ul)
            n_iter[slot] = res.n_iterations
            term[slot] = res.terminated
            control_bits += res.init_bits + res.iter_bits_per_bs
            forwarded = res.forwarded
            if cfg.collect_traces:
                traces.extend(t for bs_traces in res.objective_traces
                              for t in bs_traces)
                # utility non-degradation vs the max-power start, on the
                # solver's own estimate of the network objective
                pk, _ = _full_problem(state, budget)
                p_fin = np.concatenate([res.p_dl, res.p_ul])[None]
                p_max = np.concatenate([
                    np.where(state.present_dl, budget.p_max_dl_w, 0.0),
                    np.where(state.present_ul, budget.p_max_ul_w, 0.0)])[None]
                diff = float(pk.exact_objective(p_fin, solver_cfg.rate_cap)[0]
                             - pk.exact_objective(p_max, solver_cfg.rate_cap)[0])
                util_margin = min(util_margin, diff)
            if cfg.collect_messages:
                for b in range(m):
                    messages.append({"slot": slot, "bs": b, "type": "init",
                                     "bits": int(res.init_bits[b]),
                                     "forwarded": int(res.forwarded[b])})
                    if res.n_iterations:
                        messages.append({"slot": slot, "bs": b, "type": "iterate",
                                         "bits": int(res.iter_bits_per_bs),
                                         "rounds": int(res.n_iterations)})
        elif cfg.scheduler == "cfdmr":
            alloc = centralized_power_allocate(sched, w, gains, budget, solver_cfg)
            powers = alloc.powers
            failures += int(alloc.fallback)
            bits = central_report_bits(topo, gains)
            control_bits += bits
            if cfg.collect_messages:
                entries = central_report_entries(topo, gains)
                for b in range(m):
                    messages.append({"slot": slot, "bs": b, "type": "central_report",
                                     "bits": int(bits[b]), "entries": int(entries[b])})

        dl_on = sched.dl_ue >= 0
        ul_on = sched.ul_ue >= 0
        # a selected link that power control muted does not count as active
        dl_act = dl_on & (powers.p_dl > 0.0)
        ul_act = ul_on & (powers.p_ul > 0.0)
        mode_counts["fd"] += int((dl_act & ul_act).sum())
        mode_counts["dl_only"] += int((dl_act & ~ul_act).sum())
        mode_counts["ul_only"] += int((ul_act & ~dl_act).sum())
        mode_counts["none"] += int((~dl_act & ~ul_act).sum())

        sinr_dl, sinr_ul = sinr_all(sched, powers, gains, budget)
        r_dl = np.where(dl_on, rate(np.nan_to_num(sinr_dl), budget.rate_cap), 0.0)
        r_ul = np.where(ul_on, rate(np.nan_to_num(sinr_ul), budget.rate_cap), 0.0)

        if state_ftp is not None:
            state_ftp.drain(sched, r_dl * bw, r_ul * bw, t0 + SLOT_S, rng_traffic)
        else:
            served[sched.dl_ue[dl_on], 0] += r_dl[dl_on] * bw * SLOT_S
            served[sched.ul_ue[ul_on], 1] += r_ul[ul_on] * bw * SLOT_S

        tracker.update(sched, r_dl, r_ul)

    if state_ftp is not None:
        served = state_ftp.delivered.copy()

    return DropResult(
        scenario=cfg.scenario, scheduler=cfg.scheduler,
        cancellation_db=cfg.cancellation_db, drop_index=drop_index,
        slots=cfg.slots, ue_cell=topo.ue_cell.copy(), served_bits=served,
        mode_counts=mode_counts, n_iterations=n_iter, terminated=term,
        control_bits=control_bits, forwarded_entries=forwarded,
        measured_k=gains.mean_measured_count(),
        delays_dl=(state_ftp.delays[0] if state_ftp else []),
        delays_ul=(state_ftp.delays[1] if state_ftp else []),
        delay_sum=(state_ftp.delay_sum.copy() if state_ftp else None),
        files_completed=(state_ftp.completed.copy() if state_ftp else None),
        files_started=(state_ftp.started.copy() if state_ftp else None),
        solver_failures=failures,
        messages=messages, objective_traces=traces,
        init_utility_margin=util_margin)


def _full_problem(state, budget: LinkBudget):
    """Network-wide power problem seen through a coordination state.

    Same 2M-variable shape the centralized allocator builds, but from the
    protocol's own knowledge matrices, so audits compare like with like.
    DK rows are terms and columns are variables, hence the transposes: the
    state matrices are stored sender-major.
    """
    m = len(state.present_dl)
    t = 2 * m
    on_d, on_u = state.present_dl, state.present_ul
    b = np.arange(m)

    W = np.concatenate([state.w_dl, state.w_ul])
    SV = np.concatenate([np.where(on_d, b, -1), np.where(on_u, m + b, -1)])
    SC = np.concatenate([state.own_dl_gain, state.own_ul_gain])
    DC = np.concatenate([np.where(on_d, state.noise_ue_w, 1.0),
                         np.where(on_u, state.noise_bs_w, 1.0)])
    DK = np.zeros((t, t))
    x = state.x_dl.copy()
    x[b, b] = 0.0
    DK[:m, :m] = x.T
    DK[:m, m:] = state.y_dl.T
    DK[m:, :m] = state.x_ul.T          # diagonal carries the residual SI gain
    y = state.y_ul.copy()
    y[b, b] = 0.0
    DK[m:, m:] = y.T
    UB = np.concatenate([np.where(on_d, budget.p_max_dl_w, 0.0),
                         np.where(on_u, budget.p_max_ul_w, 0.0)])

    pack = ProblemBatch(W=W[None], SV=SV[None], SC=SC[None], DC=DC[None],
                        DK=DK[None], UB=UB[None])
    return pack, (UB > 0.0)[None]
