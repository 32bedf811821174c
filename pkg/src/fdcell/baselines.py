"""Reference schedulers: synchronized HD TDD, dynamic TDD, and round robin.

The two HD baselines pick one link per cell per slot and then run the same
power coordination as the full scheduler (their local problems simply carry
a single term per cell). The round-robin pair skips power control entirely
and transmits at the caps, which is what makes it a useful lower bound: its
FD flavor shows what full duplex does without any interference awareness.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelGains
from .linklayer import LinkBudget, PowerAllocation, ScheduleDecision, rate
from .pf import chi
from .topology import Topology

DL, UL = 0, 1


def _single_link_utils(cell: int, ues, weights, gains: ChannelGains,
                       budget: LinkBudget, direction: int):
    """chi of each UE served alone in one direction, interference-free."""
    g = gains.g_bs_ue[cell, ues]
    if direction == DL:
        sinr = budget.p_max_dl_w * g / budget.noise_ue_w
    else:
        sinr = budget.p_max_ul_w * g / budget.noise_bs_w
    return chi(weights[ues, direction], rate(sinr, budget.rate_cap))


def hd_synchronous_schedule(slot: int, topo: Topology, weights, gains: ChannelGains,
                            budget: LinkBudget, elig_dl=None, elig_ul=None) -> ScheduleDecision:
    """All cells serve the same direction: downlink on even slots, uplink on odd.

    Within a cell the highest-chi eligible UE wins (ties to the lowest UE
    id); a cell with no eligible UE idles.
    """
    sched = ScheduleDecision.empty(topo.num_bs)
    direction = DL if slot % 2 == 0 else UL
    elig = elig_dl if direction == DL else elig_ul
    for b, ues in enumerate(topo.cells()):
        cand = ues if elig is None else ues[elig[ues]]
        if len(cand) == 0:
            continue
        util = _single_link_utils(b, cand, weights, gains, budget, direction)
        pick = int(cand[int(np.argmax(util))])
        if direction == DL:
            sched.dl_ue[b] = pick
        else:
            sched.ul_ue[b] = pick
    return sched


def dynamic_tdd_schedule(topo: Topology, weights, gains: ChannelGains,
                         budget: LinkBudget, elig_dl=None, elig_ul=None) -> ScheduleDecision:
    """Each cell serves whichever single link earns the most utility.

    Candidates are every eligible UE in either direction plus staying idle;
    exact ties prefer downlink, then the lowest UE id. Still half duplex:
    never both directions at once.
    """
    sched = ScheduleDecision.empty(topo.num_bs)
    for b, ues in enumerate(topo.cells()):
        cd = ues if elig_dl is None else ues[elig_dl[ues]]
        cu = ues if elig_ul is None else ues[elig_ul[ues]]
        best, pick, direction = 0.0, -1, DL
        if len(cd):
            util = _single_link_utils(b, cd, weights, gains, budget, DL)
            k = int(np.argmax(util))
            if util[k] > best:
                best, pick, direction = float(util[k]), int(cd[k]), DL
        if len(cu):
            util = _single_link_utils(b, cu, weights, gains, budget, UL)
            k = int(np.argmax(util))
            if util[k] > best:
                best, pick, direction = float(util[k]), int(cu[k]), UL
        if pick >= 0:
            if direction == DL:
                sched.dl_ue[b] = pick
            else:
                sched.ul_ue[b] = pick
    return sched


def round_robin_schedule(slot: int, topo: Topology, mode: str, budget: LinkBudget,
                         rng: np.random.Generator):
    """Fixed-power round robin; mode "hd" serves one direction per slot by
    parity, mode "fd" adds a uniformly random distinct UE on the other
    direction. Returns (schedule, max-power allocation); no coordination runs
    on top of this.
    """
    if mode not in ("hd", "fd"):
        raise ValueError(f"round robin mode must be 'hd' or 'fd', got {mode!r}")
    sched = ScheduleDecision.empty(topo.num_bs)
    direction = DL if slot % 2 == 0 else UL
    turn = slot // 2
    for b, ues in enumerate(topo.cells()):
        pick = int(ues[turn % len(ues)])
        if direction == DL:
            sched.dl_ue[b] = pick
        else:
            sched.ul_ue[b] = pick
        if mode == "fd" and len(ues) > 1:
            others = ues[ues != pick]
            partner = int(others[rng.integers(len(others))])
            if direction == DL:
                sched.ul_ue[b] = partner
            else:
                sched.dl_ue[b] = partner
    return sched, PowerAllocation.max_power(sched, budget)
