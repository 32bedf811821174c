"""Proportional fair bookkeeping: average rates, weights, marginal utility.

The long-term utility is sum(log R_avg) over all UE-directions. Each slot,
an exponentially weighted average rate is updated per UE-direction; the
schedulers maximize the sum of per-link marginal utilities
chi = ln(1 + w * R) with w = (1-beta) / (beta * R_avg), which is the exact
one-slot increment of the long-term objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linklayer import ScheduleDecision

DL, UL = 0, 1


@dataclass
class RateTracker:
    """EWMA average rates (b/s/Hz) per UE and direction.

    avg[:, 0] is downlink, avg[:, 1] uplink. A small floor keeps weights
    bounded and the cold start well-defined.
    """

    avg: np.ndarray
    beta: float = 0.99
    floor: float = 1e-3

    @classmethod
    def init(cls, num_ue: int, beta: float = 0.99, floor: float = 1e-3) -> "RateTracker":
        return cls(np.full((num_ue, 2), floor, dtype=float), beta, floor)

    def update(self, sched: ScheduleDecision, dl_rates: np.ndarray,
               ul_rates: np.ndarray) -> None:
        """Apply one slot: decay everyone, blend in the realized rates.

        dl_rates/ul_rates are per-cell realized rates (b/s/Hz) aligned with
        the schedule; entries for idle directions are ignored.
        """
        self.avg *= self.beta
        dl_on = sched.dl_ue >= 0
        ul_on = sched.ul_ue >= 0
        if dl_on.any():
            r = np.nan_to_num(dl_rates[dl_on])
            self.avg[sched.dl_ue[dl_on], DL] += (1.0 - self.beta) * r
        if ul_on.any():
            r = np.nan_to_num(ul_rates[ul_on])
            self.avg[sched.ul_ue[ul_on], UL] += (1.0 - self.beta) * r
        np.maximum(self.avg, self.floor, out=self.avg)

    def weights(self) -> np.ndarray:
        """(U, 2) scheduling weights (1-beta)/(beta*avg)."""
        return (1.0 - self.beta) / (self.beta * self.avg)

    def weight(self, ue: int, direction: int) -> float:
        return float(self.weights()[ue, direction])


def chi(weight, r):
    """Marginal utility of serving one link at rate r: ln(1 + w*r)."""
    x = np.log1p(np.asarray(weight, dtype=float) * np.asarray(r, dtype=float))
    return x if x.ndim else float(x)


def cell_utility(w_dl: float, r_dl: float, w_ul: float, r_ul: float) -> float:
    """chi(dl) + chi(ul) with absent links (NaN or negative rate) counting 0."""
    total = 0.0
    if r_dl is not None and np.isfinite(r_dl) and r_dl >= 0 and w_dl > 0:
        total += chi(w_dl, r_dl)
    if r_ul is not None and np.isfinite(r_ul) and r_ul >= 0 and w_ul > 0:
        total += chi(w_ul, r_ul)
    return float(total)


def network_objective(sched: ScheduleDecision, dl_rates: np.ndarray,
                      ul_rates: np.ndarray, weights: np.ndarray) -> float:
    """Sum of cell utilities for realized rates under given weights (U, 2)."""
    total = 0.0
    dl_on = sched.dl_ue >= 0
    ul_on = sched.ul_ue >= 0
    if dl_on.any():
        w = weights[sched.dl_ue[dl_on], DL]
        total += chi(w, np.nan_to_num(dl_rates[dl_on])).sum()
    if ul_on.any():
        w = weights[sched.ul_ue[ul_on], UL]
        total += chi(w, np.nan_to_num(ul_rates[ul_on])).sum()
    return float(total)
