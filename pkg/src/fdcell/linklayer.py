"""Link-level quantities: noise, SINR under a network-wide schedule, rates.

Conventions: powers in watts, gains linear, rates in b/s/Hz capped by the
modulation limit. A schedule holds one optional downlink UE and one optional
uplink UE per cell (-1 = none). Realized SINRs use the true gain matrices;
the per-cell selection view uses only in-cell quantities and the measured
UE-to-UE channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelGains, ChannelModelParams

RATE_CAP_BPS_HZ = 6.0
P_MAX_DL_DBM = 24.0
P_MAX_UL_DBM = 23.0
NOISE_DENSITY_DBM_HZ = -174.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w) -> float:
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        dbm = 10.0 * np.log10(w) + 30.0
    return dbm if dbm.ndim else float(dbm)


def noise_power(bandwidth_hz: float, nf_db: float,
                density_dbm_hz: float = NOISE_DENSITY_DBM_HZ) -> float:
    """Thermal noise power in watts for a receiver noise figure."""
    dbm = density_dbm_hz + 10.0 * np.log10(bandwidth_hz) + nf_db
    return dbm_to_watts(dbm)


@dataclass
class LinkBudget:
    """Per-run radio constants: SI cancellation, noise floors, power caps."""

    gamma: float                 # residual self-interference gain (linear)
    noise_bs_w: float
    noise_ue_w: float
    p_max_dl_w: float = dbm_to_watts(P_MAX_DL_DBM)
    p_max_ul_w: float = dbm_to_watts(P_MAX_UL_DBM)
    rate_cap: float = RATE_CAP_BPS_HZ
    bandwidth_hz: float = 10e6

    @classmethod
    def for_scenario(cls, params: ChannelModelParams,
                     cancellation_db: float = np.inf) -> "LinkBudget":
        gamma = 0.0 if np.isinf(cancellation_db) else 10.0 ** (-cancellation_db / 10.0)
        return cls(
            gamma=gamma,
            noise_bs_w=noise_power(params.bandwidth_hz, params.nf_bs_db),
            noise_ue_w=noise_power(params.bandwidth_hz, params.nf_ue_db),
            bandwidth_hz=params.bandwidth_hz,
        )


@dataclass
class ScheduleDecision:
    """Selected UEs per cell; -1 marks an idle direction."""

    dl_ue: np.ndarray   # (M,) int, global UE index or -1
    ul_ue: np.ndarray   # (M,) int

    @classmethod
    def empty(cls, m: int) -> "ScheduleDecision":
        return cls(np.full(m, -1, dtype=int), np.full(m, -1, dtype=int))

    def copy(self) -> "ScheduleDecision":
        return ScheduleDecision(self.dl_ue.copy(), self.ul_ue.copy())


@dataclass
class PowerAllocation:
    """Transmit powers in watts; zero where the direction is idle."""

    p_dl: np.ndarray    # (M,) BS transmit power
    p_ul: np.ndarray    # (M,) power of the scheduled uplink UE

    @classmethod
    def max_power(cls, sched: ScheduleDecision, budget: LinkBudget) -> "PowerAllocation":
        return cls(
            np.where(sched.dl_ue >= 0, budget.p_max_dl_w, 0.0),
            np.where(sched.ul_ue >= 0, budget.p_max_ul_w, 0.0),
        )


def rate(sinr, cap: float = RATE_CAP_BPS_HZ):
    """Spectral efficiency log2(1+SINR), capped."""
    r = np.minimum(np.log2(1.0 + np.asarray(sinr, dtype=float)), cap)
    return r if r.ndim else float(r)


def sinr_all(sched: ScheduleDecision, powers: PowerAllocation,
             gains: ChannelGains, budget: LinkBudget):
    """Realized (DL, UL) SINR per cell under the full network schedule.

    Uses true gains. Downlink interference sums every other BS plus every
    scheduled uplink UE (own cell included); uplink interference sums other
    cells' uplink UEs and BSs plus the residual self-interference of the own
    BS transmit power. Idle directions give NaN.
    """
    m = sched.dl_ue.shape[0]
    dl_on = sched.dl_ue >= 0
    ul_on = sched.ul_ue >= 0
    p_dl = np.where(dl_on, powers.p_dl, 0.0)
    p_ul = np.where(ul_on, powers.p_ul, 0.0)

    dl_sinr = np.full(m, np.nan)
    ul_sinr = np.full(m, np.nan)

    ul_idx = sched.ul_ue[ul_on]
    p_ul_act = p_ul[ul_on]

    if dl_on.any():
        rx = sched.dl_ue[dl_on]                       # receiving UEs
        recv_bs = gains.g_bs_ue[:, rx] * p_dl[:, None]      # (M, n_dl)
        signal = p_dl[dl_on] * gains.g_bs_ue[dl_on, rx]
        bs_interf = recv_bs.sum(axis=0) - signal
        if ul_on.any():
            ue_interf = (gains.g_ue_ue[np.ix_(ul_idx, rx)] * p_ul_act[:, None]).sum(axis=0)
        else:
            ue_interf = 0.0
        dl_sinr[dl_on] = signal / (budget.noise_ue_w + bs_interf + ue_interf)

    if ul_on.any():
        cells = np.flatnonzero(ul_on)
        signal = p_ul[cells] * gains.g_bs_ue[cells, ul_idx]
        # every scheduled uplink UE heard at each BS; remove own-cell term
        heard = gains.g_bs_ue[np.ix_(cells, ul_idx)] * p_ul_act[None, :]   # (n_ul, n_ul)
        ue_interf = heard.sum(axis=1) - np.diag(heard)
        bs_interf = (gains.g_bs_bs[:, cells] * p_dl[:, None]).sum(axis=0)
        self_interf = p_dl[cells] * budget.gamma
        ul_sinr[cells] = signal / (budget.noise_bs_w + ue_interf + bs_interf + self_interf)

    return dl_sinr, ul_sinr


def sinr_downlink(cell: int, sched: ScheduleDecision, powers: PowerAllocation,
                  gains: ChannelGains, budget: LinkBudget) -> float:
    return float(sinr_all(sched, powers, gains, budget)[0][cell])


def sinr_uplink(cell: int, sched: ScheduleDecision, powers: PowerAllocation,
                gains: ChannelGains, budget: LinkBudget) -> float:
    return float(sinr_all(sched, powers, gains, budget)[1][cell])


def intra_cell_sinr(cell: int, dl_ue: int, ul_ue: int, gains: ChannelGains,
                    budget: LinkBudget):
    """Selection-stage SINR pair seen inside one cell at max powers.

    Ignores all inter-cell interference; the only cross terms are the
    measured UE-to-UE channel between the candidate pair and the residual
    self-interference at the BS. Returns NaN for an absent direction.
    """
    dl = np.nan
    ul = np.nan
    if dl_ue >= 0:
        interf = 0.0
        if ul_ue >= 0:
            interf = budget.p_max_ul_w * gains.g_ue_ue_measured[ul_ue, dl_ue]
        dl = budget.p_max_dl_w * gains.g_bs_ue[cell, dl_ue] / (budget.noise_ue_w + interf)
    if ul_ue >= 0:
        interf = budget.p_max_dl_w * budget.gamma if dl_ue >= 0 else 0.0
        ul = budget.p_max_ul_w * gains.g_bs_ue[cell, ul_ue] / (budget.noise_bs_w + interf)
    return dl, ul
