"""Channel gains: LOS draws, path loss, shadowing, and interferer discovery.

Models follow the 3GPP-style indoor hotzone / outdoor picocell tables used
for small-cell full-duplex studies. All path loss formulas take distance in
kilometers and return dB. Gains are linear power ratios; matrices are
symmetric (TDD reciprocity), with zero diagonals where self-links make no
sense (UE-UE, BS-BS).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .topology import Topology

# Link classes
INDOOR_INTRA = "indoor_intra"      # same-room link (BS-UE or UE-UE)
INDOOR_INTER = "indoor_inter"      # any link crossing a room boundary
OUTDOOR_BS_UE = "outdoor_bs_ue"
OUTDOOR_BS_BS = "outdoor_bs_bs"
OUTDOOR_UE_UE = "outdoor_ue_ue"

PENETRATION_DB = 20.0              # flat wall loss on indoor inter-cell links


def los_probability_indoor(r_km):
    """LOS probability for the indoor hotzone layout (piecewise in distance).

    1 up to 18 m, exponential decay to ~0.5 between 18 m and 37 m, then 0.5.
    """
    r = np.asarray(r_km, dtype=float)
    mid = np.exp(-(r - 0.018) / 0.027)
    p = np.where(r <= 0.018, 1.0, np.where(r < 0.037, mid, 0.5))
    return p if p.ndim else float(p)


def los_probability_outdoor(r_km):
    """LOS probability for outdoor picocell links (applies to BS-BS and BS-UE)."""
    r = np.asarray(r_km, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        term1 = np.minimum(0.5, 5.0 * np.exp(-0.156 / np.maximum(r, 1e-12)))
        term2 = np.minimum(0.5, 5.0 * np.exp(-r / 0.03))
    p = np.clip(0.5 - term1 + term2, 0.0, 1.0)
    return p if p.ndim else float(p)


def path_loss_db(link_class: str, r_km, los):
    """Path loss in dB for one link class.

    `los` selects the LOS/NLOS branch where the class has one; classes with a
    single formula (indoor inter-cell, outdoor UE-UE) ignore it for the mean
    path loss (it still selects the shadowing sigma).
    """
    r = np.asarray(r_km, dtype=float)
    los = np.asarray(los, dtype=bool)
    lg = np.log10(r)
    if link_class == INDOOR_INTRA:
        pl = np.where(los, 89.5 + 16.9 * lg, 147.4 + 43.3 * lg)
    elif link_class == INDOOR_INTER:
        pl = np.maximum(131.1 + 42.8 * lg, 147.4 + 43.3 * lg)
    elif link_class == OUTDOOR_BS_UE:
        pl = np.where(los, 103.8 + 20.9 * lg, 145.4 + 37.5 * lg)
    elif link_class == OUTDOOR_BS_BS:
        los_pl = np.where(r < 2.0 / 3.0, 98.4 + 20.0 * lg, 101.9 + 40.0 * lg)
        pl = np.where(los, los_pl, 169.36 + 40.0 * lg)
    elif link_class == OUTDOOR_UE_UE:
        pl = np.where(r <= 0.05, 98.45 + 20.0 * lg, 175.78 + 40.0 * lg)
    else:
        raise ValueError(f"unknown link class: {link_class}")
    return pl if pl.ndim else float(pl)


def shadowing_sigma_db(link_class: str, los):
    """Shadowing standard deviation (dB) per link class and LOS state."""
    los = np.asarray(los, dtype=bool)
    if link_class in (INDOOR_INTRA, INDOOR_INTER, OUTDOOR_BS_UE):
        s = np.where(los, 3.0, 4.0)
    elif link_class == OUTDOOR_BS_BS:
        s = np.where(los, 6.0, 6.0)
    elif link_class == OUTDOOR_UE_UE:
        s = np.where(los, 4.0, 4.0)
    else:
        raise ValueError(f"unknown link class: {link_class}")
    return s if s.ndim else float(s)


@dataclass
class ChannelModelParams:
    """Scenario-level channel constants."""

    scenario: str
    nf_bs_db: float
    nf_ue_db: float
    min_dist_m: float
    bandwidth_hz: float = 10e6
    shadowing: bool = True
    fading: bool = False    # static Rayleigh (exp) power factor per link when on
    # Indoor cell-boundary wall loss: one wall on BS-UE inter-cell links
    # (the RRH head sits high, clearing its own cell's partition), both
    # cells' walls on links between two floor-level UEs or two RRH backhaul
    # paths routed down into the rooms.
    penetration_bs_db: float = PENETRATION_DB
    penetration_ue_ue_db: float = 2 * PENETRATION_DB
    penetration_bs_bs_db: float = 2 * PENETRATION_DB

    @classmethod
    def for_scenario(cls, scenario: str, fading: bool = False) -> "ChannelModelParams":
        if scenario == "indoor_rrh":
            return cls(scenario, nf_bs_db=8.0, nf_ue_db=9.0, min_dist_m=1.0, fading=fading)
        if scenario == "outdoor_pico":
            return cls(scenario, nf_bs_db=13.0, nf_ue_db=9.0, min_dist_m=3.0, fading=fading)
        raise ValueError(f"unknown scenario: {scenario}")


@dataclass
class ChannelGains:
    """Linear power gains for one drop plus the measured UE-to-UE subset.

    measured_mask[j, u] is True when UE u can measure (and report) the
    channel from UE j; thresholding is receiver-side, so the mask is not
    symmetric even though g_ue_ue is.
    """

    g_bs_ue: np.ndarray        # (M, U)
    g_bs_bs: np.ndarray        # (M, M), zero diagonal
    g_ue_ue: np.ndarray        # (U, U), zero diagonal
    measured_mask: np.ndarray  # (U, U) bool, zero diagonal

    @property
    def g_ue_ue_measured(self) -> np.ndarray:
        return self.g_ue_ue * self.measured_mask

    def mean_measured_count(self) -> float:
        """Mean number of strong UE interferers per UE (the K statistic)."""
        return float(self.measured_mask.sum(axis=0).mean())

    def to_json(self) -> str:
        def to_db(g):
            with np.errstate(divide="ignore"):
                db = 10.0 * np.log10(g)
            return [[None if not np.isfinite(v) else round(v, 6) for v in row] for row in db]

        obj = {
            "bs_ue_db": to_db(self.g_bs_ue),
            "bs_bs_db": to_db(self.g_bs_bs),
            "ue_ue_db": to_db(self.g_ue_ue),
            "measured": [sorted(np.flatnonzero(self.measured_mask[:, u]).tolist())
                         for u in range(self.g_ue_ue.shape[0])],
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "ChannelGains":
        obj = json.loads(text)

        def from_db(rows):
            a = np.asarray([[(-np.inf if v is None else v) for v in row] for row in rows])
            return 10.0 ** (a / 10.0)

        g_ue_ue = from_db(obj["ue_ue_db"])
        u = g_ue_ue.shape[0]
        mask = np.zeros((u, u), dtype=bool)
        for col, js in enumerate(obj["measured"]):
            mask[np.asarray(js, dtype=int), col] = True
        return cls(from_db(obj["bs_ue_db"]), from_db(obj["bs_bs_db"]), g_ue_ue, mask)


def _symmetric_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.uniform(size=(n, n))
    iu = np.triu_indices(n, k=1)
    out = np.zeros((n, n))
    out[iu] = u[iu]
    return out + out.T


def _symmetric_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal(size=(n, n))
    iu = np.triu_indices(n, k=1)
    out = np.zeros((n, n))
    out[iu] = g[iu]
    return out + out.T


def _gain_matrix(dist_m, link_class, los_draw, shadow_std_normal, params: ChannelModelParams,
                 fade=None, penetration_db=0.0):
    r_km = np.maximum(dist_m, params.min_dist_m) / 1000.0
    pl = path_loss_db(link_class, r_km, los_draw) + penetration_db
    if params.shadowing:
        pl = pl + shadow_std_normal * shadowing_sigma_db(link_class, los_draw)
    g = 10.0 ** (-np.asarray(pl) / 10.0)
    if fade is not None:
        g = g * fade
    return g


def compute_channel_gains(topo: Topology, params: ChannelModelParams,
                          rng: np.random.Generator) -> ChannelGains:
    """Draw LOS states, shadowing, and (optionally) fading; build gain matrices.

    Symmetric draws are made on the upper triangle and mirrored so that
    reciprocity holds exactly. The UE-to-UE measured mask keeps, per receiving
    UE, the interferers whose gain exceeds the mean gain from that UE to its
    non-serving BSs.
    """
    m, u = topo.num_bs, topo.num_ue
    d_bu = topo.bs_ue_dist()
    d_bb = topo.bs_bs_dist()
    d_uu = topo.ue_ue_dist()

    indoor = topo.scenario == "indoor_rrh"

    # LOS draws (fixed order for reproducibility: bs-ue, bs-bs, ue-ue)
    if indoor:
        p_bu = los_probability_indoor(np.maximum(d_bu, params.min_dist_m) / 1000.0)
        p_bb = los_probability_indoor(np.maximum(d_bb, params.min_dist_m) / 1000.0)
        p_uu = los_probability_indoor(np.maximum(d_uu, params.min_dist_m) / 1000.0)
    else:
        p_bu = los_probability_outdoor(np.maximum(d_bu, params.min_dist_m) / 1000.0)
        p_bb = los_probability_outdoor(np.maximum(d_bb, params.min_dist_m) / 1000.0)
        # outdoor UE-UE has a single-branch loss; LOS state only picks sigma
        p_uu = np.zeros_like(d_uu)

    los_bu = rng.uniform(size=(m, u)) < p_bu
    los_bb = _symmetric_uniform(rng, m) < p_bb
    los_uu = _symmetric_uniform(rng, u) < p_uu

    sh_bu = rng.standard_normal(size=(m, u)) if params.shadowing else np.zeros((m, u))
    sh_bb = _symmetric_normal(rng, m) if params.shadowing else np.zeros((m, m))
    sh_uu = _symmetric_normal(rng, u) if params.shadowing else np.zeros((u, u))

    if params.fading:
        fd_bu = rng.exponential(size=(m, u))
        fd_bb_u = _symmetric_uniform(rng, m)
        fd_uu_u = _symmetric_uniform(rng, u)
        # mirror-symmetric exponential draws from symmetric uniforms
        with np.errstate(divide="ignore"):
            fd_bb = -np.log(np.where(fd_bb_u > 0, fd_bb_u, 1.0))
            fd_uu = -np.log(np.where(fd_uu_u > 0, fd_uu_u, 1.0))
    else:
        fd_bu = fd_bb = fd_uu = None

    if indoor:
        # Inter-cell links pay the cell boundary-wall loss on top of the
        # between-cells path loss: one wall when a BS is an endpoint, both
        # endpoint cells' walls for UE-to-UE links.
        same_bu = topo.ue_cell[None, :] == np.arange(m)[:, None]
        same_uu = topo.ue_cell[None, :] == topo.ue_cell[:, None]
        g_bu = np.where(
            same_bu,
            _gain_matrix(d_bu, INDOOR_INTRA, los_bu, sh_bu, params, fd_bu),
            _gain_matrix(d_bu, INDOOR_INTER, los_bu, sh_bu, params, fd_bu,
                         penetration_db=params.penetration_bs_db),
        )
        g_uu = np.where(
            same_uu,
            _gain_matrix(d_uu, INDOOR_INTRA, los_uu, sh_uu, params, fd_uu),
            _gain_matrix(d_uu, INDOOR_INTER, los_uu, sh_uu, params, fd_uu,
                         penetration_db=params.penetration_ue_ue_db),
        )
        g_bb = _gain_matrix(d_bb, INDOOR_INTER, los_bb, sh_bb, params, fd_bb,
                            penetration_db=params.penetration_bs_bs_db)
    else:
        g_bu = _gain_matrix(d_bu, OUTDOOR_BS_UE, los_bu, sh_bu, params, fd_bu)
        g_uu = _gain_matrix(d_uu, OUTDOOR_UE_UE, los_uu, sh_uu, params, fd_uu)
        g_bb = _gain_matrix(d_bb, OUTDOOR_BS_BS, los_bb, sh_bb, params, fd_bb)

    np.fill_diagonal(g_bb, 0.0)
    np.fill_diagonal(g_uu, 0.0)

    gains = ChannelGains(g_bu, g_bb, g_uu, np.zeros((u, u), dtype=bool))
    gains.measured_mask = compute_strong_interferers(gains, topo)
    return gains


def compute_strong_interferers(gains: ChannelGains, topo: Topology) -> np.ndarray:
    """Receiver-side thresholding of UE-to-UE channels.

    UE u measures UE j when g_ue_ue[j, u] exceeds the mean gain from u to its
    non-serving BSs (interference-strength scale set by the BS tier).
    """
    m, u = gains.g_bs_ue.shape
    if m < 2:
        return np.zeros((u, u), dtype=bool)
    serving = gains.g_bs_ue[topo.ue_cell, np.arange(u)]
    thr = (gains.g_bs_ue.sum(axis=0) - serving) / (m - 1)
    mask = gains.g_ue_ue > thr[None, :]
    np.fill_diagonal(mask, False)
    return mask
