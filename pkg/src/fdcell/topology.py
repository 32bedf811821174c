"""Node placement for the indoor RRH grid and the outdoor picocell scenarios.

Positions are in meters. The indoor deployment is a 3x3 grid of square rooms
with one RRH at each room center and UEs dropped uniformly inside their room;
distances wrap around the grid (torus) so every cell sees the same neighbor
statistics. The outdoor deployment drops picocells uniformly inside a
hexagonal region with a minimum BS separation, and UEs uniformly on a disc
around their BS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

INDOOR_ROOM_SIZE_M = 40.0
INDOOR_GRID = (3, 3)
OUTDOOR_HEX_WIDTH_M = 500.0
OUTDOOR_NUM_BS = 12
OUTDOOR_MIN_BS_DIST_M = 40.0
OUTDOOR_CELL_RADIUS_M = 40.0


class PlacementError(RuntimeError):
    """Raised when rejection sampling cannot satisfy placement constraints."""


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class Topology:
    """Static node layout for one drop.

    ue_cell[u] is the serving BS of UE u (nearest BS). wrap_dims, when set,
    gives the torus periods (meters) used for all distance computations.
    """

    scenario: str
    bs_pos: np.ndarray               # (M, 2) meters
    ue_pos: np.ndarray               # (U, 2) meters
    ue_cell: np.ndarray              # (U,) int
    wrap_dims: np.ndarray | None = None   # (2,) meters or None
    ues_per_cell: int = field(default=0)

    @property
    def num_bs(self) -> int:
        return self.bs_pos.shape[0]

    @property
    def num_ue(self) -> int:
        return self.ue_pos.shape[0]

    def cells(self) -> list[np.ndarray]:
        """UE indices served by each BS."""
        return [np.flatnonzero(self.ue_cell == b) for b in range(self.num_bs)]

    # -- distances ---------------------------------------------------------

    def _delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.abs(a[:, None, :] - b[None, :, :])
        if self.wrap_dims is not None:
            d = np.minimum(d, self.wrap_dims[None, None, :] - d)
        return d

    def dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pairwise distances (len(a) x len(b)), wrap-aware."""
        d = self._delta(np.atleast_2d(a), np.atleast_2d(b))
        return np.sqrt((d ** 2).sum(axis=-1))

    def bs_ue_dist(self) -> np.ndarray:
        return self.dist(self.bs_pos, self.ue_pos)

    def bs_bs_dist(self) -> np.ndarray:
        return self.dist(self.bs_pos, self.bs_pos)

    def ue_ue_dist(self) -> np.ndarray:
        return self.dist(self.ue_pos, self.ue_pos)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        obj = {
            "scenario": self.scenario,
            "bs_positions_m": self.bs_pos.tolist(),
            "ue_positions_m": self.ue_pos.tolist(),
            "ue_cell": self.ue_cell.tolist(),
            "wrap_dims_m": None if self.wrap_dims is None else self.wrap_dims.tolist(),
            "ues_per_cell": self.ues_per_cell,
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        obj = json.loads(text)
        wrap = obj.get("wrap_dims_m")
        return cls(
            scenario=obj["scenario"],
            bs_pos=np.asarray(obj["bs_positions_m"], dtype=float),
            ue_pos=np.asarray(obj["ue_positions_m"], dtype=float),
            ue_cell=np.asarray(obj["ue_cell"], dtype=int),
            wrap_dims=None if wrap is None else np.asarray(wrap, dtype=float),
            ues_per_cell=int(obj.get("ues_per_cell", 0)),
        )


def generate_indoor_topology(seed, ues_per_cell: int = 8) -> Topology:
    """3x3 grid of 40 m rooms, RRH at each room center, UEs uniform per room.

    Distances wrap around the 120 m x 120 m grid so the layout is
    translation invariant (no edge cells).
    """
    rng = _as_rng(seed)
    nx, ny = INDOOR_GRID
    size = INDOOR_ROOM_SIZE_M
    centers = []
    for j in range(ny):
        for i in range(nx):
            centers.append(((i + 0.5) * size, (j + 0.5) * size))
    bs_pos = np.asarray(centers)
    m = bs_pos.shape[0]

    ue_pos = np.empty((m * ues_per_cell, 2))
    ue_cell = np.empty(m * ues_per_cell, dtype=int)
    for b in range(m):
        lo = bs_pos[b] - size / 2.0
        ue_pos[b * ues_per_cell:(b + 1) * ues_per_cell] = lo + rng.uniform(
            0.0, size, size=(ues_per_cell, 2)
        )
        ue_cell[b * ues_per_cell:(b + 1) * ues_per_cell] = b

    wrap = np.asarray([nx * size, ny * size])
    topo = Topology("indoor_rrh", bs_pos, ue_pos, ue_cell, wrap, ues_per_cell)
    # Uniform-in-room placement always leaves the room RRH nearest (wrap-aware).
    nearest = np.argmin(topo.bs_ue_dist(), axis=0)
    topo.ue_cell = nearest
    return topo


def _hex_contains(p: np.ndarray, circumradius: float) -> bool:
    """Point-in-regular-hexagon (flat-top, centered at origin)."""
    apothem = circumradius * np.sqrt(3.0) / 2.0
    for ang in (np.pi / 6.0, np.pi / 2.0, 5.0 * np.pi / 6.0):
        if abs(p[0] * np.cos(ang) + p[1] * np.sin(ang)) > apothem + 1e-9:
            return False
    return True


def _sample_in_hex(rng: np.random.Generator, circumradius: float) -> np.ndarray:
    half_h = circumradius * np.sqrt(3.0) / 2.0
    for _ in range(1000):
        p = rng.uniform([-circumradius, -half_h], [circumradius, half_h])
        if _hex_contains(p, circumradius):
            return p
    raise PlacementError("hexagon rejection sampling failed")


def generate_outdoor_topology(seed, ues_per_cell: int = 10) -> Topology:
    """12 picocells uniform in a 500 m-wide hexagon, >= 40 m apart.

    Each BS drops `ues_per_cell` UEs uniformly on a 40 m disc around itself;
    every UE then attaches to its nearest BS (discs can overlap, so a few
    UEs may be served by a neighbor closer than the drop center).
    """
    rng = _as_rng(seed)
    circumradius = OUTDOOR_HEX_WIDTH_M / 2.0

    bs_pos = None
    for _restart in range(200):
        placed: list[np.ndarray] = []
        ok = True
        for _b in range(OUTDOOR_NUM_BS):
            found = False
            for _try in range(400):
                p = _sample_in_hex(rng, circumradius)
                if all(np.hypot(*(p - q)) >= OUTDOOR_MIN_BS_DIST_M for q in placed):
                    placed.append(p)
                    found = True
                    break
            if not found:
                ok = False
                break
        if ok:
            bs_pos = np.asarray(placed)
            break
    if bs_pos is None:
        raise PlacementError("could not place BSs with minimum separation")

    m = bs_pos.shape[0]
    ue_pos = np.empty((m * ues_per_cell, 2))
    for b in range(m):
        r = OUTDOOR_CELL_RADIUS_M * np.sqrt(rng.uniform(size=ues_per_cell))
        th = rng.uniform(0.0, 2.0 * np.pi, size=ues_per_cell)
        ue_pos[b * ues_per_cell:(b + 1) * ues_per_cell, 0] = bs_pos[b, 0] + r * np.cos(th)
        ue_pos[b * ues_per_cell:(b + 1) * ues_per_cell, 1] = bs_pos[b, 1] + r * np.sin(th)

    topo = Topology("outdoor_pico", bs_pos, ue_pos, np.zeros(m * ues_per_cell, dtype=int),
                    None, ues_per_cell)
    topo.ue_cell = np.argmin(topo.bs_ue_dist(), axis=0)
    return topo
