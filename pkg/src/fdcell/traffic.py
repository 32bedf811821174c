"""FTP-style traffic: one file in flight per UE per direction.

A UE alternates between waiting for its next request and draining a 1.25 MB
file; the gap from a completion to the next request is exponential with a
1 second mean, so files never queue. Delay is measured from the request
instant (continuous time) to the end of the slot that drains the last bit.
Full-buffer runs simply never construct a state: every UE is then always
eligible and nothing is drained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linklayer import ScheduleDecision

DL, UL = 0, 1
FILE_BITS = 1e7            # 1.25 MB
MEAN_GAP_S = 1.0
SLOT_S = 1e-3              # LTE TTI


@dataclass
class TrafficState:
    """Per-UE, per-direction download/upload cycle bookkeeping.

    pending[u, d] > 0 while a file is in flight; next_arrival holds the
    absolute time of the next request (inf while one is active). delivered
    counts every bit actually drained, so conservation is checkable:
    started * FILE_BITS == delivered + pending, per UE and direction.
    """

    pending: np.ndarray        # (U, 2) bits left of the active file
    arrival: np.ndarray        # (U, 2) request time of the active file
    next_arrival: np.ndarray   # (U, 2) absolute time, inf while active
    delivered: np.ndarray      # (U, 2) bits drained so far
    started: np.ndarray        # (U, 2) int, files begun
    completed: np.ndarray      # (U, 2) int, files finished
    delay_sum: np.ndarray | None = None   # (U, 2) summed delays, for per-UE means
    delays: list = field(default_factory=lambda: [[], []])
    file_bits: float = FILE_BITS
    mean_gap_s: float = MEAN_GAP_S

    @classmethod
    def init(cls, num_ue: int, rng: np.random.Generator,
             file_bits: float = FILE_BITS, mean_gap_s: float = MEAN_GAP_S) -> "TrafficState":
        """Start every UE idle, first requests one exponential gap from t=0."""
        shape = (num_ue, 2)
        return cls(
            pending=np.zeros(shape),
            arrival=np.full(shape, np.nan),
            next_arrival=rng.exponential(mean_gap_s, shape),
            delivered=np.zeros(shape),
            started=np.zeros(shape, dtype=int),
            completed=np.zeros(shape, dtype=int),
            delay_sum=np.zeros(shape),
            file_bits=file_bits,
            mean_gap_s=mean_gap_s,
        )

    def admit_arrivals(self, t_slot_start: float) -> None:
        """Activate every request whose time has come; call at each slot start."""
        due = self.next_arrival <= t_slot_start
        if due.any():
            self.pending[due] = self.file_bits
            self.arrival[due] = self.next_arrival[due]
            self.next_arrival[due] = np.inf
            self.started[due] += 1

    def eligibility(self):
        """(elig_dl, elig_ul) boolean masks over UEs: data pending to move."""
        active = self.pending > 0.0
        return active[:, DL], active[:, UL]

    def drain(self, sched: ScheduleDecision, dl_bps: np.ndarray, ul_bps: np.ndarray,
              t_slot_end: float, rng: np.random.Generator,
              slot_s: float = SLOT_S) -> None:
        """Serve the scheduled links for one slot and close finished files.

        dl_bps/ul_bps are per-cell realized throughputs in bits per second;
        idle or NaN entries are ignored. A file that empties mid-slot counts
        the slot's end as its completion time and immediately draws the next
        request gap.
        """
        for d, ues, bps in ((DL, sched.dl_ue, dl_bps), (UL, sched.ul_ue, ul_bps)):
            on = ues >= 0
            for b in np.flatnonzero(on):
                u = int(ues[b])
                if self.pending[u, d] <= 0.0:
                    continue
                bits = float(np.nan_to_num(bps[b])) * slot_s
                move = min(bits, float(self.pending[u, d]))
                self.pending[u, d] -= move
                self.delivered[u, d] += move
                if self.pending[u, d] <= 1e-9:
                    delay = float(t_slot_end - self.arrival[u, d])
                    self.pending[u, d] = 0.0
                    self.delays[d].append(delay)
                    self.delay_sum[u, d] += delay
                    self.completed[u, d] += 1
                    self.arrival[u, d] = np.nan
                    self.next_arrival[u, d] = t_slot_end + rng.exponential(self.mean_gap_s)

    def conservation_ok(self) -> bool:
        """Every started bit is either delivered or still pending."""
        total = self.started * self.file_bits
        return bool(np.allclose(total, self.delivered + self.pending, rtol=0, atol=1e-6))
