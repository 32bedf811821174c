"""Multi-drop campaign runner: sweeps systems, aggregates, writes artifacts.

A campaign is a list of (scheduler, cancellation) systems run over the same
drops: drop k of every system sees the identical placement and channel draw,
which is what makes gain-versus-HD numbers meaningful. Aggregation pools
per-UE averages across drops. Artifacts land in the output directory:

  results.csv      one row per (system, drop, UE, direction)
  cdf_dl.csv/.ul   pooled per-UE averages with empirical quantiles
  summary.json     per-system means, gains vs the HD reference, mode shares
  convergence.csv  histogram of coordination rounds per system
  overhead.json    nominal closed-form vs measured signaling, audit counts
  messages.jsonl   raw message log of each system's first drop (optional)
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cfdmr import central_bits_closed_form
from .dfdmr import (distributed_bits_closed_form, init_bits_closed_form,
                    ue_measurement_kbps)
from .gpsolver import SolverConfig
from .simulate import MODE_KEYS, DropConfig, DropResult, run_drop

NOMINAL = {
    "indoor_rrh": {"cells": 9, "ues_per_cell": 8, "k": 7, "n_iterations": 7},
    "outdoor_pico": {"cells": 12, "ues_per_cell": 10, "k": 8, "n_iterations": 7},
}


@dataclass
class CampaignConfig:
    scenario: str = "indoor_rrh"
    systems: list = field(default_factory=lambda: [("hd_sync", np.inf),
                                                   ("dfdmr", np.inf)])
    slots: int = 1000
    drops: int = 20
    seed: int = 1
    beta: float = 0.99
    ues_per_cell: int | None = None
    traffic: str = "full_buffer"
    fading: bool = False
    out_dir: str = "out"
    collect_messages: bool = True     # first drop of each system only
    workers: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def drop_config(self, scheduler: str, cancellation_db: float,
                    messages: bool) -> DropConfig:
        return DropConfig(
            scenario=self.scenario, scheduler=scheduler,
            cancellation_db=cancellation_db, slots=self.slots,
            ues_per_cell=self.ues_per_cell, traffic=self.traffic,
            beta=self.beta, fading=self.fading, collect_messages=messages)


def system_key(scheduler: str, cancellation_db: float) -> str:
    if np.isinf(cancellation_db):
        return f"{scheduler}@inf"
    c = float(cancellation_db)
    return f"{scheduler}@{int(c) if c == int(c) else c}"


def _run_task(args):
    cfg, seed, drop = args
    return run_drop(cfg, seed, drop)


def run_campaign(cfg: CampaignConfig) -> dict:
    """Run every system over the same drops, write artifacts, return summary."""
    tasks = []
    for scheduler, canc in cfg.systems:
        for drop in range(cfg.drops):
            dc = cfg.drop_config(scheduler, canc,
                                 cfg.collect_messages and drop == 0)
            tasks.append((dc, cfg.seed, drop))

    workers = cfg.workers or min(os.cpu_count() or 1, len(tasks))
    results: list = [None] * len(tasks)
    failures: list = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, out in enumerate(pool.map(_run_task, tasks)):
                results[i] = out
    else:
        for i, task in enumerate(tasks):
            try:
                results[i] = _run_task(task)
            except Exception as exc:   # noqa: BLE001 - drop failures are data
                failures.append({"system": system_key(task[0].scheduler,
                                                      task[0].cancellation_db),
                                 "drop": task[2],
                                 "error": repr(exc)})

    by_system: dict[str, list[DropResult]] = {}
    for r in results:
        if r is None:
            continue
        by_system.setdefault(system_key(r.scheduler, r.cancellation_db), []).append(r)

    os.makedirs(cfg.out_dir, exist_ok=True)
    summary = _write_artifacts(cfg, by_system, failures)
    return summary


def _pool_mbps(drops: list[DropResult]) -> np.ndarray:
    """(n_ue_total, 2) per-UE average Mbps pooled over drops."""
    return np.concatenate([r.mbps() for r in drops], axis=0)


def _aggregate_system(drops: list[DropResult]) -> dict:
    mbps = _pool_mbps(drops)
    slots = sum(r.slots for r in drops)
    cells = len(drops[0].control_bits)
    cell_slots = cells * slots
    modes = {k: sum(r.mode_counts[k] for r in drops) for k in MODE_KEYS}
    coordinating = any(r.n_iterations.any() for r in drops)
    n_iter = np.concatenate([r.n_iterations for r in drops])
    out = {
        "dl_mbps": float(mbps[:, 0].mean()),
        "ul_mbps": float(mbps[:, 1].mean()),
        "mode_share_pct": {k: 100.0 * modes[k] / cell_slots for k in MODE_KEYS},
        "mean_k": float(np.mean([r.measured_k for r in drops])),
        "mean_iterations": float(n_iter.mean()) if coordinating else None,
        "iteration_cap_hits": int(sum((~r.terminated).sum() for r in drops)),
        "control_bits_per_tti_per_bs": float(
            np.mean([r.control_bits / r.slots for r in drops])),
        "solver_failures": int(sum(r.solver_failures for r in drops)),
        "drops": len(drops),
    }
    if drops[0].files_completed is not None:
        delays_dl = np.concatenate([np.asarray(r.delays_dl) for r in drops]) \
            if any(len(r.delays_dl) for r in drops) else np.array([])
        delays_ul = np.concatenate([np.asarray(r.delays_ul) for r in drops]) \
            if any(len(r.delays_ul) for r in drops) else np.array([])
        n_ue = sum(len(r.ue_cell) for r in drops)
        out.update({
            "mean_delay_dl_s": float(delays_dl.mean()) if delays_dl.size else None,
            "mean_delay_ul_s": float(delays_ul.mean()) if delays_ul.size else None,
            "files_per_ue_dl": float(sum(r.files_completed[:, 0].sum()
                                         for r in drops)) / n_ue,
            "files_per_ue_ul": float(sum(r.files_completed[:, 1].sum()
                                         for r in drops)) / n_ue,
        })
    return out


def _write_artifacts(cfg: CampaignConfig, by_system: dict, failures: list) -> dict:
    systems_summary = {}
    for key, drops in by_system.items():
        systems_summary[key] = _aggregate_system(drops)

    hd_key = next((k for k in systems_summary if k.startswith("hd_sync@")), None)
    if hd_key:
        hd = systems_summary[hd_key]
        for key, agg in systems_summary.items():
            if key == hd_key:
                agg["gain_dl_pct"] = agg["gain_ul_pct"] = 0.0
            else:
                agg["gain_dl_pct"] = 100.0 * (agg["dl_mbps"] / hd["dl_mbps"] - 1.0)
                agg["gain_ul_pct"] = 100.0 * (agg["ul_mbps"] / hd["ul_mbps"] - 1.0)

    _write_results_csv(cfg, by_system)
    _write_cdfs(cfg, by_system)
    _write_convergence(cfg, by_system)
    overhead = _write_overhead(cfg, by_system)
    _write_messages(cfg, by_system)

    summary = {
        "scenario": cfg.scenario,
        "slots": cfg.slots,
        "drops": cfg.drops,
        "seed": cfg.seed,
        "traffic": cfg.traffic,
        "beta": cfg.beta,
        "hd_reference": hd_key,
        "systems": systems_summary,
        "failed_drops": failures,
        "overhead": overhead,
    }
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _write_results_csv(cfg: CampaignConfig, by_system: dict) -> None:
    path = os.path.join(cfg.out_dir, "results.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scheduler", "cancellation_db", "drop", "ue_id", "cell",
                     "direction", "mbps", "files_completed", "mean_delay_s"])
        for key, drops in by_system.items():
            for r in drops:
                mbps = r.mbps()
                for u in range(len(r.ue_cell)):
                    for d, name in ((0, "dl"), (1, "ul")):
                        files = ""
                        delay = ""
                        if r.files_completed is not None:
                            n = int(r.files_completed[u, d])
                            files = n
                            delay = (round(r.delay_sum[u, d] / n, 6)
                                     if n else "")
                        wr.writerow([r.scheduler, r.cancellation_db, r.drop_index,
                                     u, int(r.ue_cell[u]), name,
                                     round(float(mbps[u, d]), 6), files, delay])


def _write_cdfs(cfg: CampaignConfig, by_system: dict) -> None:
    for d, name in ((0, "dl"), (1, "ul")):
        path = os.path.join(cfg.out_dir, f"cdf_{name}.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["scheduler", "cancellation_db", "mbps", "quantile"])
            for key, drops in by_system.items():
                vals = np.sort(_pool_mbps(drops)[:, d])
                n = len(vals)
                for i, v in enumerate(vals):
                    wr.writerow([drops[0].scheduler, drops[0].cancellation_db,
                                 round(float(v), 6), round((i + 1) / n, 6)])


def _write_convergence(cfg: CampaignConfig, by_system: dict) -> None:
    path = os.path.join(cfg.out_dir, "convergence.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scheduler", "cancellation_db", "iterations", "slots"])
        for key, drops in by_system.items():
            if not any(r.n_iterations.any() for r in drops):
                continue
            n_iter = np.concatenate([r.n_iterations for r in drops])
            for val, count in zip(*np.unique(n_iter, return_counts=True)):
                wr.writerow([drops[0].scheduler, drops[0].cancellation_db,
                             int(val), int(count)])


def _write_overhead(cfg: CampaignConfig, by_system: dict) -> dict:
    nom = NOMINAL[cfg.scenario]
    m, n_m, k, n_i = nom["cells"], nom["ues_per_cell"], nom["k"], nom["n_iterations"]
    if cfg.ues_per_cell is not None:
        n_m = cfg.ues_per_cell
    nominal = {
        "cells": m,
        "ues_per_cell": n_m,
        "k": k,
        "n_iterations": n_i,
        "ue_measurement_kbps": ue_measurement_kbps(n_m, k),
        "central_bits_per_tti": central_bits_closed_form(m, n_m, k),
        "distributed_init_bits": init_bits_closed_form(m, k),
        "distributed_bits_per_tti": distributed_bits_closed_form(m, k, n_i),
    }
    measured: dict = {}
    audit: dict = {}
    for key, drops in by_system.items():
        num_cells = len(drops[0].control_bits)
        entry = {
            "mean_k": float(np.mean([r.measured_k for r in drops])),
            "mean_bits_per_tti_per_bs": float(
                np.mean([r.control_bits / r.slots for r in drops])),
            "ue_measurement_kbps": ue_measurement_kbps(
                n_m, float(np.mean([r.measured_k for r in drops]))),
        }
        n_iter = np.concatenate([r.n_iterations for r in drops])
        if n_iter.any():
            entry["mean_iterations"] = float(n_iter.mean())
        measured[key] = entry

        checked = mismatches = 0
        for r in drops:
            for msg in r.messages:
                checked += 1
                if msg["type"] == "init":
                    ok = msg["bits"] == init_bits_closed_form(
                        num_cells, msg["forwarded"])
                elif msg["type"] == "iterate":
                    ok = msg["bits"] == 32 * msg["rounds"]
                elif msg["type"] == "central_report":
                    expect = (num_cells + num_cells * n_m + msg["entries"]) * 8
                    ok = msg["bits"] == expect
                else:
                    ok = False
                mismatches += int(not ok)
        if checked:
            audit[key] = {"messages_checked": checked,
                          "size_mismatches": mismatches}

    report = {"nominal": nominal, "measured": measured, "audit": audit}
    with open(os.path.join(cfg.out_dir, "overhead.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return report


def _write_messages(cfg: CampaignConfig, by_system: dict,
                    max_lines: int = 500_000) -> None:
    path = os.path.join(cfg.out_dir, "messages.jsonl")
    lines = 0
    with open(path, "w") as fh:
        for key, drops in by_system.items():
            for r in drops:
                for msg in r.messages:
                    if lines >= max_lines:
                        return
                    row = {"system": key, "drop": r.drop_index, **msg}
                    fh.write(json.dumps(row) + "\n")
                    lines += 1
