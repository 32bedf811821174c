"""Command line front end for running simulation campaigns.

Configuration can come from a flat key=value file, command line flags, or
both (flags win). A campaign runs one or more systems; by default it runs
the scheduler named by --scheduler at the cancellation named by
--cancellation, plus the synchronized-HD reference so gains can be
reported. Pass --systems to spell out an exact sweep instead.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .campaign import CampaignConfig, run_campaign
from .simulate import SCHEDULERS

CONFIG_KEYS = ("scenario", "scheduler", "cancellation", "drops", "slots", "seed",
               "traffic", "out", "ues_per_cell", "beta", "fading", "systems",
               "workers", "messages")


def parse_cancellation(text: str) -> float:
    if text.strip().lower() in ("inf", "infinite", "none"):
        return float("inf")
    value = float(text)
    if value <= 0:
        raise ValueError("cancellation must be a positive dB value or inf")
    return value


def parse_systems(text: str) -> list:
    """Parse "dfdmr@95,dfdmr@inf,hd_sync@inf" into (scheduler, dB) pairs."""
    systems = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, canc = part.partition("@")
        if name not in SCHEDULERS:
            raise ValueError(f"unknown scheduler in systems: {name!r}")
        systems.append((name, parse_cancellation(canc or "inf")))
    if not systems:
        raise ValueError("empty systems list")
    return systems


def read_config_file(path: str) -> dict:
    """Flat key = value lines; # starts a comment; unknown keys rejected."""
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{ln}: unknown key {key!r}")
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fdcell",
        description="Full-duplex multi-cell TDD scheduling simulator")
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--scenario", choices=("indoor_rrh", "outdoor_pico"))
    ap.add_argument("--scheduler", choices=SCHEDULERS)
    ap.add_argument("--cancellation", help="self-interference cancellation in dB, or inf")
    ap.add_argument("--drops", type=int)
    ap.add_argument("--slots", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--traffic", choices=("full_buffer", "ftp"))
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--ues-per-cell", type=int, dest="ues_per_cell")
    ap.add_argument("--beta", type=float, help="proportional-fair averaging factor")
    ap.add_argument("--fading", action="store_true", default=None)
    ap.add_argument("--systems",
                    help="comma list like dfdmr@95,hd_sync@inf; overrides "
                         "--scheduler/--cancellation")
    ap.add_argument("--workers", type=int, help="parallel drop workers")
    ap.add_argument("--no-messages", action="store_true",
                    help="skip the message log even for the first drop")
    return ap


def make_campaign_config(args) -> CampaignConfig:
    file_vals = read_config_file(args.config) if args.config else {}

    def pick(flag, key, cast):
        if flag is not None:
            return flag
        if key in file_vals:
            raw = file_vals[key]
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return None

    cfg = CampaignConfig()
    scenario = pick(args.scenario, "scenario", str)
    if scenario:
        cfg.scenario = scenario
    slots = pick(args.slots, "slots", int)
    if slots is not None:
        if slots < 1:
            raise ValueError("slots must be >= 1")
        cfg.slots = slots
    drops = pick(args.drops, "drops", int)
    if drops is not None:
        if drops < 1:
            raise ValueError("drops must be >= 1")
        cfg.drops = drops
    seed = pick(args.seed, "seed", int)
    if seed is not None:
        cfg.seed = seed
    traffic = pick(args.traffic, "traffic", str)
    if traffic:
        cfg.traffic = traffic
    out = pick(args.out, "out", str)
    if out:
        cfg.out_dir = out
    upc = pick(args.ues_per_cell, "ues_per_cell", int)
    if upc is not None:
        cfg.ues_per_cell = upc
    beta = pick(args.beta, "beta", float)
    if beta is not None:
        cfg.beta = beta
    fading = pick(args.fading, "fading", bool)
    if fading is not None:
        cfg.fading = fading
    workers = pick(args.workers, "workers", int)
    if workers is not None:
        cfg.workers = workers
    if args.no_messages:
        cfg.collect_messages = False
    elif "messages" in file_vals:
        cfg.collect_messages = file_vals["messages"].strip().lower() in (
            "1", "true", "yes", "on")

    systems_text = args.systems or file_vals.get("systems")
    if systems_text:
        cfg.systems = parse_systems(systems_text)
    else:
        scheduler = pick(args.scheduler, "scheduler", str) or "dfdmr"
        canc_text = args.cancellation or file_vals.get("cancellation") or "inf"
        canc = parse_cancellation(canc_text)
        systems = [(scheduler, canc)]
        if scheduler != "hd_sync":
            systems.append(("hd_sync", np.inf))
        cfg.systems = systems
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_campaign_config(args)
    except (ValueError, OSError) as exc:
        print(f"fdcell: {exc}", file=sys.stderr)
        return 2
    summary = run_campaign(cfg)
    for key, agg in summary["systems"].items():
        gain = ""
        if agg.get("gain_dl_pct") is not None and key != summary["hd_reference"]:
            gain = "  gain dl %+.1f%% ul %+.1f%%" % (
                agg["gain_dl_pct"], agg["gain_ul_pct"])
        line = "%-14s dl %6.2f Mbps  ul %6.2f Mbps%s" % (
            key, agg["dl_mbps"], agg["ul_mbps"], gain)
        if agg.get("mean_iterations") is not None:
            line += "  n_iter %.2f" % agg["mean_iterations"]
        print(line)
    if summary["failed_drops"]:
        print(f"warning: {len(summary['failed_drops'])} drop(s) failed",
              file=sys.stderr)
    print(f"artifacts written to {cfg.out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
