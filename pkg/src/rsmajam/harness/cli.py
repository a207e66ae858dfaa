"""Command line: ``rsmajam {thresholds,optimize,sweep,ber-au,ber-pu}``.

``--config`` takes a JSON file holding either ScenarioConfig fields directly
or an object ``{"scenario": {...}, ...}`` whose other keys set run options
(sweep, grid, realizations, schemes, Es_grid, bits_per_point, realization).
Without a config the small desk scenario is used.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..channels import JAMMING_MODES, SCHEMES, channel_set_for, load_config
from ..thresholds import assemble_thresholds
from .ber import BerSpec, au_ber_experiment, ber_rows, pu_ber_experiment
from .experiments import (RESULT_COLUMNS, SUMMARY_COLUMNS, SWEEPS, ExperimentSpec, desk_scenario,
                          run_sweep, solve_schemes)
from .reports import emit_reports, interference_profile, jamming_profile, save_precoders

log = logging.getLogger("rsmajam")

RUN_KEYS = {"sweep", "grid", "realizations", "schemes", "Es_grid", "bits_per_point", "realization"}
AU_ES_GRID = tuple(np.round(np.logspace(1, 4, 7), 6))
PU_ES_GRID = tuple(np.round(np.logspace(0, 3, 7), 6))


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _schemes(text):
    out = tuple(s.strip().upper() for s in text.split(",") if s.strip())
    bad = [s for s in out if s not in SCHEMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {SCHEMES}")
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario or run description")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--scheme", type=_schemes, help="scheme or comma list (RSMA,SDMA,NOMA)")
    common.add_argument("--jamming", choices=JAMMING_MODES)
    common.add_argument("--no-interference-constraints", action="store_true")
    common.add_argument("--realization", type=int, help="channel realization index")
    common.add_argument("--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rsmajam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("thresholds", parents=[common], help="jamming and interference thresholds")
    sub.add_parser("optimize", parents=[common], help="solve one realization")
    sw = sub.add_parser("sweep", parents=[common], help="sum-rate sweep over realizations")
    sw.add_argument("--sweep", choices=SWEEPS)
    sw.add_argument("--grid", type=_floats, help="comma-separated grid values")
    sw.add_argument("--realizations", type=int)
    for name, victim in (("ber-au", "AU"), ("ber-pu", "PU")):
        b = sub.add_parser(name, parents=[common], help=f"uncoded BER at the {victim}")
        b.add_argument("--es-grid", type=_floats, help="total symbol energies (linear, ascending)")
        b.add_argument("--bits", type=int, help="bits per grid point")
    return p


def resolve(args):
    """Scenario and run options from the config file and command-line overrides."""
    run = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if "scenario" in data:
            run = {k: v for k, v in data.items() if k != "scenario"}
            unknown = sorted(set(run) - RUN_KEYS)
            if unknown:
                raise ValueError(f"unknown run options: {unknown}")
            data = data["scenario"]
        cfg = load_config(data)
    else:
        cfg = desk_scenario()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jamming:
        changes["jamming"] = args.jamming
    if args.no_interference_constraints:
        changes["interference_constraints"] = False
    if args.scheme and len(args.scheme) == 1:
        changes["scheme"] = args.scheme[0]
    if changes:
        cfg = cfg.replace(**changes)
    for key, attr in (("sweep", "sweep"), ("grid", "grid"), ("realizations", "realizations"),
                      ("Es_grid", "es_grid"), ("bits_per_point", "bits"), ("realization", "realization")):
        val = getattr(args, attr, None)
        if val is not None:
            run[key] = val
    if args.scheme:
        run["schemes"] = list(args.scheme)
    return cfg, run


def _manifest(args, cfg, run, extra=None):
    out = {"command": args.command, "version": __version__, "seed": cfg.seed,
           "scenario": cfg.to_dict(), "run": run}
    if extra:
        out.update(extra)
    return out


def cmd_thresholds(args, cfg, run):
    r = int(run.get("realization", 0))
    cs = channel_set_for(cfg, r)
    th = assemble_thresholds(cfg, cs)
    rows = [{"kind": k, "index": i + 1, "n": n + 1, "threshold": v, "branch": b}
            for k, i, n, v, b in th.branch]
    emit_reports({"thresholds": rows}, args.out, _manifest(args, cfg, run,
                 {"sigma_ie2": cs.sigma_ie2, "sigma_pe2": cs.sigma_pe2}))
    print(f"wrote {len(rows)} threshold rows to {args.out}")
    return 0


def cmd_optimize(args, cfg, run):
    r = int(run.get("realization", 0))
    schemes = tuple(run.get("schemes", [cfg.scheme]))
    cs = channel_set_for(cfg, r)
    th = assemble_thresholds(cfg, cs)
    res = solve_schemes(cfg, cs, th, schemes, realization=r)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, intf, jam = [], [], []
    status = 0
    for scheme, item in res.items():
        if "error" in item:
            summary.append({"scheme": scheme, "error": item["error"]})
            status = 3
            continue
        pre, rep, trace, audit = item["pre"], item["rep"], item["trace"], item["audit"]
        rep.write_csv(out / f"rates_{scheme}.csv")
        trace.write_csv(out / f"trace_{scheme}.csv")
        save_precoders(pre, out / f"precoders_{scheme}.npz")
        intf += interference_profile(cfg, cs, th, pre, scheme)
        jam += jamming_profile(cfg, cs, th, pre, scheme)
        summary.append({"scheme": scheme, "R_sum": rep.R_sum, "R_common": rep.R_common,
                        "R_user": list(rep.R_user), "power": audit["power"],
                        "audit_ok": audit["ok"], "feasible": trace.feasible,
                        "max_inner_hit": trace.max_inner_hit, "max_outer_hit": trace.max_outer_hit,
                        "error": ""})
        if not audit["ok"]:
            status = 3
        print(f"{scheme}: sum-rate {rep.R_sum:.4f} bits/s/Hz, audit {'ok' if audit['ok'] else 'FAILED'}")
    tables = {"summary": (["scheme", "R_sum", "R_common", "R_user", "power", "audit_ok", "feasible",
                           "max_inner_hit", "max_outer_hit", "error"], summary)}
    if intf:
        tables["interference_profile"] = intf
    if jam:
        tables["jamming_profile"] = jam
    emit_reports(tables, out, _manifest(args, cfg, run))
    return status


def cmd_sweep(args, cfg, run):
    spec = ExperimentSpec(cfg, sweep=run.get("sweep", "none"), grid=run.get("grid", [None]),
                          realizations=int(run.get("realizations", 1)),
                          schemes=tuple(run.get("schemes", SCHEMES)), output_dir=args.out)
    res = run_sweep(spec)
    emit_reports({"results": (RESULT_COLUMNS, res.rows), "summary": (SUMMARY_COLUMNS, res.summary)},
                 args.out, _manifest(args, cfg, run, {"experiment": spec.to_dict()}))
    for row in res.summary:
        print(f"{row['sweep']}={row['value']} {row['scheme']}: mean sum-rate {row['mean_R_sum']:.4f}"
              f" over {row['solved']} ({'ok' if row['all_ok'] else 'audit FAILED'})")
    return 0 if all(r["all_ok"] for r in res.summary) else 3


def cmd_ber(args, cfg, run, victim):
    grid = run.get("Es_grid", AU_ES_GRID if victim == "AU" else PU_ES_GRID)
    spec = BerSpec(grid, int(run.get("bits_per_point", 100_000)), victim, seed=cfg.seed)
    r = int(run.get("realization", 0))
    if victim == "AU":
        modes = ("pilot", "barrage", "off") if not args.jamming else (args.jamming,)
        curves, _ = au_ber_experiment(cfg, spec, modes, realization=r)
    else:
        curves, _ = pu_ber_experiment(cfg, spec, realization=r)
    rows = [row for label, c in curves.items() for row in ber_rows(c, label)]
    name = "ber_au" if victim == "AU" else "ber_pu"
    emit_reports({name: rows}, args.out, _manifest(args, cfg, run, {"ber": {
        "Es_grid": list(spec.Es_grid), "bits_per_point": spec.bits_per_point, "victim": victim}}))
    for label, c in curves.items():
        print(label, " ".join(f"{b:.3e}" for b in c.ber))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg, run = resolve(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "thresholds":
        return cmd_thresholds(args, cfg, run)
    if args.command == "optimize":
        return cmd_optimize(args, cfg, run)
    if args.command == "sweep":
        return cmd_sweep(args, cfg, run)
    return cmd_ber(args, cfg, run, "AU" if args.command == "ber-au" else "PU")


if __name__ == "__main__":
    raise SystemExit(main())
