"""Command-line entry point: ``panelshock run | lab | decompose``.

Exit codes: 0 success, 1 estimation error, 2 input error, 3 config error.
Failures print one JSON object (``category``, ``message``, ``exit_code``)
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import math
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from . import bvar as bvar_mod
from . import lab as lab_mod
from . import lp as lp_mod
from ._dates import month_range, month_start, parse_month
from .config import RunConfig, echo, load_config
from .data import (
    MonthlySeries,
    dataset_hash,
    emit_panel,
    file_hash,
    fmt,
    ingest_panel,
    read_events,
    with_shocks,
    write_decomposition,
)
from .decomposition import (
    POOR_MAN,
    VARIANTS,
    SurpriseMatrix,
    calibrate_weight,
    decompose_at_angle,
    decompose_poor_man,
    decompose_rotation,
    monthly_variants,
    variance_share,
)
from .errors import ConfigError, PanelShockError

log = logging.getLogger("panelshock")


# --- pipeline pieces -------------------------------------------------------------------

def decompose(cfg: RunConfig, events=None):
    """Rotation (or poor-man) and poor-man decompositions of the configured events."""
    events = events if events is not None else read_events(cfg.events)
    m = SurpriseMatrix.from_events(events)
    poor = decompose_poor_man(m)
    if cfg.decomposition.method == POOR_MAN:
        return events, poor, poor
    w = cfg.decomposition.w
    if cfg.decomposition.target_share is not None:
        w = calibrate_weight(m, cfg.decomposition.target_share)
    return events, decompose_rotation(m, w), poor


def _calendar(events, start: dt.date | None, end: dt.date | None) -> tuple[dt.date, ...]:
    first, last = month_start(events[0].date), month_start(events[-1].date)
    lo = min(first, start) if start else first
    hi = max(last, end) if end else last
    return month_range(lo, hi)


def write_monthly(path: Path, calendar, series: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *series])
        for k, d in enumerate(calendar):
            w.writerow([d.isoformat(), *(fmt(v[k]) for v in series.values())])


def _decomposition_outputs(out: Path, main, poor, calendar, variants) -> tuple[dict, Path, Path]:
    dec_path = out / "decomposition.csv"
    write_decomposition(dec_path, [main] if main is poor else [main, poor])
    monthly = monthly_variants(main, poor, calendar, variants)
    monthly_path = out / "shocks_monthly.csv"
    write_monthly(monthly_path, calendar, monthly)
    return monthly, dec_path, monthly_path


def _summary(main) -> dict:
    return {
        "method": main.method,
        "w": None if math.isnan(main.w) else main.w,
        "alpha": None if math.isnan(main.alpha) else main.alpha,
        "mp_share": variance_share(main),
        "c_mp": main.c_mp,
        "c_id": main.c_id,
        "events": len(main.dates),
    }


def versions() -> dict:
    return {"panelshock": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run(cfg: RunConfig, threads: int | None = None) -> dict[str, Path]:
    """Full pipeline.  Artifacts are written in a fixed order; returns them by name."""
    cfg.validate_run()
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    events, main, poor = decompose(cfg)
    panel = ingest_panel(cfg.panel, cfg.rules, cfg.start, cfg.end, cfg.countries)
    calendar = _calendar(events, cfg.start, cfg.end)
    monthly, dec_path, monthly_path = _decomposition_outputs(out, main, poor, calendar, cfg.variants)
    artifacts = {"decomposition": dec_path, "shocks_monthly": monthly_path}
    artifacts["panel"] = emit_panel(panel, out / "panel.csv")
    artifacts["panel_provenance"] = out / "panel.csv.provenance.json"

    for name, series in monthly.items():
        ds = with_shocks(panel, {name: MonthlySeries(calendar, series)})
        if "bvar" in cfg.estimators:
            _, _, irf = bvar_mod.estimate(ds, cfg.bvar, cfg.irf_horizon, threads, stream=f"bvar/{name}")
            p = out / f"irf_bvar_{name}.csv"
            bvar_mod.write_irf_csv(p, [irf])
            artifacts[f"irf_bvar_{name}"] = p
        if "lp" in cfg.estimators:
            est = lp_mod.estimate_lp(ds, replace(cfg.lp, shocks=(name,)))
            p = out / f"lp_{name}.csv"
            lp_mod.write_lp_csv(p, est)
            artifacts[f"lp_{name}"] = p

    manifest = {
        "config": echo(cfg),
        "versions": versions(),
        "seed": cfg.seed,
        "inputs": {str(p.resolve()): file_hash(p) for p in [cfg.events, *cfg.panel]},
        "dataset_sha256": dataset_hash(panel),
        "decomposition": _summary(main),
        "artifacts": {k: {"file": v.name, "sha256": file_hash(v)} for k, v in artifacts.items()},
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    artifacts["manifest"] = mpath
    return artifacts


def lab_spec(cfg: RunConfig) -> lab_mod.DgpSpec:
    lc = cfg.lab
    try:
        start = parse_month(lc.start)
    except ValueError:
        raise ConfigError(f"lab.start must be YYYY-MM, got {lc.start!r}") from None
    base = lab_mod.DgpSpec(n_countries=lc.n_countries, months=lc.months, start=start, seed=cfg.seed)
    kw = {}
    if lc.mp_impact is not None:
        kw["mp_impact"] = lc.mp_impact
    if lc.id_impact is not None:
        kw["id_impact"] = lc.id_impact
    if lc.latent_std is not None:
        kw["latent_std"] = lc.latent_std
    spec = base.with_(**kw) if kw else base
    if lc.scenario == "zero_id":
        spec = spec.with_(id_impact=(0.0,) * len(spec.id_impact), irf_signs={"MP": spec.irf_signs["MP"]})
    elif lc.scenario == "cancellation":
        s = float(np.sqrt(np.mean(np.square(spec.latent_std))))
        mp_signs = spec.irf_signs["MP"]
        spec = spec.with_(id_impact=tuple(-x for x in spec.mp_impact), latent_std=(s, s),
                          irf_signs={"MP": mp_signs, "ID": tuple(-x for x in mp_signs)})
    return spec


def lab(cfg: RunConfig, threads: int | None = None) -> dict[str, Path]:
    """Bias experiment plus recovery suites on the configured lab DGP."""
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    spec = lab_spec(cfg)
    lc = cfg.lab
    lp_spec = replace(cfg.lp, horizon=lc.horizon, shocks=(), outcomes=())
    report = lab_mod.bias_experiment(spec, lc.replications, lc.horizon, lp_spec, threads)

    table = out / "lab_bias.csv"
    rows = report.rows()
    with open(table, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in r.values()])

    _, truth = lab_mod.simulate_surprises(spec)
    m = SurpriseMatrix(truth.m, truth.dates)
    dec_err = float(np.max(np.abs(decompose_at_angle(m, truth.alpha).u - truth.u)))
    rec = lab_mod.bvar_recovery(spec, replace(cfg.bvar, p=spec.p), threads=threads)
    rec_common = lab_mod.bvar_recovery(spec, replace(cfg.bvar, p=spec.p), threads=threads, pooled=False)
    cons = lab_mod.lp_consistency(spec, lc.lp_replications, lc.horizon, lp_spec, threads)
    signs = report.sign_table()
    summary = {
        "config": echo(cfg),
        "versions": versions(),
        "scenario": lc.scenario,
        "replications": report.replications,
        "mp_share_population": spec.mp_share,
        "mp_share_mean": report.share,
        "attenuation_median": float(np.median(report.attenuation)),
        "attenuation_min": float(np.min(report.attenuation)),
        "attenuation_max": float(np.max(report.attenuation)),
        "impact_attenuation": dict(zip(report.variables, map(float, report.attenuation[0]))),
        "composite_between_everywhere": bool(report.between.all()),
        "sign_table_matches": {k: bool(v.all()) for k, v in signs.items()},
        "decomposition_max_abs_error": dec_err,
        "bvar_coefficient_coverage": rec.coverage,
        "bvar_irf_coverage": rec.irf_coverage,
        "bvar_coefficient_coverage_common_shock": rec_common.coverage,
        "lp_max_relative_error": float(np.max(cons.rel_error)),
        "lp_replications": lc.lp_replications,
    }
    spath = out / "lab_summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"lab_bias": table, "lab_summary": spath}


# --- argument handling -----------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="panelshock", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML config or run manifest (JSON)")
        p.add_argument("--seed", help="unsigned 64-bit seed; overrides the config")
        p.add_argument("--out", help="output directory; overrides the config")
        p.add_argument("--threads", type=int, help="worker threads (default: $PANELSHOCK_THREADS or 1)")

    p = sub.add_parser("run", help="decompose, estimate and write IRF tables")
    common(p, config_required=False)
    p.add_argument("--list-variants", action="store_true", help="print the shock variant names and exit")
    p = sub.add_parser("lab", help="synthetic-lab bias experiment and recovery checks")
    common(p)
    p = sub.add_parser("decompose", help="decompose event surprises only")
    common(p, config_required=False)
    p.add_argument("--events", help="event CSV (instead of the config's)")
    p.add_argument("--method", choices=("rotation", "poor_man"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--w", type=float)
    g.add_argument("--target-share", type=float)
    return ap


def _config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    return cfg.with_overrides(args.seed, args.out)


def _main(argv: Sequence[str] | None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    if args.command == "run":
        if args.list_variants:
            print("\n".join(VARIANTS))
            return 0
        if not args.config:
            raise ConfigError("run needs --config")
        arts = run(_config(args), args.threads)
        for name, path in arts.items():
            print(f"{name}\t{path}")
        return 0
    if args.command == "lab":
        arts = lab(_config(args), args.threads)
        summary = json.loads(arts["lab_summary"].read_text())
        for key in ("scenario", "mp_share_mean", "attenuation_median", "composite_between_everywhere",
                    "bvar_coefficient_coverage", "lp_max_relative_error"):
            print(f"{key}\t{summary[key]}")
        return 0
    cfg = _config(args)
    dec = cfg.decomposition
    if args.method:
        dec = replace(dec, method=args.method)
    if args.w is not None:
        dec = replace(dec, w=args.w, target_share=None)
    if args.target_share is not None:
        dec = replace(dec, w=None, target_share=args.target_share)
    cfg = replace(cfg, decomposition=dec)
    if args.events:
        cfg = replace(cfg, events=Path(args.events))
    if cfg.events is None:
        raise ConfigError("decompose needs --events or a config with [data].events")
    cfg.out.mkdir(parents=True, exist_ok=True)
    events, main, poor = decompose(cfg)
    calendar = _calendar(events, None, None)
    _decomposition_outputs(cfg.out, main, poor, calendar, VARIANTS)
    for k, v in _summary(main).items():
        print(f"{k}\t{v}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _main(argv)
    except PanelShockError as exc:
        err = {"category": exc.category, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
