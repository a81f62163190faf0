"""Run configuration: TOML files, JSON manifests and their echo.

Relative paths resolve against the directory of the file that names them.
A manifest written by ``run`` embeds the resolved configuration (input paths
absolute, output directory ``"."``) so it can be fed back to ``--config``.
"""

from __future__ import annotations

import datetime as dt
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._dates import month_range, parse_month
from .bvar import BvarSpec, NormalWishartPrior
from .data import LOG100, SeriesPriorityRule
from .decomposition import POOR_MAN, ROTATION, VARIANTS
from .errors import ConfigError, PanelShockError
from .lp import LpSpec

ESTIMATORS = ("bvar", "lp")
SCENARIOS = ("default", "zero_id", "cancellation")


@dataclass(frozen=True)
class DecompositionConfig:
    method: str = ROTATION
    w: float | None = 0.5
    target_share: float | None = None

    def __post_init__(self):
        if self.method not in (ROTATION, POOR_MAN):
            raise ConfigError(f"decomposition method must be {ROTATION!r} or {POOR_MAN!r}")
        if self.w is not None and self.target_share is not None:
            raise ConfigError("give either w or target_share, not both")


@dataclass(frozen=True)
class LabConfig:
    scenario: str = "default"
    n_countries: int = 23
    months: int = 156
    start: str = "2004-01"
    replications: int = 200
    horizon: int = 12
    lp_replications: int = 100
    mp_impact: tuple[float, ...] | None = None
    id_impact: tuple[float, ...] | None = None
    latent_std: tuple[float, float] | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"lab scenario must be one of {', '.join(SCENARIOS)}")
        if self.replications < 2 or self.lp_replications < 2:
            raise ConfigError("at least two replications are needed")


@dataclass(frozen=True)
class RunConfig:
    events: Path | None = None
    panel: tuple[Path, ...] = ()
    rules: tuple[SeriesPriorityRule, ...] = ()
    start: dt.date | None = None
    end: dt.date | None = None
    countries: tuple[str, ...] | None = None
    decomposition: DecompositionConfig = field(default_factory=DecompositionConfig)
    variants: tuple[str, ...] = ("MP", "ID", "total")
    estimators: tuple[str, ...] = ESTIMATORS
    bvar: BvarSpec = field(default_factory=BvarSpec)
    irf_horizon: int = 36
    lp: LpSpec = field(default_factory=LpSpec)
    lab: LabConfig = field(default_factory=LabConfig)
    out: Path = Path("out")
    seed: int = 0

    def validate_run(self) -> None:
        if self.events is None or not self.panel or not self.rules:
            raise ConfigError("[data] needs events, panel and at least one rule")
        if self.start is None or self.end is None or not month_range(self.start, self.end):
            raise ConfigError("window is empty")
        paths = [self.events, *self.panel]
        if len({p.resolve() for p in paths}) != len(paths):
            raise ConfigError("every referenced path must be distinct")
        out = self.out.resolve()
        if any(p.resolve().parent == out and p.name.startswith(("irf_", "lp_")) for p in paths):
            raise ConfigError("inputs would be overwritten by outputs")

    def with_overrides(self, seed: int | None = None, out: str | Path | None = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=_seed(seed), bvar=replace(cfg.bvar, seed=_seed(seed)))
        if out is not None:
            cfg = replace(cfg, out=Path(out))
        return cfg


def _seed(x: Any) -> int:
    try:
        v = int(x)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {x!r}") from None
    if not 0 <= v < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return v


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _only(sec: dict, name: str, allowed: set[str]) -> None:
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")


def _month(x: Any, what: str) -> dt.date:
    try:
        return parse_month(str(x))
    except ValueError:
        raise ConfigError(f"{what} must be YYYY-MM, got {x!r}") from None


def from_dict(raw: dict, base: Path) -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML/JSON; paths resolve against ``base``."""
    _only(raw, "top level", {"seed", "out", "data", "decomposition", "bvar", "lp", "lab", "run"})
    try:
        return _from_dict(raw, base)
    except PanelShockError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def _from_dict(raw: dict, base: Path) -> RunConfig:
    kw: dict[str, Any] = {}
    seed = _seed(raw.get("seed", 0))
    kw["seed"] = seed
    kw["out"] = base / raw.get("out", "out")

    data = _section(raw, "data")
    _only(data, "data", {"events", "panel", "start", "end", "countries", "rules"})
    if "events" in data:
        kw["events"] = base / data["events"]
    panel = data.get("panel", [])
    kw["panel"] = tuple(base / p for p in ([panel] if isinstance(panel, str) else panel))
    if "start" in data:
        kw["start"] = _month(data["start"], "data.start")
    if "end" in data:
        kw["end"] = _month(data["end"], "data.end")
    if data.get("countries") is not None:
        kw["countries"] = tuple(data["countries"])
    rules = []
    for r in data.get("rules", []):
        _only(r, "data.rules", {"variable", "candidates", "transform"})
        try:
            rules.append(SeriesPriorityRule(r["variable"], tuple(r["candidates"]), r.get("transform", LOG100)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad series rule {r!r}: {exc}") from None
    kw["rules"] = tuple(rules)

    dec = _section(raw, "decomposition")
    _only(dec, "decomposition", {"method", "w", "target_share", "variants"})
    if "variants" in dec:
        variants = tuple(dec.pop("variants"))
        bad = [v for v in variants if v not in VARIANTS]
        if bad or not variants:
            raise ConfigError(f"unknown shock variant(s) {bad}; choose from {', '.join(VARIANTS)}")
        kw["variants"] = variants
    if "target_share" in dec and "w" not in dec:
        dec["w"] = None
    kw["decomposition"] = DecompositionConfig(**dec)

    run = _section(raw, "run")
    _only(run, "run", {"estimators"})
    if "estimators" in run:
        est = tuple(run["estimators"])
        if not est or any(e not in ESTIMATORS for e in est):
            raise ConfigError(f"estimators must be drawn from {', '.join(ESTIMATORS)}")
        kw["estimators"] = est

    b = _section(raw, "bvar")
    prior_keys = {"ar_mean", "lambda1", "lambda2", "lambda3", "lambda4"}
    _only(b, "bvar", prior_keys | {"p", "draws", "burn_in", "horizon"})
    prior = NormalWishartPrior(**{k: float(b.pop(k)) for k in list(b) if k in prior_keys})
    kw["irf_horizon"] = int(b.pop("horizon", 36))
    kw["bvar"] = BvarSpec(prior=prior, seed=seed, **{k: int(v) for k, v in b.items()})

    l = _section(raw, "lp")
    _only(l, "lp", {"horizon", "y_lags", "x_lags", "shock_lags", "country_fe", "trend", "critical", "outcomes"})
    if "outcomes" in l:
        l["outcomes"] = tuple(l["outcomes"])
    kw["lp"] = LpSpec(**l)

    lb = _section(raw, "lab")
    for key in ("mp_impact", "id_impact", "latent_std"):
        if key in lb:
            lb[key] = tuple(float(x) for x in lb[key])
    kw["lab"] = LabConfig(**lb)
    return RunConfig(**kw)


def load_config(path: str | Path) -> RunConfig:
    """Read a TOML config or a JSON manifest (its ``config`` member)."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
            raw = raw.get("config", raw)
        else:
            raw = tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    return from_dict(raw, path.parent)


def echo(cfg: RunConfig) -> dict:
    """JSON-ready resolved configuration; ``out`` is written as ``"."``."""
    dec = {"method": cfg.decomposition.method, "variants": list(cfg.variants)}
    if cfg.decomposition.w is not None:
        dec["w"] = cfg.decomposition.w
    if cfg.decomposition.target_share is not None:
        dec["target_share"] = cfg.decomposition.target_share
    pr = cfg.bvar.prior
    return _strip_none({
        "seed": cfg.seed,
        "out": ".",
        "data": {
            "events": str(cfg.events.resolve()) if cfg.events else None,
            "panel": [str(p.resolve()) for p in cfg.panel],
            "start": cfg.start.strftime("%Y-%m") if cfg.start else None,
            "end": cfg.end.strftime("%Y-%m") if cfg.end else None,
            "countries": list(cfg.countries) if cfg.countries else None,
            "rules": [{"variable": r.variable, "candidates": list(r.candidates), "transform": r.transform}
                      for r in cfg.rules],
        },
        "decomposition": dec,
        "run": {"estimators": list(cfg.estimators)},
        "bvar": {
            "p": cfg.bvar.p, "draws": cfg.bvar.draws, "burn_in": cfg.bvar.burn_in, "horizon": cfg.irf_horizon,
            "ar_mean": pr.ar_mean, "lambda1": pr.lambda1, "lambda2": pr.lambda2,
            "lambda3": pr.lambda3, "lambda4": pr.lambda4,
        },
        "lp": {
            "horizon": cfg.lp.horizon, "y_lags": cfg.lp.y_lags, "x_lags": cfg.lp.x_lags,
            "shock_lags": cfg.lp.shock_lags, "country_fe": cfg.lp.country_fe, "trend": cfg.lp.trend,
            "critical": cfg.lp.critical, "outcomes": list(cfg.lp.outcomes),
        },
        "lab": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.lab.__dict__.items()},
    })


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d
