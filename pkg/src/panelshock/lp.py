"""Panel local projections with time-clustered standard errors.

For each horizon ``h`` the outcome ``y_{i,t+h}`` is regressed on the shock at
``t`` (two shocks in a rate race), lags of the outcome, of the controls and
of the shock, a country fixed effect and a pooled linear trend.  Time fixed
effects are not offered: the shock is common to all countries and would be
absorbed by them.

The fixed effect is removed by within-country demeaning.  The clustered
covariance uses the CR1 factor ``G/(G-1) * (n-1)/(n-k)`` where ``k`` counts
the columns of the equivalent dummy-variable regression, so standard errors
agree with the explicit dummy design as well as the coefficients.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .data import PanelDataset, fmt
from .errors import CollinearShocks, ConfigError, EmptySample, RankDeficient, TooFewClustersWarning

LP_HEADER = ["shock", "variable", "horizon", "beta", "se", "ci68_lo", "ci68_hi", "ci90_lo", "ci90_hi", "nobs"]

MIN_CLUSTERS = 10
Z68 = float(stats.norm.ppf(0.84))
Z90 = float(stats.norm.ppf(0.95))


@dataclass(frozen=True)
class LpSpec:
    horizon: int = 36
    y_lags: int = 2
    x_lags: int = 2
    shock_lags: int = 2
    country_fe: bool = True
    trend: bool = True
    shocks: tuple[str, ...] = ()
    outcomes: tuple[str, ...] = ()
    critical: str = "normal"
    cluster: str = "time"

    def __post_init__(self):
        object.__setattr__(self, "shocks", tuple(self.shocks))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if min(self.y_lags, self.x_lags, self.shock_lags) < 0 or self.horizon < 0:
            raise ConfigError("lag counts and horizon must be non-negative")
        if len(self.shocks) > 2:
            raise ConfigError("at most two shocks per regression")
        if self.critical not in ("normal", "t"):
            raise ConfigError("critical must be 'normal' or 't'")
        if self.cluster != "time":
            raise ConfigError("only time clustering is supported")

    @property
    def max_lag(self) -> int:
        return max(self.y_lags, self.x_lags, self.shock_lags)


@dataclass(frozen=True)
class LpEstimate:
    shock: str
    variable: str
    horizon: int
    beta: float
    se: float
    ci68: tuple[float, float]
    ci90: tuple[float, float]
    nobs: int


@dataclass(frozen=True)
class LpDesign:
    y: np.ndarray
    x: np.ndarray
    names: tuple[str, ...]
    country: np.ndarray
    time: np.ndarray
    n_countries: int
    k_equivalent: int


def _shocks(data: PanelDataset, spec: LpSpec) -> tuple[str, ...]:
    shocks = spec.shocks or data.shock_names[:1]
    if not shocks:
        raise ConfigError("dataset has no shock column and no shock was named")
    for s in shocks:
        data.index(s)
    return shocks


def _outcomes(data: PanelDataset, spec: LpSpec) -> tuple[str, ...]:
    return spec.outcomes or data.variables[data.n_shocks:]


def _canonical(data: PanelDataset) -> PanelDataset:
    order = sorted(data.countries)
    return data if list(order) == list(data.countries) else data.subset(order)


def build_lp_design(
    data: PanelDataset,
    spec: LpSpec,
    h: int,
    outcome: str | None = None,
    fe: str | None = None,
) -> LpDesign:
    """Regressors for horizon ``h``.

    ``fe`` selects how the country effect enters: ``"within"`` (demeaned
    columns), ``"dummies"`` (one indicator per country) or ``"none"`` (a
    constant).  It defaults to ``"within"`` when ``spec.country_fe`` is set.
    """
    if fe is None:
        fe = "within" if spec.country_fe else "none"
    data = _canonical(data)
    shocks = _shocks(data, spec)
    outcome = outcome or _outcomes(data, spec)[0]
    controls = [v for v in data.variables[data.n_shocks:] if v != outcome and v not in shocks]
    n_c, t_len, _ = data.shape
    p = spec.max_lag
    t0, t1 = p, t_len - h  # observation dates t in [t0, t1)
    if t1 <= t0:
        raise EmptySample(f"horizon {h} with {p} lags leaves no observations in T={t_len}")

    def at(var: str, lag: int) -> np.ndarray:
        return data.column(var)[:, t0 - lag:t1 - lag]

    cols, names = [], []
    for s in shocks:
        cols.append(at(s, 0)); names.append(s)
    for j in range(1, spec.y_lags + 1):
        cols.append(at(outcome, j)); names.append(f"{outcome}_lag{j}")
    for c in controls:
        for j in range(1, spec.x_lags + 1):
            cols.append(at(c, j)); names.append(f"{c}_lag{j}")
    for s in shocks:
        for j in range(1, spec.shock_lags + 1):
            cols.append(at(s, j)); names.append(f"{s}_lag{j}")
    if spec.trend:
        cols.append(np.broadcast_to(np.arange(t0, t1, dtype=float), (n_c, t1 - t0))); names.append("trend")

    y = data.column(outcome)[:, t0 + h:t1 + h]
    x = np.stack(cols, axis=-1) if cols else np.empty((n_c, t1 - t0, 0))
    country = np.repeat(np.arange(n_c), t1 - t0)
    time = np.tile(np.arange(t0, t1), n_c)
    k = x.shape[-1]
    if fe == "within":
        y = y - y.mean(axis=1, keepdims=True)
        x = x - x.mean(axis=1, keepdims=True)
        x = x.reshape(-1, k)
        k_eq = k + n_c
    elif fe == "dummies":
        x = np.concatenate([x.reshape(-1, k), np.eye(n_c)[country]], axis=1)
        names += [f"fe_{c}" for c in data.countries]
        k_eq = x.shape[1]
    elif fe == "none":
        x = np.concatenate([x.reshape(-1, k), np.ones((n_c * (t1 - t0), 1))], axis=1)
        names.append("const")
        k_eq = x.shape[1]
    else:
        raise ConfigError(f"unknown fixed-effect mode {fe!r}")
    return LpDesign(y.reshape(-1), x, tuple(names), country, time, n_c, k_eq)


def fit(design: LpDesign, n_coef: int = 1, critical: str = "normal") -> list[tuple[float, float, tuple, tuple]]:
    """Least squares plus CR1 time-clustered errors for the first ``n_coef`` columns."""
    y, x = design.y, design.x
    nobs, k = x.shape
    if nobs == 0:
        raise EmptySample("no observations")
    xtx = x.T @ x
    ev = np.linalg.eigvalsh(xtx) if k else np.ones(1)
    if nobs <= design.k_equivalent or ev[0] <= 1e-13 * ev[-1]:
        raise RankDeficient("local-projection design is rank deficient")
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ (x.T @ y)
    e = y - x @ beta
    # rows are country-major with a common time range, so clusters are columns
    n_t = nobs // design.n_countries
    g = (x * e[:, None]).reshape(design.n_countries, n_t, k).sum(axis=0)
    if n_t < MIN_CLUSTERS:
        warnings.warn(f"only {n_t} time clusters", TooFewClustersWarning, stacklevel=3)
    if n_t < 2:
        se = np.full(k, np.nan)
    else:
        factor = n_t / (n_t - 1) * (nobs - 1) / (nobs - design.k_equivalent)
        v = factor * xtx_inv @ (g.T @ g) @ xtx_inv
        se = np.sqrt(np.maximum(np.diag(v), 0.0))
    if critical == "t":
        dof = max(n_t - 1, 1)
        z68, z90 = stats.t.ppf(0.84, dof), stats.t.ppf(0.95, dof)
    else:
        z68, z90 = Z68, Z90
    out = []
    for j in range(n_coef):
        b, s = float(beta[j]), float(se[j])
        out.append((b, s, (b - z68 * s, b + z68 * s), (b - z90 * s, b + z90 * s)))
    return out


def _check_collinear(data: PanelDataset, shocks: Sequence[str]) -> None:
    if len(shocks) != 2:
        return
    if shocks[0] == shocks[1]:
        raise CollinearShocks("the two shocks are the same series")
    a, b = data.column(shocks[0])[0], data.column(shocks[1])[0]
    if np.std(a) == 0 or np.std(b) == 0:
        raise CollinearShocks("a shock series is constant")
    if abs(np.corrcoef(a, b)[0, 1]) > 0.999:
        raise CollinearShocks(f"shocks {shocks[0]} and {shocks[1]} are collinear")


def estimate_lp(data: PanelDataset, spec: LpSpec) -> list[LpEstimate]:
    """Responses for every outcome, shock and horizon ``0..spec.horizon``.

    With two shocks in ``spec`` both enter every regression jointly.
    """
    shocks = _shocks(data, spec)
    _check_collinear(data, shocks)
    out = []
    for var in _outcomes(data, spec):
        for h in range(spec.horizon + 1):
            design = build_lp_design(data, spec, h, var)
            for s, (b, se, c68, c90) in zip(shocks, fit(design, len(shocks), spec.critical)):
                out.append(LpEstimate(s, var, h, b, se, c68, c90, len(design.y)))
    return out


def estimate_rate_race(data: PanelDataset, spec: LpSpec) -> tuple[list[LpEstimate], list[LpEstimate]]:
    """Both shocks in one regression per horizon; returns one path per shock."""
    if len(spec.shocks) != 2:
        raise ConfigError("a rate race needs exactly two shocks")
    est = estimate_lp(data, spec)
    first, second = spec.shocks
    return [e for e in est if e.shock == first], [e for e in est if e.shock == second]


def beta_path(estimates: Iterable[LpEstimate], shock: str, variable: str) -> np.ndarray:
    rows = sorted((e.horizon, e.beta) for e in estimates if e.shock == shock and e.variable == variable)
    return np.array([b for _, b in rows])


def write_lp_csv(path: str | Path, estimates: Iterable[LpEstimate]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LP_HEADER)
        for e in estimates:
            w.writerow([e.shock, e.variable, e.horizon, fmt(e.beta), fmt(e.se),
                        fmt(e.ci68[0]), fmt(e.ci68[1]), fmt(e.ci90[0]), fmt(e.ci90[1]), e.nobs])
