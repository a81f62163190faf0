"""Synthetic data-generating processes with known ground truth.

Two layers are simulated.  At the meeting level, orthogonal latent shocks
``U = (mp, id)`` are mapped to surprises ``M = U C``.  At the monthly level a
pooled VAR runs for every country with common lag matrices; the first
variable is a common shock series supplied from outside (its equation is
identically zero) and the country variables load on it either through the
first column of the innovation covariance or, in the bias experiment,
through separate MP and ID impact vectors.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bvar as bvar_mod
from . import lp as lp_mod
from ._dates import add_months, month_range
from ._parallel import ordered_map, substream
from .data import LEVEL, LOG100, PanelDataset, fmt, with_shocks, MonthlySeries, write_events
from .decomposition import (
    EventSurprise,
    ROTATION,
    ShockDecomposition,
    SurpriseMatrix,
    aggregate_monthly,
    qr_signed,
)
from .errors import ConfigError, ExplosiveDgp, PanelShockError

COUNTRIES = (
    "BRA", "BGR", "CHL", "COL", "HUN", "IND", "IDN", "MYS", "MEX", "PER", "PHL", "POL",
    "RUS", "ZAF", "TUR", "URY", "AUS", "CAN", "ISL", "JPN", "SGP", "KOR", "SWE",
)
VARIABLES = ("shock", "ner", "ip", "cpi", "equity")


def default_meeting_calendar(start: dt.date, months: int) -> tuple[dt.date, ...]:
    """Roughly ECB-like: first Thursday of each month except August, plus a
    second meeting on the third Thursday of March and September."""
    out = []
    for k in range(months):
        m0 = add_months(start, k)
        first_thu = m0 + dt.timedelta(days=(3 - m0.weekday()) % 7)
        if m0.month != 8:
            out.append(first_thu)
        if m0.month in (3, 9):
            out.append(first_thu + dt.timedelta(days=14))
    return tuple(out)


def _default_a() -> np.ndarray:
    a = np.zeros((2, 5, 5))
    a[0, 1:, 1:] = [
        [0.93, 0.00, 0.00, 0.00],
        [0.00, 0.95, 0.00, 0.04],
        [0.02, 0.03, 0.96, 0.00],
        [0.00, 0.00, 0.00, 0.92],
    ]
    a[1, 1:, 1:] = np.diag([-0.04, -0.05, -0.04, -0.03])
    return a


DEFAULT_MP_IMPACT = (1.0, -0.8, -0.5, -1.2)
DEFAULT_ID_IMPACT = (-0.6, 0.4, 0.3, 0.9)


def sigma_from_impact(shock_var: float, impact: Sequence[float], cond_cov: np.ndarray) -> np.ndarray:
    """Innovation covariance in which a unit shock moves the others by ``impact``."""
    g = np.asarray(impact, dtype=float)
    n = len(g) + 1
    s = np.empty((n, n))
    s[0, 0] = shock_var
    s[0, 1:] = s[1:, 0] = shock_var * g
    s[1:, 1:] = np.asarray(cond_cov) + shock_var * np.outer(g, g)
    return s


def _default_sigma() -> np.ndarray:
    cond = np.diag([0.6, 0.5, 0.3, 0.8]) ** 2
    cond[1, 3] = cond[3, 1] = 0.3 * 0.5 * 0.8
    return sigma_from_impact(1.0, DEFAULT_MP_IMPACT, cond)


@dataclass(frozen=True, eq=False)
class DgpSpec:
    n_countries: int = 23
    months: int = 156
    start: dt.date = dt.date(2004, 1, 1)
    meetings: tuple[dt.date, ...] = ()
    true_c: np.ndarray = field(default_factory=lambda: np.array([[1.0, -0.08], [1.0, 0.10]]))
    latent_std: tuple[float, float] = (math.sqrt(0.68) * 5.0, math.sqrt(0.32) * 5.0)
    true_a: np.ndarray = field(default_factory=_default_a)
    true_sigma: np.ndarray = field(default_factory=_default_sigma)
    mp_impact: tuple[float, ...] = DEFAULT_MP_IMPACT
    id_impact: tuple[float, ...] = DEFAULT_ID_IMPACT
    irf_signs: dict = field(default_factory=lambda: {"MP": (1, -1, -1, -1), "ID": (-1, 1, 1, 1)})
    variables: tuple[str, ...] = VARIABLES
    burn_in: int = 100
    seed: int = 0

    def __post_init__(self):
        a = np.array(self.true_a, dtype=float)
        if a.ndim == 2:
            a = a[None]
        n = len(self.variables)
        if a.shape[1:] != (n, n):
            raise ConfigError(f"true_a blocks must be {n} x {n}")
        if np.any(a[:, 0, :] != 0):
            raise ConfigError("the shock equation (row 1 of every lag block) must be zero")
        object.__setattr__(self, "true_a", a)
        sig = np.array(self.true_sigma, dtype=float)
        try:
            np.linalg.cholesky(sig)
        except np.linalg.LinAlgError:
            raise ConfigError("true_sigma must be positive definite") from None
        object.__setattr__(self, "true_sigma", sig)
        c = np.array(self.true_c, dtype=float)
        if c.shape != (2, 2) or np.any(c[:, 0] != 1.0) or not c[0, 1] < 0 < c[1, 1]:
            raise ConfigError("true_c needs a unit first column and c_mp < 0 < c_id")
        object.__setattr__(self, "true_c", c)
        for name in ("mp_impact", "id_impact"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != n - 1:
                raise ConfigError(f"{name} needs {n - 1} entries")
            object.__setattr__(self, name, v)
        if self.n_countries > len(COUNTRIES):
            names = tuple(f"C{i:03d}" for i in range(self.n_countries))
        else:
            names = COUNTRIES[: self.n_countries]
        object.__setattr__(self, "_countries", names)
        if not self.meetings:
            object.__setattr__(self, "meetings", default_meeting_calendar(self.start, self.months))
        if self.spectral_radius() >= 1.0:
            raise ExplosiveDgp(f"companion spectral radius {self.spectral_radius():.4f} >= 1")

    @property
    def countries(self) -> tuple[str, ...]:
        return self._countries

    @property
    def calendar(self) -> tuple[dt.date, ...]:
        return month_range(self.start, add_months(self.start, self.months - 1))

    @property
    def p(self) -> int:
        return self.true_a.shape[0]

    @property
    def b(self) -> np.ndarray:
        """True coefficients in the ``(n p + 1) x n`` layout of the estimator."""
        return np.vstack([blk.T for blk in self.true_a] + [np.zeros((1, len(self.variables)))])

    def spectral_radius(self) -> float:
        return bvar_mod.stability_check(self.b).radius

    @property
    def mp_share(self) -> float:
        s_mp, s_id = self.latent_std
        return s_mp ** 2 / (s_mp ** 2 + s_id ** 2)

    def unit_irf(self, impact: Sequence[float], horizon: int) -> np.ndarray:
        """Exact responses of all variables to an impulse vector ``impact``."""
        a = self.true_a[None]
        return bvar_mod._responses(a, np.asarray(impact, dtype=float)[None], horizon)[0]

    def shock_irf(self, horizon: int) -> np.ndarray:
        """Responses to a unit move of the shock variable through ``true_sigma``."""
        return self.unit_irf(self.true_sigma[:, 0] / self.true_sigma[0, 0], horizon)

    def with_(self, **kw) -> "DgpSpec":
        return replace(self, **kw)


def _rng(spec: DgpSpec, rng, name: str) -> np.random.Generator:
    if rng is not None:
        return rng
    return np.random.Generator(np.random.PCG64(substream(spec.seed, name)))


def true_angle(m: SurpriseMatrix, u_mp: np.ndarray) -> float:
    """Rotation angle whose decomposition has ``u_mp`` as its MP column."""
    f = qr_signed(m)
    proj = f.q.T @ np.asarray(u_mp, dtype=float)
    return math.atan2(-proj[1], proj[0])


def simulate_surprises(spec: DgpSpec, rng: np.random.Generator | None = None):
    """Meeting-level surprises and their ground-truth decomposition.

    Latent draws are orthogonalised exactly (in levels) before being mapped
    to ``M = U C``.
    """
    g = _rng(spec, rng, "surprises")
    t = len(spec.meetings)
    z = g.standard_normal((t, 2)) * np.asarray(spec.latent_std)
    u = z.copy()
    n1 = float(u[:, 0] @ u[:, 0])
    if n1 > 0:
        u[:, 1] -= (u[:, 0] @ u[:, 1]) / n1 * u[:, 0]
    m = u @ spec.true_c
    events = [EventSurprise(d, float(m[k, 0]), float(m[k, 1])) for k, d in enumerate(spec.meetings)]
    try:
        alpha = true_angle(SurpriseMatrix(m, spec.meetings), u[:, 0])
    except PanelShockError:
        alpha = float("nan")
    truth = ShockDecomposition(u, spec.true_c.copy(), alpha, float("nan"), ROTATION, spec.meetings, m)
    return events, truth


def simulate_panel(
    spec: DgpSpec,
    shock: np.ndarray,
    rng: np.random.Generator | None = None,
    exog: np.ndarray | None = None,
    exog_loadings: np.ndarray | None = None,
    noise: bool = True,
    shock_name: str | None = None,
) -> PanelDataset:
    """Country panels driven by a common monthly shock series.

    Country innovations are ``g * shock_t + L xi_t (+ exog_t @ exog_loadings.T)``
    where ``g = true_sigma[1:, 0] / true_sigma[0, 0]`` and ``L`` is the Cholesky
    factor of the conditional covariance.  When ``exog`` is given the shock
    series gets no loading of its own.  The first ``burn_in`` periods (zero
    shock) are discarded.
    """
    g = _rng(spec, rng, "panel")
    shock = np.asarray(shock, dtype=float)
    if shock.shape != (spec.months,):
        raise ValueError(f"shock series must have {spec.months} months")
    n = len(spec.variables)
    n_c, p, burn = spec.n_countries, spec.p, spec.burn_in
    total = burn + spec.months
    s = spec.true_sigma
    load = s[1:, 0] / s[0, 0]
    cond = s[1:, 1:] - np.outer(s[1:, 0], s[0, 1:]) / s[0, 0]
    chol = np.linalg.cholesky(cond)
    if exog is not None:
        exog = np.asarray(exog, dtype=float).reshape(spec.months, -1)
        loads = np.asarray(exog_loadings, dtype=float).reshape(n - 1, exog.shape[1])
        load = np.zeros(n - 1)
    shock_full = np.concatenate([np.zeros(burn), shock])

    eps = np.zeros((n_c, total, n))
    eps[:, :, 0] = shock_full
    if noise:
        eps[:, :, 1:] = g.standard_normal((n_c, total, n - 1)) @ chol.T
    eps[:, :, 1:] += shock_full[None, :, None] * load
    if exog is not None:
        eps[:, burn:, 1:] += (exog @ loads.T)[None]

    z = np.zeros((n_c, total, n))
    a = spec.true_a
    for t in range(total):
        acc = eps[:, t].copy()
        for j in range(1, min(p, t) + 1):
            acc += z[:, t - j] @ a[j - 1].T
        z[:, t] = acc
    z = z[:, burn:]
    names = spec.variables if shock_name is None else (shock_name,) + spec.variables[1:]
    return PanelDataset(spec.countries, names, spec.calendar, z, (LEVEL,) * n, 1, {})


def _country_block(ds: PanelDataset) -> PanelDataset:
    k = ds.n_shocks
    return PanelDataset(ds.countries, ds.variables[k:], ds.dates, ds.data[:, :, k:], ds.transforms[k:], 0, {})


def monthly_truth(spec: DgpSpec, truth: ShockDecomposition) -> tuple[np.ndarray, np.ndarray]:
    mm = aggregate_monthly(truth, spec.calendar)
    return mm[:, 0], mm[:, 1]


def simulate_bias_panel(spec: DgpSpec, rng: np.random.Generator):
    """One replication: surprises, monthly MP/ID series and the country panel."""
    _, truth = simulate_surprises(spec, rng)
    mp, id_ = monthly_truth(spec, truth)
    panel = simulate_panel(
        spec, mp + id_, rng, exog=np.column_stack([mp, id_]),
        exog_loadings=np.column_stack([spec.mp_impact, spec.id_impact]), shock_name="total",
    )
    return truth, mp, id_, _country_block(panel)


# --- experiments -----------------------------------------------------------------------

@dataclass
class BiasReport:
    """Monte-Carlo means of unit-shock LP responses, ``[horizon, variable]``."""

    variables: tuple[str, ...]
    mp: np.ndarray
    id: np.ndarray
    total: np.ndarray
    mp_se: np.ndarray
    total_se: np.ndarray
    ratio: np.ndarray
    ratio_se: np.ndarray
    share: float
    share_se: float
    true_mp: np.ndarray
    true_id: np.ndarray
    replications: int
    irf_signs: dict

    @property
    def attenuation(self) -> np.ndarray:
        """Fraction by which the composite response falls short of the MP response."""
        return 1.0 - self.ratio

    @property
    def between(self) -> np.ndarray:
        lo = np.minimum(self.mp, self.id)
        hi = np.maximum(self.mp, self.id)
        return (self.total > lo) & (self.total < hi)

    def sign_table(self) -> dict[str, np.ndarray]:
        """Per shock, ``[horizon, variable]`` booleans: estimated sign equals the configured one."""
        out = {}
        for shock, est in (("MP", self.mp), ("ID", self.id)):
            want = self.irf_signs.get(shock)
            if want is not None:
                out[shock] = np.sign(est) == np.asarray(want)[None, :]
        return out

    def rows(self) -> list[dict]:
        signs = self.sign_table()
        out = []
        for h in range(self.mp.shape[0]):
            for j, v in enumerate(self.variables):
                out.append({
                    "horizon": h, "variable": v,
                    "true_mp": self.true_mp[h, j], "true_id": self.true_id[h, j],
                    "beta_mp": self.mp[h, j], "beta_id": self.id[h, j], "beta_total": self.total[h, j],
                    "ratio": self.ratio[h, j], "attenuation": self.attenuation[h, j],
                    "between": bool(self.between[h, j]),
                    "mp_sign_ok": bool(signs["MP"][h, j]) if "MP" in signs else None,
                    "id_sign_ok": bool(signs["ID"][h, j]) if "ID" in signs else None,
                })
        return out


def _lp_paths(panel: PanelDataset, shocks: dict[str, np.ndarray], spec: lp_mod.LpSpec) -> dict[str, np.ndarray]:
    out = {}
    for name, series in shocks.items():
        ds = with_shocks(panel, {name: MonthlySeries(panel.dates, series)})
        est = lp_mod.estimate_lp(ds, replace(spec, shocks=(name,)))
        arr = np.empty((spec.horizon + 1, len(panel.variables)))
        for e in est:
            arr[e.horizon, panel.variables.index(e.variable)] = e.beta
        out[name] = arr
    return out


def _seeds(spec: DgpSpec, name: str, n: int) -> list[np.random.SeedSequence]:
    return substream(spec.seed, name).spawn(n)


def bias_experiment(
    spec: DgpSpec,
    replications: int = 200,
    horizon: int = 12,
    lp_spec: lp_mod.LpSpec | None = None,
    threads: int | None = None,
) -> BiasReport:
    """Estimate unit-shock responses to the true MP, true ID and composite shocks.

    With orthogonal components the composite coefficient is the
    variance-weighted average of the MP and ID coefficients, so it lies between
    them and equals ``share * mp`` when the ID effect is zero.
    """
    lp_spec = replace(lp_spec or lp_mod.LpSpec(), horizon=horizon)

    def one(ss):
        rng = np.random.Generator(np.random.PCG64(ss))
        _, mp, id_, panel = simulate_bias_panel(spec, rng)
        paths = _lp_paths(panel, {"MP": mp, "ID": id_, "total": mp + id_}, lp_spec)
        tot = mp + id_
        return paths, float(mp @ mp) / float(tot @ tot)

    res = ordered_map(one, _seeds(spec, "bias", replications), threads)
    mp = np.stack([r[0]["MP"] for r in res])
    id_ = np.stack([r[0]["ID"] for r in res])
    tot = np.stack([r[0]["total"] for r in res])
    shares = np.array([r[1] for r in res])
    root = math.sqrt(replications)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = tot.mean(0) / mp.mean(0)
        # delta method for a ratio of means
        ratio_se = (tot - ratio * mp).std(0, ddof=1) / (root * np.abs(mp.mean(0)))
    return BiasReport(
        variables=spec.variables[1:],
        mp=mp.mean(0), id=id_.mean(0), total=tot.mean(0),
        mp_se=mp.std(0, ddof=1) / root, total_se=tot.std(0, ddof=1) / root,
        ratio=ratio, ratio_se=ratio_se,
        share=float(shares.mean()), share_se=float(shares.std(ddof=1) / root),
        true_mp=spec.unit_irf((0.0,) + spec.mp_impact, horizon)[:, 1:],
        true_id=spec.unit_irf((0.0,) + spec.id_impact, horizon)[:, 1:],
        replications=replications, irf_signs=dict(spec.irf_signs),
    )


@dataclass
class LpConsistency:
    variables: tuple[str, ...]
    mean_beta: np.ndarray
    se_mean: np.ndarray
    true_irf: np.ndarray

    @property
    def rel_error(self) -> np.ndarray:
        return np.abs(self.mean_beta - self.true_irf) / np.abs(self.true_irf)


def lp_consistency(
    spec: DgpSpec,
    replications: int = 500,
    horizon: int = 12,
    lp_spec: lp_mod.LpSpec | None = None,
    threads: int | None = None,
) -> LpConsistency:
    """Mean LP responses to an iid shock against the exact unit-shock VAR response."""
    lp_spec = replace(lp_spec or lp_mod.LpSpec(), horizon=horizon)
    sd = math.sqrt(spec.true_sigma[0, 0])

    def one(ss):
        rng = np.random.Generator(np.random.PCG64(ss))
        shock = rng.standard_normal(spec.months) * sd
        panel = simulate_panel(spec, shock, rng)
        return _lp_paths(_country_block(panel), {"shock": shock}, lp_spec)["shock"]

    paths = np.stack(ordered_map(one, _seeds(spec, "lp", replications), threads))
    true = spec.shock_irf(horizon)[:, 1:]
    return LpConsistency(spec.variables[1:], paths.mean(0), paths.std(0, ddof=1) / math.sqrt(replications), true)


@dataclass
class BvarRecovery:
    coverage: float
    inside: np.ndarray
    posterior: bvar_mod.NormalWishartPosterior
    ols: np.ndarray
    flat_posterior_mean: np.ndarray
    irf_coverage: float


def simulate_pooled_var(spec: DgpSpec, rng: np.random.Generator | None = None) -> PanelDataset:
    """Panel from the pooled VAR itself: every country draws its own innovations
    (first variable included) from ``N(0, true_sigma)``.

    This is the likelihood the pooled estimator assumes.  Country variables
    are tagged ``log100`` as after ingestion, so the first-own-lag prior mean
    applies to them.
    """
    g = _rng(spec, rng, "pooled_var")
    n_c, n, p, burn = spec.n_countries, len(spec.variables), spec.p, spec.burn_in
    total = burn + spec.months
    eps = g.standard_normal((n_c, total, n)) @ np.linalg.cholesky(spec.true_sigma).T
    z = np.zeros_like(eps)
    for t in range(total):
        acc = eps[:, t].copy()
        for j in range(1, min(p, t) + 1):
            acc += z[:, t - j] @ spec.true_a[j - 1].T
        z[:, t] = acc
    return PanelDataset(spec.countries, spec.variables, spec.calendar, z[:, burn:],
                        (LEVEL,) + (LOG100,) * (n - 1), 0, {})


def lab_panel(spec: DgpSpec, rng: np.random.Generator | None = None) -> PanelDataset:
    """Panel driven by an iid common shock with the ``true_sigma`` variance."""
    g = _rng(spec, rng, "lab_panel")
    shock = g.standard_normal(spec.months) * math.sqrt(spec.true_sigma[0, 0])
    return simulate_panel(spec, shock, g)


def _tag_log100(ds: PanelDataset) -> PanelDataset:
    tr = ds.transforms[: ds.n_shocks] + (LOG100,) * (len(ds.variables) - ds.n_shocks)
    return PanelDataset(ds.countries, ds.variables, ds.dates, ds.data, tr, ds.n_shocks, ds.provenance)


def bvar_recovery(
    spec: DgpSpec,
    bvar_spec: bvar_mod.BvarSpec | None = None,
    horizon: int = 24,
    threads: int | None = None,
    pooled: bool = True,
) -> BvarRecovery:
    """Share of true coefficients inside the 95% posterior bands on one lab panel.

    ``pooled=True`` simulates the pooled VAR exactly (independent innovations
    per country).  ``pooled=False`` uses a common shock series instead; the
    errors then share a component across countries that the pooled
    likelihood treats as independent, so bands on the shock-lag, constant and
    shock-equation coefficients are too narrow.
    """
    bvar_spec = bvar_spec or bvar_mod.BvarSpec(p=spec.p, seed=spec.seed)
    if bvar_spec.p != spec.p:
        raise ConfigError("recovery check needs the estimated lag order to equal the true one")
    panel = simulate_pooled_var(spec) if pooled else _tag_log100(lab_panel(spec))
    design = bvar_mod.build_pooled_regression(panel, bvar_spec.p)
    post = bvar_mod.posterior_moments(bvar_spec, design)
    draws = bvar_mod.sample_posterior(bvar_spec, design, threads, post)
    bs = np.stack([d.b for d in draws])
    lo, hi = np.percentile(bs, [2.5, 97.5], axis=0)
    truth = spec.b
    inside = (truth >= lo) & (truth <= hi)
    flat = replace(bvar_spec, prior=bvar_mod.NormalWishartPrior(ar_mean=0.0, lambda1=1e6))
    flat_post = bvar_mod.posterior_moments(flat, design)
    irf = bvar_mod.structural_irf(draws, horizon)
    l = np.linalg.cholesky(spec.true_sigma)
    true_irf = spec.unit_irf(l[:, 0], horizon)
    irf_in = (true_irf >= irf.quantiles[5]) & (true_irf <= irf.quantiles[95])
    return BvarRecovery(float(inside.mean()), inside, post, bvar_mod.ols(design), flat_post.b_mean,
                        float(irf_in[:, 1:].mean()))


# --- bundle ---------------------------------------------------------------------------

# source-series names per model variable, in priority order
SOURCES = {
    "ner": ("NER_EUR",),
    "ip": ("IP_SA", "IP", "IP_MANUF"),
    "cpi": ("CPI", "PPI"),
    "equity": ("EQ", "EQ_EOP"),
}


def bundle_truth(spec: DgpSpec):
    """Events, true decomposition and simulated panel behind :func:`write_bundle`."""
    rng = np.random.Generator(np.random.PCG64(substream(spec.seed, "bundle")))
    events, truth = simulate_surprises(spec, rng)
    mp, id_ = monthly_truth(spec, truth)
    panel = simulate_panel(
        spec, mp + id_, rng, exog=np.column_stack([mp, id_]),
        exog_loadings=np.column_stack([spec.mp_impact, spec.id_impact]),
    )
    return events, truth, panel


def write_bundle(spec: DgpSpec, directory: str | Path) -> dict[str, Path]:
    """Write ``events.csv`` and a raw long-form ``panel.csv`` for the ingestion path.

    Country variables are stored as index levels ``100 * exp(x / 100)`` so
    that the ``log100`` transform returns the simulated series plus a
    constant.  Coverage is deliberately patchy: some countries lack the
    first-priority IP or equity series (or have a gap in it), PER only
    reports manufacturing IP and AUS only a PPI.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    events, _, panel = bundle_truth(spec)
    write_events(directory / "events.csv", events)

    lines = ["country,date,variable,value"]
    for i, c in enumerate(panel.countries):
        for j, var in enumerate(panel.variables[1:], start=1):
            level = 100.0 * np.exp(panel.data[i, :, j] / 100.0)
            sources = list(SOURCES[var])
            present = {s: np.ones(len(level), dtype=bool) for s in sources}
            if var == "ip":
                if c == "PER":
                    present["IP_SA"][:] = False
                    present["IP"][:] = False
                elif i % 5 == 1:
                    present["IP_SA"][len(level) // 3] = False  # one-month gap
                elif i % 7 == 3:
                    present["IP_SA"][:] = False
            if var == "cpi":
                if c == "AUS":
                    present["CPI"][:] = False
                else:
                    present["PPI"][:] = False
            if var == "equity" and i % 6 == 2:
                present["EQ"][: spec.months // 2] = False
            for s in sources:
                if not present[s].any():
                    continue
                for t, d in enumerate(panel.dates):
                    v = fmt(level[t]) if present[s][t] else ""
                    lines.append(f"{c},{d.isoformat()},{s},{v}")
    (directory / "panel.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"events": directory / "events.csv", "panel": directory / "panel.csv"}
