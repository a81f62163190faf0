"""Pooled panel VAR with a conjugate Normal-Wishart prior.

All countries share the lag matrices ``A_1..A_p``, the constant and the
innovation covariance, so the panel stacks into one regression

    Y = X B + E,   rows of E ~ N(0, Sigma),

with one row per (country, month) and ``X`` holding ``p`` lags of the
country's own variables followed by a constant.  ``B`` is ``(n p + 1) x n``;
``A_j`` is the transpose of its ``j``-th ``n x n`` row block.

Prior: ``Sigma ~ IW(S0, a0)`` and ``B | Sigma ~ MN(B0, Phi0, Sigma)`` with a
diagonal ``Phi0`` structured Minnesota-style.  The posterior is of the same
family and is sampled directly, so there is no Markov chain and ``burn_in``
only discards leading draws.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, stats

from ._parallel import chunks, ordered_map, substream
from .data import LOG100, PanelDataset, fmt
from .errors import (
    CholeskyFailure,
    ConfigError,
    InsufficientSample,
    NonPsdPosteriorScale,
    SingularDesign,
)

QUANTILES = (5, 16, 50, 84, 95)
IRF_HEADER = ["shock", "variable", "horizon", "q05", "q16", "q50", "q84", "q95"]


@dataclass(frozen=True)
class NormalWishartPrior:
    """Minnesota-style hyperparameters.

    The prior standard deviation of the coefficient on lag ``l`` of variable
    ``j`` is ``lambda1 / (sigma_j * l**lambda3)`` times ``sqrt(Sigma_ii)`` and
    that of the constant is ``lambda1 * lambda4`` times ``sqrt(Sigma_ii)``.
    ``ar_mean`` is the prior mean of the first own lag for log-level
    variables; every other coefficient has prior mean zero.

    ``lambda2`` is validated and recorded, but the Kronecker structure of the
    conjugate prior cannot give cross-variable lags a separate tightness, so
    it has no effect unless it is 1.
    """

    ar_mean: float = 0.9
    lambda1: float = 0.1
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 100.0

    def __post_init__(self):
        for name in ("lambda1", "lambda3", "lambda4"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.lambda2 <= 1:
            raise ConfigError("lambda2 must lie in (0, 1]")
        if self.lambda2 != 1:
            warnings.warn("lambda2 has no effect under the conjugate Normal-Wishart prior", stacklevel=3)


@dataclass(frozen=True)
class BvarSpec:
    p: int = 6
    prior: NormalWishartPrior = field(default_factory=NormalWishartPrior)
    draws: int = 2000
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.p, (int, np.integer)) and 1 <= self.p <= 13):
            raise ConfigError(f"lag order must be an integer in 1..13, got {self.p!r}")
        if self.draws < 100:
            raise ConfigError("at least 100 draws are needed for bands")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")


@dataclass(frozen=True)
class PooledDesign:
    y: np.ndarray
    x: np.ndarray
    p: int
    variables: tuple[str, ...]
    transforms: tuple[str, ...]
    n_countries: int

    def __iter__(self):
        return iter((self.y, self.x))

    @property
    def n(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class PosteriorDraw:
    b: np.ndarray
    sigma: np.ndarray

    def lag_matrices(self) -> np.ndarray:
        """``(p, n, n)`` array of ``A_1..A_p``."""
        n = self.b.shape[1]
        p = (self.b.shape[0] - 1) // n
        return np.stack([self.b[j * n:(j + 1) * n].T for j in range(p)])

    @property
    def constant(self) -> np.ndarray:
        return self.b[-1]


@dataclass(frozen=True)
class NormalWishartPosterior:
    b_mean: np.ndarray
    phi: np.ndarray
    scale: np.ndarray
    dof: float
    prior_mean: np.ndarray
    prior_phi: np.ndarray
    prior_scale: np.ndarray
    prior_dof: float

    @property
    def sigma_mean(self) -> np.ndarray:
        n = self.scale.shape[0]
        return self.scale / (self.dof - n - 1)

    def b_sd(self) -> np.ndarray:
        """Marginal posterior standard deviations of ``B`` (matrix-t)."""
        return np.sqrt(np.outer(np.diag(self.phi), np.diag(self.sigma_mean)))


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    radius: float


@dataclass(frozen=True)
class IrfSet:
    """Responses to one shock, ``responses[draw, horizon, variable]``."""

    responses: np.ndarray
    variables: tuple[str, ...] = ()
    shock: str = ""
    quantiles: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.quantiles is None:
            q = np.percentile(self.responses, QUANTILES, axis=0)
            object.__setattr__(self, "quantiles", {k: q[i] for i, k in enumerate(QUANTILES)})

    @property
    def horizons(self) -> np.ndarray:
        return np.arange(self.responses.shape[1])

    @property
    def median(self) -> np.ndarray:
        return self.quantiles[50]


def build_pooled_regression(data: PanelDataset, p: int) -> PooledDesign:
    """Stack every country's rows ``t = p..T-1`` into one ``(Y, X)`` pair."""
    n_c, t, n = data.shape
    if t <= p + 1:
        raise InsufficientSample(f"T={t} months not enough for p={p} lags")
    z = data.data
    y = z[:, p:, :].reshape(-1, n)
    lags = [z[:, p - j:t - j, :] for j in range(1, p + 1)]
    x = np.concatenate(lags + [np.ones((n_c, t - p, 1))], axis=2).reshape(-1, n * p + 1)
    return PooledDesign(y, x, p, data.variables, data.transforms, n_c)


def ols(design: PooledDesign) -> np.ndarray:
    y, x = design
    b, *_ = np.linalg.lstsq(x, y, rcond=None)
    return b


def _ar1_scales(design: PooledDesign) -> np.ndarray:
    y, x = design
    n = design.n
    out = np.empty(n)
    for j in range(n):
        xj = np.column_stack([x[:, j], np.ones(len(y))])
        coef, *_ = np.linalg.lstsq(xj, y[:, j], rcond=None)
        e = y[:, j] - xj @ coef
        out[j] = math.sqrt(max(float(e @ e) / max(len(y) - 2, 1), 1e-12))
    return out


def posterior_moments(spec: BvarSpec, design: PooledDesign) -> NormalWishartPosterior:
    y, x = design
    n, p = design.n, design.p
    k = n * p + 1
    if x.shape[1] != k:
        raise ValueError("design does not match the lag order")
    if np.linalg.matrix_rank(x) < k:
        raise SingularDesign("pooled design matrix is not of full column rank")
    pr = spec.prior
    sig = _ar1_scales(design)

    phi0 = np.empty(k)
    for l in range(1, p + 1):
        phi0[(l - 1) * n:l * n] = (pr.lambda1 / (sig * l ** pr.lambda3)) ** 2
    phi0[-1] = (pr.lambda1 * pr.lambda4) ** 2
    b0 = np.zeros((k, n))
    for j, tr in enumerate(design.transforms):
        if tr == LOG100:
            b0[j, j] = pr.ar_mean
    a0 = n + 2.0
    s0 = (a0 - n - 1) * np.diag(sig ** 2)

    prec = x.T @ x + np.diag(1.0 / phi0)
    try:
        cf = linalg.cho_factor(prec)
    except linalg.LinAlgError as exc:
        raise SingularDesign("posterior precision is not positive definite") from exc
    phi = linalg.cho_solve(cf, np.eye(k))
    phi = 0.5 * (phi + phi.T)
    b_mean = linalg.cho_solve(cf, b0 / phi0[:, None] + x.T @ y)
    e = y - x @ b_mean
    db = b_mean - b0
    scale = s0 + e.T @ e + db.T @ (db / phi0[:, None])
    scale = 0.5 * (scale + scale.T)
    try:
        np.linalg.cholesky(scale)
    except np.linalg.LinAlgError as exc:
        raise NonPsdPosteriorScale("posterior inverse-Wishart scale is not positive definite") from exc
    return NormalWishartPosterior(b_mean, phi, scale, len(y) + a0, b0, np.diag(phi0), s0, a0)


def _draw_block(post: NormalWishartPosterior, seeds: Sequence[np.random.SeedSequence]) -> list[PosteriorDraw]:
    chol_phi = np.linalg.cholesky(post.phi)
    k, n = post.b_mean.shape
    iw = stats.invwishart(df=post.dof, scale=post.scale)
    out = []
    for ss in seeds:
        g = np.random.Generator(np.random.PCG64(ss))
        sigma = np.atleast_2d(iw.rvs(random_state=g))
        sigma = 0.5 * (sigma + sigma.T)
        z = g.standard_normal((k, n))
        b = post.b_mean + chol_phi @ z @ np.linalg.cholesky(sigma).T
        out.append(PosteriorDraw(b, sigma))
    return out


def sample_posterior(
    spec: BvarSpec,
    design: PooledDesign,
    threads: int | None = None,
    posterior: NormalWishartPosterior | None = None,
    stream: str = "bvar",
) -> list[PosteriorDraw]:
    """Independent draws from the Normal-inverse-Wishart posterior.

    Draw ``i`` uses its own child of the seed sequence, so the output is the
    same for any number of worker threads.
    """
    post = posterior if posterior is not None else posterior_moments(spec, design)
    total = spec.burn_in + spec.draws
    seeds = substream(spec.seed, stream).spawn(total)
    blocks = ordered_map(lambda r: _draw_block(post, [seeds[i] for i in r]), chunks(total, 100), threads)
    draws = [d for blk in blocks for d in blk]
    return draws[spec.burn_in:]


def companion(b: np.ndarray) -> np.ndarray:
    n = b.shape[1]
    p = (b.shape[0] - 1) // n
    top = np.concatenate([b[j * n:(j + 1) * n].T for j in range(p)], axis=1)
    if p == 1:
        return top
    bottom = np.eye(n * (p - 1), n * p)
    return np.vstack([top, bottom])


def stability_check(draw: PosteriorDraw | np.ndarray) -> StabilityResult:
    b = draw.b if isinstance(draw, PosteriorDraw) else np.asarray(draw)
    radius = float(np.max(np.abs(np.linalg.eigvals(companion(b)))))
    return StabilityResult(radius < 1.0, radius)


def _responses(a: np.ndarray, impact: np.ndarray, horizon: int) -> np.ndarray:
    """Stacked recursion ``y_h = sum_j A_j y_{h-j}`` for ``a`` of shape (D, p, n, n)."""
    d, p, n, _ = a.shape
    out = np.zeros((d, horizon + 1, n))
    out[:, 0] = impact
    for h in range(1, horizon + 1):
        acc = np.zeros((d, n))
        for j in range(1, min(p, h) + 1):
            acc += np.einsum("dik,dk->di", a[:, j - 1], out[:, h - j])
        out[:, h] = acc
    return out


def structural_irf(
    draws: Sequence[PosteriorDraw],
    horizon: int = 36,
    shock_index: int = 0,
    variables: Sequence[str] = (),
    shock: str = "",
    unit: bool = False,
) -> IrfSet:
    """Recursive (Cholesky) responses to the variable ordered ``shock_index``.

    The impulse is one standard deviation, i.e. column ``shock_index`` of the
    lower Cholesky factor of each draw's ``sigma``; with ``unit=True`` the
    responses are rescaled to a unit move of the shock variable on impact.
    """
    if not draws:
        raise ValueError("no draws")
    a = np.stack([d.lag_matrices() for d in draws])
    impacts = np.empty((len(draws), a.shape[2]))
    for i, d in enumerate(draws):
        try:
            l = np.linalg.cholesky(d.sigma)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFailure(f"draw {i}: innovation covariance is not positive definite") from exc
        impacts[i] = l[:, shock_index]
        if unit:
            impacts[i] /= l[shock_index, shock_index]
    return IrfSet(_responses(a, impacts, horizon), tuple(variables), shock)


def estimate(
    data: PanelDataset,
    spec: BvarSpec,
    horizon: int = 36,
    threads: int | None = None,
    stream: str = "bvar",
) -> tuple[NormalWishartPosterior, list[PosteriorDraw], IrfSet]:
    design = build_pooled_regression(data, spec.p)
    post = posterior_moments(spec, design)
    draws = sample_posterior(spec, design, threads, post, stream)
    shock = data.variables[0]
    return post, draws, structural_irf(draws, horizon, 0, data.variables, shock)


def write_irf_csv(path: str | Path, irfs: Iterable[IrfSet]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IRF_HEADER)
        for irf in irfs:
            for j, v in enumerate(irf.variables):
                for h in irf.horizons:
                    w.writerow([irf.shock, v, int(h)] + [fmt(irf.quantiles[q][h, j]) for q in QUANTILES])
