"""Split interest-rate surprises into monetary-policy and information components.

The surprise matrix ``M = (i_total, s)`` is written as ``M = U C`` with
orthogonal columns in ``U = (i_mp, i_id)`` and a loading matrix

    C = [[1, c_mp],
         [1, c_id]],   c_mp < 0 < c_id.

The rotation route takes a QR factorisation ``M = Q R``, rotates ``Q`` by an
angle ``alpha`` chosen inside the range that satisfies the sign restrictions,
and rescales the columns so that they add up to ``i_total``.  The poor-man
route assigns every event wholesale to one component according to the sign
of ``i_total * s``.

Second moments are uncentered (sums of squares) throughout.  The rotation
makes the columns of ``U`` orthogonal in levels, so with this convention the
split ``sum(i_total**2) = sum(i_mp**2) + sum(i_id**2)`` is exact and the MP
share equals ``cos(alpha)**2``.
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateAngle,
    InvalidWeight,
    NoSolution,
    OutOfRange,
    RankDeficient,
    ZeroVariance,
)
from ._dates import month_start

ROTATION = "rotation"
POOR_MAN = "poor_man"

VARIANTS = ("MP", "ID", "total", "poor_man_mp", "poor_man_id")

RANK_TOL = 1e-12
ANGLE_TOL = 1e-12


class CalibrationDiagnostic(UserWarning):
    """Raised as a warning when the share curve is not monotone in the weight."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EventSurprise:
    date: dt.date
    i_total: float
    s: float

    def __post_init__(self):
        if not (math.isfinite(self.i_total) and math.isfinite(self.s)):
            raise ValueError(f"non-finite surprise on {self.date}")


@dataclass(frozen=True)
class SurpriseMatrix:
    """T x 2 matrix of surprises, column 0 the rate and column 1 the stock index."""

    m: np.ndarray
    dates: tuple[dt.date, ...] = ()

    def __post_init__(self):
        m = _readonly(self.m)
        if m.ndim != 2 or m.shape[1] != 2:
            raise ValueError(f"surprise matrix must be T x 2, got {m.shape}")
        if m.shape[0] < 2:
            raise RankDeficient("need at least two events")
        if not np.all(np.isfinite(m)):
            raise ValueError("surprise matrix contains non-finite values")
        dates = tuple(self.dates)
        if dates:
            if len(dates) != m.shape[0]:
                raise ValueError("dates and rows differ in length")
            if any(b <= a for a, b in zip(dates, dates[1:])):
                raise ValueError("event dates must be strictly increasing")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "dates", dates)

    @classmethod
    def from_events(cls, events: Sequence[EventSurprise]) -> "SurpriseMatrix":
        m = np.array([[e.i_total, e.s] for e in events], dtype=float).reshape(-1, 2)
        return cls(m, tuple(e.date for e in events))

    @property
    def i_total(self) -> np.ndarray:
        return self.m[:, 0]

    @property
    def s(self) -> np.ndarray:
        return self.m[:, 1]

    def __len__(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class QrFactors:
    q: np.ndarray
    r: np.ndarray

    @property
    def r11(self) -> float:
        return float(self.r[0, 0])

    @property
    def r12(self) -> float:
        return float(self.r[0, 1])

    @property
    def r22(self) -> float:
        return float(self.r[1, 1])


@dataclass(frozen=True)
class ShockDecomposition:
    """Per-event components ``u = (i_mp, i_id)`` with loadings ``c``.

    ``alpha`` and ``w`` are NaN for the poor-man method.  For that method
    ``c`` holds the least-squares loadings of ``s`` on each component (NaN
    when a component is empty).
    """

    u: np.ndarray
    c: np.ndarray
    alpha: float
    w: float
    method: str
    dates: tuple[dt.date, ...] = ()
    m: np.ndarray = field(default=None, repr=False)

    @property
    def i_mp(self) -> np.ndarray:
        return self.u[:, 0]

    @property
    def i_id(self) -> np.ndarray:
        return self.u[:, 1]

    @property
    def c_mp(self) -> float:
        return float(self.c[0, 1])

    @property
    def c_id(self) -> float:
        return float(self.c[1, 1])

    def reconstruct(self) -> np.ndarray:
        return self.u @ self.c


def qr_signed(m: SurpriseMatrix | np.ndarray) -> QrFactors:
    """Thin QR factorisation with the diagonal of R forced positive.

    Raises
    ------
    RankDeficient
        If the two columns are collinear to within ``RANK_TOL`` relative to
        the norm of ``M``.
    """
    a = m.m if isinstance(m, SurpriseMatrix) else np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 2:
        raise RankDeficient(f"need a T x 2 matrix with T >= 2, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    scale = np.linalg.norm(a)
    d = np.diag(r)
    if scale == 0.0 or abs(d[0]) <= RANK_TOL * scale or abs(d[1]) <= RANK_TOL * scale:
        raise RankDeficient("surprise columns are collinear")
    signs = np.sign(d)
    q = q * signs
    r = r * signs[:, None]
    return QrFactors(_readonly(q), _readonly(r))


def admissible_interval(r: QrFactors | np.ndarray) -> tuple[float, float]:
    """Open interval of rotation angles that satisfy ``c_mp < 0 < c_id``."""
    r = r.r if isinstance(r, QrFactors) else np.asarray(r, dtype=float)
    r12, r22 = float(r[0, 1]), float(r[1, 1])
    if r12 > 0:
        return math.atan(r12 / r22), math.pi / 2
    if r12 == 0:
        return 0.0, math.pi / 2
    return 0.0, math.atan(-r22 / r12)


def rotation_angle(r: QrFactors | np.ndarray, w: float) -> float:
    """Angle at relative position ``w`` inside the admissible interval.

    For ``r12 > 0`` this is ``(1 - w) * arctan(r12 / r22) + w * pi / 2``; for
    ``r12 <= 0`` it is ``w * arctan(-r22 / r12)``, with ``w * pi / 2`` at
    ``r12 == 0``.  ``w = 0.5`` gives the median angle.
    """
    if not (isinstance(w, (int, float, np.floating)) and 0.0 < w < 1.0):
        raise InvalidWeight(f"rotation weight must lie in (0, 1), got {w!r}")
    lo, hi = admissible_interval(r)
    if lo > 0:
        return (1.0 - w) * lo + w * hi
    return w * hi


def _rotate(qr: QrFactors, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    ca, sa = math.cos(alpha), math.sin(alpha)
    if abs(ca) <= ANGLE_TOL or abs(sa) <= ANGLE_TOL:
        raise DegenerateAngle(f"rotation angle {alpha!r} makes one component vanish")
    p = np.array([[ca, sa], [-sa, ca]])
    d = np.diag([qr.r11 * ca, qr.r11 * sa])
    u = qr.q @ p @ d
    c = np.linalg.solve(d, p.T @ qr.r)
    # D^-1 P' R has a unit first column by construction; drop the rounding.
    c[:, 0] = 1.0
    return u, c


def decompose_at_angle(m: SurpriseMatrix, alpha: float, w: float = float("nan")) -> ShockDecomposition:
    """Rotation decomposition at an explicit angle (no admissibility check)."""
    qr = qr_signed(m)
    u, c = _rotate(qr, alpha)
    return ShockDecomposition(_readonly(u), _readonly(c), float(alpha), float(w), ROTATION, m.dates, m.m)


def decompose_rotation(m: SurpriseMatrix, w: float = 0.5) -> ShockDecomposition:
    """Rotation decomposition ``U = Q P D``, ``C = D^-1 P' R`` at weight ``w``."""
    qr = qr_signed(m)
    alpha = rotation_angle(qr, w)
    u, c = _rotate(qr, alpha)
    return ShockDecomposition(_readonly(u), _readonly(c), alpha, float(w), ROTATION, m.dates, m.m)


def decompose_poor_man(events: Sequence[EventSurprise] | SurpriseMatrix) -> ShockDecomposition:
    """Assign each event to MP when ``i_total * s <= 0`` and to ID otherwise."""
    m = events if isinstance(events, SurpriseMatrix) else SurpriseMatrix.from_events(events)
    i, s = m.i_total, m.s
    is_mp = np.sign(i) * np.sign(s) <= 0  # the raw product can underflow to 0
    u = np.zeros_like(m.m)
    u[is_mp, 0] = i[is_mp]
    u[~is_mp, 1] = i[~is_mp]
    c = np.ones((2, 2))
    for k in range(2):
        ss = float(u[:, k] @ u[:, k])
        c[k, 1] = float(u[:, k] @ s) / ss if ss > 0 else float("nan")
    return ShockDecomposition(_readonly(u), _readonly(c), float("nan"), float("nan"), POOR_MAN, m.dates, m.m)


def variance_share(d: ShockDecomposition) -> float:
    """Uncentered MP share ``sum(i_mp**2) / sum(i_total**2)``."""
    total = d.u[:, 0] + d.u[:, 1]
    denom = float(total @ total)
    if denom == 0.0:
        raise ZeroVariance("i_total is identically zero")
    return float(d.u[:, 0] @ d.u[:, 0]) / denom


def calibrate_weight(
    m: SurpriseMatrix,
    target_share: float = 0.68,
    tol: float = 1e-6,
    eps: float = 1e-9,
    grid: int = 101,
) -> float:
    """Weight ``w`` whose rotation decomposition has MP share ``target_share``.

    A coarse grid over ``(eps, 1 - eps)`` brackets the smallest root, which is
    then refined by bisection.  A ``CalibrationDiagnostic`` warning is issued
    if the share is not monotone along the grid.
    """
    if not 0.0 < target_share < 1.0:
        raise ConfigError(f"target share must lie in (0, 1), got {target_share!r}")
    qr = qr_signed(m)

    def gap(w: float) -> float:
        u, _ = _rotate(qr, rotation_angle(qr, w))
        total = u[:, 0] + u[:, 1]
        return float(u[:, 0] @ u[:, 0]) / float(total @ total) - target_share

    ws = np.linspace(eps, 1.0 - eps, grid)
    gs = np.array([gap(float(w)) for w in ws])
    if np.any(np.diff(gs) > 0) and np.any(np.diff(gs) < 0):
        warnings.warn("variance share is not monotone in w; returning the smallest root", CalibrationDiagnostic)
    if gs.min() > tol or gs.max() < -tol:
        lo_s, hi_s = gs.min() + target_share, gs.max() + target_share
        raise NoSolution(
            f"attainable MP share range [{lo_s:.6f}, {hi_s:.6f}] excludes target {target_share}"
        )
    for k in range(grid):
        if gs[k] == 0.0:
            return float(ws[k])
        if k + 1 < grid and gs[k] * gs[k + 1] < 0:
            lo, hi, glo = float(ws[k]), float(ws[k + 1]), gs[k]
            break
    else:
        # target only reachable within tol at an end of the grid
        return float(ws[int(np.argmin(np.abs(gs)))])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = gap(mid)
        if gm == 0.0 or hi - lo < 1e-15:
            break
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    w = 0.5 * (lo + hi)
    if abs(gap(w)) > tol:
        raise NoSolution(f"bisection did not reach tolerance {tol}")
    return w


def aggregate_monthly(
    events: Sequence[EventSurprise] | ShockDecomposition | tuple[Sequence[dt.date], np.ndarray],
    calendar: Sequence[dt.date],
) -> np.ndarray:
    """Sum event values within each calendar month; months without events are 0.

    ``events`` may be a list of ``EventSurprise`` (aggregates ``i_total``), a
    ``ShockDecomposition`` (aggregates both components, shape ``(months, 2)``)
    or a ``(dates, values)`` pair.
    """
    if isinstance(events, ShockDecomposition):
        dates, values = events.dates, np.asarray(events.u)
        if not dates:
            raise ValueError("decomposition carries no dates")
    elif isinstance(events, tuple):
        dates, values = events
        values = np.asarray(values, dtype=float)
    else:
        dates = [e.date for e in events]
        values = np.array([e.i_total for e in events], dtype=float)
    index = {month_start(d): k for k, d in enumerate(calendar)}
    out = np.zeros((len(calendar),) + values.shape[1:])
    for d, v in zip(dates, values):
        k = index.get(month_start(d))
        if k is None:
            raise OutOfRange(f"event on {d} falls outside the calendar")
        out[k] += v
    return out


def monthly_variants(
    rotation: ShockDecomposition,
    poor_man: ShockDecomposition,
    calendar: Sequence[dt.date],
    names: Iterable[str] = VARIANTS,
) -> dict[str, np.ndarray]:
    """Monthly series for each named shock variant."""
    rot = aggregate_monthly(rotation, calendar)
    pm = aggregate_monthly(poor_man, calendar)
    table = {
        "MP": rot[:, 0],
        "ID": rot[:, 1],
        "total": aggregate_monthly((rotation.dates, rotation.m[:, 0]), calendar),
        "poor_man_mp": pm[:, 0],
        "poor_man_id": pm[:, 1],
    }
    out = {}
    for name in names:
        if name not in table:
            raise ConfigError(f"unknown shock variant {name!r}; choose from {', '.join(VARIANTS)}")
        out[name] = table[name]
    return out
