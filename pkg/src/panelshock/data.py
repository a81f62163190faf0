"""CSV ingestion, series selection and panel assembly.

Long-form panel files have the header ``country,date,variable,value`` where
``variable`` names a *source* series.  A :class:`SeriesPriorityRule` maps a
model variable to an ordered list of source series; for each country the
first candidate with full coverage over the window is used.  Empty value
cells count as missing.

All numbers are written with 17 significant digits so that files round-trip
exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._dates import month_range, month_start, parse_month
from .decomposition import EventSurprise, ShockDecomposition
from .errors import InputError, MissingCoverage, ParseError, RangeMismatch

log = logging.getLogger(__name__)

LEVEL = "level"
LOG100 = "log100"
TRANSFORMS = (LEVEL, LOG100)

PANEL_HEADER = ["country", "date", "variable", "value"]
EVENT_HEADER = ["date", "i_total", "s"]
DECOMPOSITION_HEADER = ["date", "i_total", "s", "i_mp", "i_id", "method", "alpha", "w"]


def fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return format(float(x), ".17g")


def apply_transform(values: np.ndarray, transform: str) -> np.ndarray:
    if transform == LEVEL:
        return np.asarray(values, dtype=float)
    if transform == LOG100:
        values = np.asarray(values, dtype=float)
        if np.any(values <= 0):
            raise InputError("log transform needs strictly positive values")
        return 100.0 * np.log(values)
    raise InputError(f"unknown transform {transform!r}")


@dataclass(frozen=True)
class MonthlySeries:
    dates: tuple[dt.date, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.dates),):
            raise ValueError("monthly series values and dates differ in length")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dates", tuple(month_start(d) for d in self.dates))


@dataclass(frozen=True)
class SeriesPriorityRule:
    variable: str
    candidates: tuple[str, ...]
    transform: str = LOG100

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError(f"rule for {self.variable!r} has no candidates")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced ``countries x months x variables`` array.

    The first ``n_shocks`` variables are common shocks, identical across
    countries.  ``provenance`` maps ``"country|variable"`` to the selected
    source series and the transform applied.
    """

    countries: tuple[str, ...]
    variables: tuple[str, ...]
    dates: tuple[dt.date, ...]
    data: np.ndarray
    transforms: tuple[str, ...]
    n_shocks: int = 0
    provenance: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    frequency: str = "monthly"

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        n, t, k = len(self.countries), len(self.dates), len(self.variables)
        if data.shape != (n, t, k):
            raise ValueError(f"data shape {data.shape} does not match ({n}, {t}, {k})")
        if len(self.transforms) != k:
            raise ValueError("one transform per variable is required")
        if not np.all(np.isfinite(data)):
            raise InputError("panel contains missing or non-finite cells")
        if len(set(self.countries)) != n or len(set(self.variables)) != k:
            raise ValueError("duplicate country or variable names")
        if not 0 <= self.n_shocks <= k:
            raise ValueError("n_shocks out of range")
        if self.n_shocks and n > 1 and np.any(data[:, :, : self.n_shocks] != data[:1, :, : self.n_shocks]):
            raise ValueError("shock columns must be identical across countries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        for name in ("countries", "variables", "dates", "transforms"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "provenance", {k: dict(v) for k, v in self.provenance.items()})

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def shock_names(self) -> tuple[str, ...]:
        return self.variables[: self.n_shocks]

    def index(self, variable: str) -> int:
        try:
            return self.variables.index(variable)
        except ValueError:
            raise KeyError(f"unknown variable {variable!r}") from None

    def column(self, variable: str) -> np.ndarray:
        return self.data[:, :, self.index(variable)]

    def subset(self, countries: Sequence[str]) -> "PanelDataset":
        idx = [self.countries.index(c) for c in countries]
        prov = {k: v for k, v in self.provenance.items() if k.split("|", 1)[0] in countries}
        return PanelDataset(tuple(countries), self.variables, self.dates, self.data[idx],
                            self.transforms, self.n_shocks, prov)

    def window(self, start: dt.date, end: dt.date) -> "PanelDataset":
        keep = [k for k, d in enumerate(self.dates) if month_start(start) <= d <= month_start(end)]
        if not keep:
            raise RangeMismatch(f"window {start}..{end} does not overlap the panel")
        return PanelDataset(self.countries, self.variables, tuple(self.dates[k] for k in keep),
                            self.data[:, keep], self.transforms, self.n_shocks, self.provenance)

    def replace_data(self, data: np.ndarray) -> "PanelDataset":
        return PanelDataset(self.countries, self.variables, self.dates, data,
                            self.transforms, self.n_shocks, self.provenance)

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.countries == other.countries
            and self.variables == other.variables
            and self.dates == other.dates
            and self.transforms == other.transforms
            and self.n_shocks == other.n_shocks
            and dict(self.provenance) == dict(other.provenance)
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


# --- events -----------------------------------------------------------------------

def _reader(path: Path, header: list[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open input: {exc.strerror}", str(path)) from exc
    rows = csv.reader(fh)
    first = next(rows, None)
    if first is None or [h.strip() for h in first] != header:
        fh.close()
        raise ParseError(f"expected header {','.join(header)}", str(path), 1)
    return fh, rows


def _float(text: str, path: Path, line: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", str(path), line) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite value: {text!r}", str(path), line)
    return x


def _date(text: str, path: Path, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        try:
            return parse_month(text)
        except ValueError:
            raise ParseError(f"bad ISO-8601 date: {text!r}", str(path), line) from None


def read_events(path: str | Path) -> list[EventSurprise]:
    path = Path(path)
    fh, rows = _reader(path, EVENT_HEADER)
    events = []
    with fh:
        for line, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", str(path), line)
            d = _date(row[0], path, line)
            if events and d <= events[-1].date:
                raise ParseError("event dates must be strictly increasing", str(path), line)
            events.append(EventSurprise(d, _float(row[1], path, line), _float(row[2], path, line)))
    if not events:
        raise ParseError("no events", str(path))
    return events


def write_events(path: str | Path, events: Iterable[EventSurprise]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for e in events:
            w.writerow([e.date.isoformat(), fmt(e.i_total), fmt(e.s)])


def write_decomposition(path: str | Path, decompositions: Iterable[ShockDecomposition]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECOMPOSITION_HEADER)
        for d in decompositions:
            for k, date in enumerate(d.dates):
                w.writerow([
                    date.isoformat(), fmt(d.m[k, 0]), fmt(d.m[k, 1]),
                    fmt(d.u[k, 0]), fmt(d.u[k, 1]), d.method, fmt(d.alpha), fmt(d.w),
                ])


# --- panels -----------------------------------------------------------------------

def read_long(paths: Sequence[str | Path]) -> dict[tuple[str, str], dict[dt.date, float]]:
    """Parse long-form panel files into ``{(country, source): {month: value}}``."""
    out: dict[tuple[str, str], dict[dt.date, float]] = {}
    for path in paths:
        path = Path(path)
        fh, rows = _reader(path, PANEL_HEADER)
        with fh:
            for line, row in enumerate(rows, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise ParseError(f"expected 4 fields, got {len(row)}", str(path), line)
                country, date, source, value = (c.strip() for c in row)
                if not country or not source:
                    raise ParseError("empty country or variable", str(path), line)
                month = month_start(_date(date, path, line))
                cell = out.setdefault((country, source), {})
                if month in cell:
                    raise ParseError(f"duplicate observation {country}/{source}/{month}", str(path), line)
                cell[month] = float("nan") if value == "" else _float(value, path, line)
    return out


def ingest_panel(
    files: Sequence[str | Path],
    rules: Sequence[SeriesPriorityRule],
    start: dt.date,
    end: dt.date,
    countries: Sequence[str] | None = None,
) -> PanelDataset:
    """Assemble a balanced panel of the rule variables over ``start..end``."""
    raw = read_long(files)
    months = month_range(start, end)
    if not months:
        raise InputError("empty window")
    if countries is None:
        countries = sorted({c for c, _ in raw})
    data = np.empty((len(countries), len(months), len(rules)))
    provenance = {}
    for i, country in enumerate(countries):
        for j, rule in enumerate(rules):
            best_gaps = None
            for source in rule.candidates:
                cell = raw.get((country, source), {})
                gaps = [m for m in months if not math.isfinite(cell.get(m, float("nan")))]
                if not gaps:
                    values = np.array([cell[m] for m in months])
                    try:
                        data[i, :, j] = apply_transform(values, rule.transform)
                    except InputError as exc:
                        raise InputError(f"{country}/{source}: {exc}") from None
                    provenance[f"{country}|{rule.variable}"] = {"source": source, "transform": rule.transform}
                    break
                if best_gaps is None or len(gaps) < len(best_gaps):
                    best_gaps = gaps
            else:
                raise MissingCoverage(country, rule.variable, [m.strftime("%Y-%m") for m in best_gaps])
    return PanelDataset(tuple(countries), tuple(r.variable for r in rules), months, data,
                        tuple(r.transform for r in rules), 0, provenance)


def with_shocks(panel: PanelDataset, shocks: Mapping[str, MonthlySeries]) -> PanelDataset:
    """Prepend common shock columns (in mapping order) to a country panel.

    A shock series longer than the panel is truncated to the panel window; a
    series that does not cover the whole panel window raises RangeMismatch.
    """
    if panel.n_shocks:
        base = PanelDataset(panel.countries, panel.variables[panel.n_shocks:], panel.dates,
                            panel.data[:, :, panel.n_shocks:], panel.transforms[panel.n_shocks:], 0,
                            {k: v for k, v in panel.provenance.items()
                             if k.split("|", 1)[1] not in panel.shock_names})
        panel = base
    cols = []
    prov = {}
    for name, series in shocks.items():
        pos = {d: k for k, d in enumerate(series.dates)}
        missing = [d for d in panel.dates if d not in pos]
        if missing:
            raise RangeMismatch(
                f"shock {name!r} covers {series.dates[0] if series.dates else None}.."
                f"{series.dates[-1] if series.dates else None}, panel needs "
                f"{panel.dates[0]}..{panel.dates[-1]}"
            )
        if len(series.dates) > len(panel.dates):
            log.info("shock %s truncated from %d to %d months to match the panel window",
                     name, len(series.dates), len(panel.dates))
        cols.append(np.array([series.values[pos[d]] for d in panel.dates]))
        for c in panel.countries:
            prov[f"{c}|{name}"] = {"source": name, "transform": LEVEL}
    if not cols:
        return panel
    n = len(panel.countries)
    sh = np.broadcast_to(np.stack(cols, axis=-1)[None], (n, len(panel.dates), len(cols)))
    data = np.concatenate([sh, panel.data], axis=2)
    prov.update(panel.provenance)
    return PanelDataset(panel.countries, tuple(shocks) + panel.variables, panel.dates, data,
                        (LEVEL,) * len(cols) + panel.transforms, len(cols), prov)


def align_shocks(shocks: Mapping[str, MonthlySeries], panel: PanelDataset) -> dict[str, PanelDataset]:
    """One dataset per shock variant, each with that shock as variable 1."""
    return {name: with_shocks(panel, {name: s}) for name, s in shocks.items()}


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".provenance.json")


def _panel_bytes(ds: PanelDataset) -> tuple[bytes, bytes]:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PANEL_HEADER)
    for i, c in enumerate(ds.countries):
        for j, v in enumerate(ds.variables):
            for t, d in enumerate(ds.dates):
                w.writerow([c, d.isoformat(), v, fmt(ds.data[i, t, j])])
    meta = {
        "countries": list(ds.countries),
        "variables": list(ds.variables),
        "transforms": list(ds.transforms),
        "transforms_applied": True,
        "n_shocks": ds.n_shocks,
        "frequency": ds.frequency,
        "start": ds.dates[0].isoformat() if ds.dates else None,
        "end": ds.dates[-1].isoformat() if ds.dates else None,
        "provenance": {k: dict(v) for k, v in sorted(ds.provenance.items())},
    }
    return buf.getvalue().encode(), (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode()


def emit_panel(ds: PanelDataset, path: str | Path) -> Path:
    """Write a dataset (values as stored) plus its provenance sidecar."""
    path = Path(path)
    body, meta = _panel_bytes(ds)
    path.write_bytes(body)
    _sidecar(path).write_bytes(meta)
    return path


def load_panel(path: str | Path) -> PanelDataset:
    """Inverse of :func:`emit_panel`."""
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ParseError(f"unreadable provenance sidecar: {exc}", str(_sidecar(path))) from exc
    raw = read_long([path])
    months = month_range(parse_month(meta["start"]), parse_month(meta["end"]))
    countries, variables = meta["countries"], meta["variables"]
    data = np.empty((len(countries), len(months), len(variables)))
    for i, c in enumerate(countries):
        for j, v in enumerate(variables):
            cell = raw.get((c, v), {})
            try:
                data[i, :, j] = [cell[m] for m in months]
            except KeyError as exc:
                raise MissingCoverage(c, v, [exc.args[0].strftime("%Y-%m")]) from None
    return PanelDataset(tuple(countries), tuple(variables), months, data, tuple(meta["transforms"]),
                        int(meta["n_shocks"]), meta["provenance"], meta.get("frequency", "monthly"))


def dataset_hash(ds: PanelDataset) -> str:
    body, meta = _panel_bytes(ds)
    return hashlib.sha256(body + b"\0" + meta).hexdigest()


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
