from __future__ import annotations

import datetime as dt


def month_start(d: dt.date) -> dt.date:
    return dt.date(d.year, d.month, 1)


def parse_month(text: str) -> dt.date:
    """Parse ``YYYY-MM`` or ``YYYY-MM-DD`` and normalise to the first of the month."""
    text = text.strip()
    if len(text) == 7:
        text += "-01"
    return month_start(dt.date.fromisoformat(text))


def add_months(d: dt.date, k: int) -> dt.date:
    idx = d.year * 12 + (d.month - 1) + k
    return dt.date(idx // 12, idx % 12 + 1, 1)


def month_index(d: dt.date) -> int:
    return d.year * 12 + (d.month - 1)


def month_range(start: dt.date, end: dt.date) -> tuple[dt.date, ...]:
    """Inclusive range of first-of-month dates from ``start`` to ``end``."""
    a, b = month_index(month_start(start)), month_index(month_start(end))
    if b < a:
        return ()
    return tuple(add_months(month_start(start), k) for k in range(b - a + 1))
