"""Input validation helpers shared across modules."""

from __future__ import annotations

from typing import Iterable

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class DomainError(ValueError):
    """Raised when a point lies outside the domain of a map."""


def as_finite_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"expected {ndim} dimensions, got {arr.ndim}", name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("contains non-finite entries", name)
    return arr


def check_interval(value: float, name: str, lo: float, hi: float,
                   lo_open: bool = True, hi_open: bool = True) -> float:
    v = float(value)
    ok_lo = v > lo if lo_open else v >= lo
    ok_hi = v < hi if hi_open else v <= hi
    if not (ok_lo and ok_hi and np.isfinite(v)):
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        raise ValidationError(f"value {v!r} not in {left}{lo}, {hi}{right}", name)
    return v


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < minimum:
        raise ValidationError(f"expected integer >= {minimum}, got {value!r}", name)
    return int(value)


def format_indices(indices: Iterable[tuple[int, ...]], limit: int = 8) -> str:
    items = [str(tuple(int(i) for i in idx)) for idx in indices]
    more = "" if len(items) <= limit else f" (+{len(items) - limit} more)"
    return ", ".join(items[:limit]) + more
