"""Q31.32 fixed-point numbers for the reversible state.

A value is stored as a signed 64-bit integer ``raw`` with
``value = raw * 2**-32``. Addition of raws is exact and associative, which is
what makes a Verlet step undoable bit for bit. Conversion from floating point
rounds half to even, an odd-symmetric rule: ``encode(-x) == -encode(x)``.

Scalar values are the :class:`FixedValue` / :class:`FixedVector2` dataclasses.
Whole particle arrays go through :func:`encode_array`, :func:`decode_array`
and :func:`add_array`, which apply the same rules to ``int64`` numpy arrays.
"""

from __future__ import annotations

import functools
import math
import operator
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FRAC_BITS = 32
SCALE = float(2**FRAC_BITS)
INV_SCALE = 2.0**-FRAC_BITS
RAW_MIN = -(2**63)
RAW_MAX = 2**63 - 1
LIMIT = 2.0**31


class FixedPointError(ArithmeticError):
    """Overflow, non-finite input or a raw value outside the valid domain."""


def _check_raw(raw: int) -> int:
    # RAW_MIN is excluded so that negation is total.
    if not (RAW_MIN < raw <= RAW_MAX):
        raise FixedPointError(f"fixed-point overflow: raw value {raw} out of range")
    return raw


def _encode_raw(x: float) -> int:
    x = float(x)
    if not math.isfinite(x):
        raise FixedPointError(f"cannot encode non-finite value {x!r}")
    if abs(x) >= LIMIT:
        raise FixedPointError(f"fixed-point overflow: |{x!r}| >= 2**31")
    # Scaling by a power of two is exact; round() on a float is half-to-even.
    return int(round(x * SCALE))


@dataclass(frozen=True, order=True)
class FixedValue:
    raw: int

    def __post_init__(self):
        _check_raw(int(self.raw))

    @classmethod
    def from_float(cls, x: float) -> "FixedValue":
        return cls(_encode_raw(x))

    def to_float(self) -> float:
        return self.raw * INV_SCALE

    def __add__(self, other: "FixedValue") -> "FixedValue":
        return fixed_add(self, other)

    def __sub__(self, other: "FixedValue") -> "FixedValue":
        return fixed_add(self, -other)

    def __neg__(self) -> "FixedValue":
        return FixedValue(-self.raw)

    def __float__(self) -> float:
        return self.to_float()


@dataclass(frozen=True)
class FixedVector2:
    x: FixedValue
    y: FixedValue

    @classmethod
    def from_floats(cls, x: float, y: float) -> "FixedVector2":
        return cls(encode(x), encode(y))

    def to_floats(self) -> tuple[float, float]:
        return self.x.to_float(), self.y.to_float()

    def __add__(self, other: "FixedVector2") -> "FixedVector2":
        return FixedVector2(fixed_add(self.x, other.x), fixed_add(self.y, other.y))

    def __sub__(self, other: "FixedVector2") -> "FixedVector2":
        return self + (-other)

    def __neg__(self) -> "FixedVector2":
        return FixedVector2(-self.x, -self.y)


def encode(x: float) -> FixedValue:
    """Nearest Q31.32 value to ``x`` (ties to even)."""
    return FixedValue(_encode_raw(x))


def decode(v: FixedValue) -> float:
    return v.to_float()


def fixed_add(a: FixedValue, b: FixedValue) -> FixedValue:
    """Exact sum; raises :class:`FixedPointError` instead of wrapping."""
    return FixedValue(_check_raw(a.raw + b.raw))


def deterministic_sum(values: Iterable[float], indices: Sequence[int] | None = None) -> float:
    """Left-to-right float sum in ascending index order.

    If ``indices`` is given the terms are first put in ascending index order
    (stable), so the result depends only on the (index, value) pairs and not
    on the order they were supplied in.
    """
    values = list(values)
    if indices is not None:
        if len(indices) != len(values):
            raise ValueError("indices and values differ in length")
        order = sorted(range(len(values)), key=lambda k: indices[k])
        values = [values[k] for k in order]
    # functools.reduce keeps strict left-to-right order; builtin sum() may
    # compensate on newer Pythons.
    return functools.reduce(operator.add, (float(v) for v in values), 0.0)


# ---------------------------------------------------------------------------
# array versions used by the integrator
# ---------------------------------------------------------------------------

def encode_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise FixedPointError(f"cannot encode non-finite value at index {tuple(bad)}")
    big = np.abs(x) >= LIMIT
    if np.any(big):
        bad = np.argwhere(big)[0]
        raise FixedPointError(f"fixed-point overflow at index {tuple(bad)}: {x[tuple(bad)]!r}")
    return np.rint(x * SCALE).astype(np.int64)


def decode_array(raw: np.ndarray) -> np.ndarray:
    return np.asarray(raw, dtype=np.int64) * INV_SCALE


def add_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise exact raw addition with overflow detection."""
    with np.errstate(over="ignore"):
        out = a + b
    # Two's-complement overflow flips the sign relative to equal-signed inputs.
    wrapped = ((a >= 0) == (b >= 0)) & ((out >= 0) != (a >= 0))
    if np.any(wrapped) or np.any(out == np.iinfo(np.int64).min):
        raise FixedPointError("fixed-point overflow in state update")
    return out


def negate_array(raw: np.ndarray) -> np.ndarray:
    if np.any(raw == np.iinfo(np.int64).min):
        raise FixedPointError("cannot negate the minimum raw value")
    return -raw


def ordered_sum(values) -> float:
    """Left-to-right sum of a 1D array (``np.sum`` would sum pairwise)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return 0.0
    return float(np.add.accumulate(values)[-1])
