"""Speed histograms, reduced Boltzmann entropy and the 2D Maxwell-Boltzmann law.

Units: ``k_B = 1`` and ``m`` is the mass of one particle, so temperatures
are the "effective" temperature of the particle motion.

The equilibrium speed density used here is

    f(v) = (m/T) v exp(-m v^2 / (2 T)),

which integrates to one and whose mean kinetic energy per particle is ``T``.
The reduced entropy of a speed density is ``-int f ln(f/v) dv``; for the
density above it equals ``1 + ln(T/m)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import ordered_sum


@dataclass(frozen=True)
class VelocityHistogram:
    edges: np.ndarray
    counts: np.ndarray
    n: int
    mass: float
    degenerate: bool = False

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> np.ndarray:
        """Normalised density estimate ``count / (N dv)`` per bin."""
        if self.n == 0:
            return np.zeros_like(self.widths)
        return self.counts / (self.n * self.widths)


@dataclass
class EntropySeries:
    times: list[float] = field(default_factory=list)
    reduced: list[float | None] = field(default_factory=list)
    temperature: list[float] = field(default_factory=list)
    eq_from_t: list[float | None] = field(default_factory=list)
    eq_from_e: list[float | None] = field(default_factory=list)

    def append(self, t, speeds, mass, bins=50):
        h = build_histogram(speeds, bins, mass)
        temp = fit_temperature(speeds, mass)
        self.times.append(float(t))
        self.reduced.append(reduced_entropy(h))
        self.temperature.append(temp)
        self.eq_from_t.append(equilibrium_entropy_from_temperature(temp, mass))
        e = ordered_sum(0.5 * mass * np.asarray(speeds, dtype=np.float64) ** 2)
        self.eq_from_e.append(equilibrium_entropy_from_energy(e, len(speeds), mass))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "s_reduced", "t_fit", "s_eq_t", "s_eq_e"])
        for row in zip(self.times, self.reduced, self.temperature, self.eq_from_t, self.eq_from_e):
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def build_histogram(speeds, bins: int = 50, mass: float = 1.0) -> VelocityHistogram:
    """Uniform bins on ``[0, max speed]``.

    If every speed is zero the histogram is flagged ``degenerate`` (one bin
    of unit width holding everything) and has no entropy.
    """
    v = np.asarray(speeds, dtype=np.float64).ravel()
    if bins < 2:
        raise ValueError("need at least two bins")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("speeds must be finite and non-negative")
    vmax = float(v.max()) if v.size else 0.0
    if vmax == 0.0:
        return VelocityHistogram(np.array([0.0, 1.0]), np.array([v.size]), int(v.size),
                                 float(mass), degenerate=True)
    edges = np.linspace(0.0, vmax, bins + 1)
    counts, _ = np.histogram(v, bins=edges)
    return VelocityHistogram(edges, counts.astype(np.int64), int(v.size), float(mass))


def reduced_entropy(h: VelocityHistogram) -> float | None:
    """Midpoint rule for ``-int f ln(f/v) dv`` over non-empty bins.

    Returns ``None`` for a degenerate histogram or when no non-empty bin
    lies beyond the first one.
    """
    if h.degenerate or not np.any(h.counts[1:] > 0):
        return None
    return entropy_of_density(h.centers, h.density, h.widths)


def entropy_of_density(v, f, dv) -> float:
    """``-sum f ln(f/v) dv`` over entries with ``f > 0`` (``0 ln 0 = 0``)."""
    v = np.asarray(v, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    dv = np.broadcast_to(np.asarray(dv, dtype=np.float64), f.shape)
    nz = f > 0
    return -ordered_sum(f[nz] * np.log(f[nz] / v[nz]) * dv[nz])


def fit_temperature(speeds, mass: float) -> float:
    """Moment fit ``T = sum(m v^2/2) / N`` (exact for the 2D law)."""
    v = np.asarray(speeds, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("need at least one speed")
    return ordered_sum(0.5 * mass * v * v) / v.size


def mb_density(v, temperature: float, mass: float):
    """Equilibrium speed density ``(m/T) v exp(-m v^2/(2T))``."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    v = np.asarray(v, dtype=np.float64)
    a = mass / temperature
    return a * v * np.exp(-0.5 * a * v * v)


def mb_sample(n: int, temperature: float, mass: float, rng: np.random.Generator) -> np.ndarray:
    """Speeds drawn from the 2D law by inverting its CDF ``1 - exp(-m v^2/(2T))``."""
    u = rng.random(n)
    return np.sqrt(-2.0 * temperature / mass * np.log1p(-u))


def equilibrium_entropy_from_temperature(temperature: float, mass: float) -> float | None:
    if not temperature > 0:
        return None
    return 1.0 + math.log(temperature / mass)


def equilibrium_entropy_from_energy(energy: float, n: int, mass: float) -> float | None:
    """``1 + ln(E/(N m))``; ``None`` for ``E <= 0``."""
    if not energy > 0 or n <= 0:
        return None
    return 1.0 + math.log(energy / (n * mass))


def chi_square(h: VelocityHistogram, temperature: float) -> tuple[float, int]:
    """Pearson statistic of the histogram against the fitted law.

    Expected counts use the exact CDF per bin; bins expecting fewer than 5
    counts are pooled into their neighbour. Returns ``(chi2, dof)``.
    """
    if h.degenerate or not temperature > 0:
        return float("nan"), 0
    a = h.mass / temperature
    cdf = 1.0 - np.exp(-0.5 * a * h.edges * h.edges)
    cdf[-1] = 1.0  # fold the tail into the last bin
    expected = h.n * np.diff(cdf)
    obs, exp_ = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(h.counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            obs.append(acc_o)
            exp_.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and exp_:
        obs[-1] += acc_o
        exp_[-1] += acc_e
    if len(exp_) < 2:
        return float("nan"), 0
    obs, exp_ = np.array(obs), np.array(exp_)
    return float(np.sum((obs - exp_) ** 2 / exp_)), len(exp_) - 2


def histogram_csv(h: VelocityHistogram, temperature: float | None = None) -> str:
    """Columns ``v_lo, v_hi, v_mid, count, f_hist, f_mb`` for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["v_lo", "v_hi", "v_mid", "count", "f_hist", "f_mb"])
    fmb = (mb_density(h.centers, temperature, h.mass)
           if temperature is not None and temperature > 0 else None)
    for k in range(len(h.counts)):
        w.writerow([repr(float(h.edges[k])), repr(float(h.edges[k + 1])), repr(float(h.centers[k])),
                    int(h.counts[k]), repr(float(h.density[k])),
                    "" if fmb is None else repr(float(fmb[k]))])
    return buf.getvalue()
