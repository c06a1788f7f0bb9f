"""Right-hand side of weakly compressible SPH with a closed-form density.

Sign conventions used throughout: ``e_ab = (r_a - r_b)/|r_a - r_b|`` and
``w' <= 0``, so the pressure acceleration

    a_a = -sum_b m_b (p_a/rho_a^2 + p_b/rho_b^2) w'(r_ab) e_ab - g y_hat

pushes compressed particles apart, and ``-dH/dr_a / m_a`` of the energy in
:func:`total_energy` reproduces it exactly (``d eps/d rho = p/rho^2``).

Particle kinds share one index space:

``FLUID``       moves, has density and pressure;
``WALL_DUMMY``  fixed, enters density and pressure sums like fluid;
``WALL_LJ``     fixed, acts only through the repulsive Lennard-Jones wall
                force and is excluded from density.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import get_backend
from .fixedpoint import ordered_sum
from .kernels import Kernel
from .neighbors import NeighborTable, neighbor_table

FLUID = 0
WALL_DUMMY = 1
WALL_LJ = 2

KIND_NAMES = {"fluid": FLUID, "wall_dummy": WALL_DUMMY, "wall_lj": WALL_LJ}


class DensityError(FloatingPointError):
    """Non-positive density; the particle id is in the message."""


class WallPenetrationError(FloatingPointError):
    """A fluid particle sits exactly on a Lennard-Jones wall particle."""


@dataclass(frozen=True)
class FluidParams:
    rho0: float = 1000.0
    c: float = 120.0
    g: float = 9.8
    e_wall: float = 0.0
    r_wall: float = 1.0
    p0: float = 0.0

    def __post_init__(self):
        checks = [
            (self.rho0 > 0, "rho0 > 0"),
            (self.c > 0, "c > 0"),
            (self.g >= 0, "g >= 0"),
            (self.e_wall >= 0, "e_wall >= 0"),
            (self.r_wall > 0, "r_wall > 0"),
            (self.p0 >= 0, "p0 >= 0"),
        ]
        for ok, what in checks:
            if not ok:
                raise ValueError(f"invalid fluid parameters: need {what}")


@dataclass
class ParticleSystem:
    pos: np.ndarray
    vel: np.ndarray
    mass: np.ndarray
    kind: np.ndarray
    offset: np.ndarray = None
    rho: np.ndarray = None

    def __post_init__(self):
        n = len(self.mass)
        self.pos = np.ascontiguousarray(self.pos, dtype=np.float64).reshape(n, 2)
        self.vel = np.ascontiguousarray(self.vel, dtype=np.float64).reshape(n, 2)
        self.mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        self.kind = np.ascontiguousarray(self.kind, dtype=np.int8)
        if self.offset is None:
            self.offset = np.zeros(n)
        if self.rho is None:
            self.rho = np.zeros(n)

    @property
    def n(self) -> int:
        return len(self.mass)

    @property
    def fluid(self) -> np.ndarray:
        return self.kind == FLUID

    @property
    def contrib(self) -> np.ndarray:
        """int8 mask of particles entering density and pressure sums."""
        return (self.kind != WALL_LJ).astype(np.int8)

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(self.pos.copy(), self.vel.copy(), self.mass.copy(),
                              self.kind.copy(), self.offset.copy(), self.rho.copy())


@dataclass
class DiagnosticsRecord:
    t: float
    kinetic: float
    internal: float
    gravitational: float
    wall: float
    total: float
    momentum: tuple[float, float]
    angular_momentum: float
    rho_min: float
    rho_max: float
    dissipated: float = 0.0
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# scalar physics
# ---------------------------------------------------------------------------

def _pow7(x):
    x2 = x * x
    x4 = x2 * x2
    return x4 * x2 * x


def eos_pressure(rho, p: FluidParams):
    """``(c^2 rho0/7) ((rho/rho0)^7 - 1)``."""
    x = np.asarray(rho, dtype=np.float64) / p.rho0
    out = (p.c * p.c * p.rho0 / 7.0) * (_pow7(x) - 1.0)
    return float(out) if out.ndim == 0 else out


def internal_energy_density(rho, p: FluidParams):
    """Specific internal energy ``(c^2/42) ((rho/rho0)^6 + 6 rho0/rho)`` (J/kg)."""
    rho = np.asarray(rho, dtype=np.float64)
    x = rho / p.rho0
    x2 = x * x
    out = (p.c * p.c / 42.0) * (x2 * x2 * x2 + 6.0 * p.rho0 / rho)
    return float(out) if out.ndim == 0 else out


def lj_wall_force(r, p: FluidParams):
    """Outward force magnitude on a fluid particle at distance ``r`` from a wall particle.

    Positive values push the fluid particle away from the wall; zero for
    ``r >= r_wall``.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise WallPenetrationError("fluid particle at zero distance from a wall particle")
    s = np.maximum(p.r_wall / r, 1.0)
    s2 = s * s
    out = p.e_wall / r * (s2 * (s2 - 1.0))
    return float(out) if out.ndim == 0 else out


def lj_wall_potential(r, p: FluidParams):
    """``E_wall (s^4/4 - s^2/2 + 1/4)``: zero at ``r >= r_wall``, and ``-dPhi/dr`` is :func:`lj_wall_force`."""
    r = np.asarray(r, dtype=np.float64)
    s = np.maximum(p.r_wall / r, 1.0)
    s2 = s * s
    out = p.e_wall * (0.25 * s2 * s2 - 0.5 * s2 + 0.25)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# particle sums
# ---------------------------------------------------------------------------

def _table(ps, k, table, workers, backend):
    if table is None:
        table = neighbor_table(ps.pos, k.h, workers=workers, backend=backend)
    return table


def raw_density(ps: ParticleSystem, k: Kernel, table: NeighborTable | None = None,
                workers: int = 1, backend=None) -> np.ndarray:
    be = get_backend(backend) if backend is None or isinstance(backend, str) else backend
    table = _table(ps, k, table, workers, be)
    return be.density_sum(ps.pos, ps.mass, ps.contrib, table.offsets, table.indices,
                          k.family_id, k.h, k.wnorm, workers)


def compute_density(ps: ParticleSystem, k: Kernel, mode: str = "offset",
                    table: NeighborTable | None = None, workers: int = 1, backend=None,
                    rho0: float | None = None) -> np.ndarray:
    """Summed density, plus the per-particle offset ``C_a`` in ``offset`` mode.

    LJ wall particles have no density; their entries are set to ``rho0``
    (or 1.0) so that downstream divisions stay finite. Raises
    :class:`DensityError` on a non-positive density.
    """
    if mode not in ("raw", "offset"):
        raise ValueError(f"density mode must be 'raw' or 'offset', not {mode!r}")
    rho = raw_density(ps, k, table, workers, backend)
    if mode == "offset":
        rho = rho + ps.offset
    lj = ps.kind == WALL_LJ
    rho[lj] = 1.0 if rho0 is None else rho0
    bad = np.flatnonzero(~(rho > 0))
    if bad.size:
        a = int(bad[0])
        raise DensityError(f"non-positive density {rho[a]!r} at particle {a}")
    return rho


def initial_offsets(ps: ParticleSystem, k: Kernel, rho0: float, workers: int = 1,
                    backend=None) -> np.ndarray:
    """``C_a = rho0 - rho_a(t=0)`` for fluid and dummy particles, 0 for LJ walls."""
    raw = raw_density(ps, k, None, workers, backend)
    c = rho0 - raw
    c[ps.kind == WALL_LJ] = 0.0
    return c


def compute_acceleration(ps: ParticleSystem, k: Kernel, p: FluidParams,
                         table: NeighborTable | None = None, anticlump: Kernel | None = None,
                         workers: int = 1, backend=None, return_info: bool = False):
    """Acceleration of every particle from the current ``ps.rho``.

    Fluid rows carry pressure, anti-clump (when ``p0 > 0`` and an anti-clump
    kernel is given), LJ wall and gravity terms. Dummy-wall rows carry the
    pressure reaction the wall would feel (used to book the energy the wall
    swallows); LJ rows are zero.
    """
    be = get_backend(backend) if backend is None or isinstance(backend, str) else backend
    table = _table(ps, k, table, workers, be)
    rho = ps.rho
    pres = eos_pressure(rho, p)
    pres = np.where(ps.kind == WALL_LJ, 0.0, pres)
    pr = pres / (rho * rho)
    use_ac = anticlump is not None and p.p0 > 0
    pc = p.p0 / (rho * rho) if use_ac else pr
    ac_h = anticlump.h if use_ac else 0.0
    ac_dn = anticlump.dnorm if use_ac else 0.0
    acc, coincident, hits = be.acceleration(
        ps.pos, ps.mass, pr, ps.kind, table.offsets, table.indices,
        k.family_id, k.h, k.dnorm, p.e_wall, p.r_wall, pc, ac_h, ac_dn, workers)
    if hits:
        raise WallPenetrationError(f"{hits} fluid particle(s) coincide with LJ wall particles")
    fl = ps.kind == FLUID
    acc[fl, 1] = acc[fl, 1] - p.g
    if return_info:
        return acc, {"coincident_pairs": coincident, "table": table}
    return acc


def standard_density_rate(ps: ParticleSystem, k: Kernel, table: NeighborTable | None = None,
                          workers: int = 1, backend=None) -> np.ndarray:
    """Continuity right-hand side ``sum_b m_b (u_a - u_b) . e_ab w'(r_ab)``."""
    be = get_backend(backend) if backend is None or isinstance(backend, str) else backend
    table = _table(ps, k, table, workers, be)
    return be.density_rate(ps.pos, ps.vel, ps.mass, ps.contrib, table.offsets, table.indices,
                           k.family_id, k.h, k.dnorm, workers)


def shepard_filter(ps: ParticleSystem, k: Kernel, table: NeighborTable | None = None,
                   workers: int = 1, backend=None) -> np.ndarray:
    """Shepard-filtered velocities of fluid particles (walls keep theirs).

    ``ps`` is not modified; particles with ``gamma = 0`` pass through.
    """
    be = get_backend(backend) if backend is None or isinstance(backend, str) else backend
    table = _table(ps, k, table, workers, be)
    vol = ps.mass / ps.rho
    vol = np.where(ps.kind == WALL_LJ, 0.0, vol)
    nx, ny, gamma = be.shepard(ps.pos, ps.vel, vol, ps.contrib, table.offsets, table.indices,
                               k.family_id, k.h, k.wnorm, workers)
    out = ps.vel.copy()
    ok = ps.fluid & (gamma > 0)
    out[ok, 0] = nx[ok] / gamma[ok]
    out[ok, 1] = ny[ok] / gamma[ok]
    return out


def shepard_gamma(ps: ParticleSystem, k: Kernel, table: NeighborTable | None = None,
                  workers: int = 1, backend=None) -> np.ndarray:
    be = get_backend(backend) if backend is None or isinstance(backend, str) else backend
    table = _table(ps, k, table, workers, be)
    vol = np.where(ps.kind == WALL_LJ, 0.0, ps.mass / ps.rho)
    return be.shepard(ps.pos, ps.vel, vol, ps.contrib, table.offsets, table.indices,
                      k.family_id, k.h, k.wnorm, workers)[2]


# ---------------------------------------------------------------------------
# conserved quantities
# ---------------------------------------------------------------------------

def lj_wall_energy(ps: ParticleSystem, p: FluidParams, table: NeighborTable) -> float:
    if p.e_wall == 0 or not np.any(ps.kind == WALL_LJ):
        return 0.0
    ii = np.repeat(np.arange(ps.n), np.diff(table.offsets))
    jj = table.indices
    sel = (ps.kind[ii] == FLUID) & (ps.kind[jj] == WALL_LJ)
    ii, jj = ii[sel], jj[sel]
    d = ps.pos[ii] - ps.pos[jj]
    r = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    r = r[r < p.r_wall]
    if r.size == 0:
        return 0.0
    return ordered_sum(lj_wall_potential(r, p))


def total_energy(ps: ParticleSystem, k: Kernel, p: FluidParams, wall_model: str = "lj",
                 table: NeighborTable | None = None, t: float = 0.0, dissipated: float = 0.0,
                 workers: int = 1, backend=None) -> DiagnosticsRecord:
    """Energy budget, momentum and angular momentum of the fluid.

    Uses the current ``ps.rho``. The LJ term is included only for
    ``wall_model == "lj"``.
    """
    fl = ps.fluid
    m = ps.mass[fl]
    v = ps.vel[fl]
    r = ps.pos[fl]
    rho = ps.rho[fl]
    kinetic = ordered_sum(0.5 * m * (v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1]))
    internal = ordered_sum(m * internal_energy_density(rho, p)) if m.size else 0.0
    grav = ordered_sum(m * p.g * r[:, 1])
    wall = 0.0
    if wall_model == "lj":
        table = _table(ps, k, table, workers, backend)
        wall = lj_wall_energy(ps, p, table)
    mom = (ordered_sum(m * v[:, 0]), ordered_sum(m * v[:, 1]))
    ang = ordered_sum(m * (r[:, 0] * v[:, 1] - r[:, 1] * v[:, 0]))
    total = kinetic + internal + grav + wall
    return DiagnosticsRecord(
        t=t, kinetic=kinetic, internal=internal, gravitational=grav, wall=wall, total=total,
        momentum=mom, angular_momentum=ang,
        rho_min=float(rho.min()) if rho.size else float("nan"),
        rho_max=float(rho.max()) if rho.size else float("nan"),
        dissipated=dissipated,
    )


def with_density(ps: ParticleSystem, rho: np.ndarray) -> ParticleSystem:
    return replace(ps, rho=rho)
