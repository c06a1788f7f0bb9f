"""Time integration.

Two arithmetic modes share one kick-drift-kick skeleton:

``fixpa``
    Positions and velocities of the state live as Q31.32 raws in ``int64``
    arrays. Every increment (``dt/2 * a`` and ``dt * u``) is computed in
    floating point from the decoded state, rounded once with the
    odd-symmetric :func:`~revsph.fixedpoint.encode_array` and added exactly.
    Negating the velocities then retraces the trajectory bit for bit.
``flopa``
    Plain ``float64`` state; the same steps, with ordinary round-off.

Two schemes:

``sym``
    Density is recomputed from positions every step, so acceleration is a
    pure function of positions and the scheme is symplectic.
``std``
    Density is an extra state variable advanced with the continuity
    equation, evaluated after the drift at the half-step velocity.

Only fluid particles move. Wall particles keep zero velocity; for dummy
walls the acceleration they would receive is discarded and its kinetic
value is booked in ``SimState.dissipated``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from . import fixedpoint as fx
from ._backend import get_backend
from .kernels import Kernel
from .neighbors import NeighborTable, neighbor_table
from .sphcore import (
    FLUID,
    WALL_DUMMY,
    WALL_LJ,
    DensityError,
    DiagnosticsRecord,
    FluidParams,
    ParticleSystem,
    compute_acceleration,
    compute_density,
    shepard_filter,
    standard_density_rate,
    total_energy,
)

log = logging.getLogger(__name__)

ARITHMETIC = ("fixpa", "flopa")
SCHEMES = ("sym", "std")


class IrreversibleConfigError(ValueError):
    """Reversal requested together with an operation that cannot be undone."""


class WatchdogTripped(RuntimeError):
    """Total energy left the allowed band; carries the state and records so far."""

    def __init__(self, message, state, records):
        super().__init__(message)
        self.state = state
        self.records = records


class StepError(RuntimeError):
    """A failure inside a step, tagged with the step index."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    arithmetic: str = "fixpa"
    scheme: str = "sym"
    density_mode: str = "offset"
    reverse_at: float | None = None
    active_filter_every: int | None = None
    end_time: float = 0.0
    watchdog_factor: float | None = 1e3

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("integrator dt must be positive and finite")
        if self.arithmetic not in ARITHMETIC:
            raise ValueError(f"arithmetic must be one of {ARITHMETIC}, not {self.arithmetic!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, not {self.scheme!r}")
        if self.density_mode not in ("raw", "offset"):
            raise ValueError("density_mode must be 'raw' or 'offset'")
        if self.active_filter_every is not None and self.active_filter_every < 1:
            raise ValueError("active_filter_every must be a positive step count")
        if self.end_time < 0:
            raise ValueError("end_time must be non-negative")
        if self.reverse_at is not None:
            steps_to(self.reverse_at, self.dt)
        if self.watchdog_factor is not None and not self.watchdog_factor > 1:
            raise ValueError("watchdog_factor must exceed 1")

    @property
    def reverse_step(self) -> int | None:
        return None if self.reverse_at is None else steps_to(self.reverse_at, self.dt)

    @property
    def total_steps(self) -> int:
        return steps_to(self.end_time, self.dt, exact=False)


def steps_to(t: float, dt: float, exact: bool = True) -> int:
    """Number of steps of size ``dt`` that reach time ``t``.

    With ``exact`` the time must be a whole multiple of ``dt`` (to 1e-9
    relative); otherwise the count is rounded.
    """
    if t < 0:
        raise ValueError(f"time {t} is negative")
    n = round(t / dt)
    if exact and abs(n * dt - t) > 1e-9 * max(abs(t), dt):
        raise ValueError(f"time {t} is not a whole multiple of dt = {dt}")
    return int(n)


@dataclass
class Physics:
    """Everything the right-hand side needs besides positions, velocities and density."""

    kernel: Kernel
    params: FluidParams
    mass: np.ndarray
    kind: np.ndarray
    offset: np.ndarray
    density_mode: str = "offset"
    anticlump: Kernel | None = None
    wall_model: str = "lj"
    workers: int = 1
    backend: object = None

    def __post_init__(self):
        self.mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        self.kind = np.ascontiguousarray(self.kind, dtype=np.int8)
        self.offset = np.ascontiguousarray(self.offset, dtype=np.float64)
        if self.backend is None or isinstance(self.backend, str):
            self.backend = get_backend(self.backend)
        self.fluid = self.kind == FLUID
        self.dummy = self.kind == WALL_DUMMY

    def system(self, pos, vel, rho=None) -> ParticleSystem:
        return ParticleSystem(pos, vel, self.mass, self.kind, self.offset, rho)

    def table(self, pos) -> NeighborTable:
        return neighbor_table(pos, self.kernel.h, self.workers, self.backend)

    def density(self, pos, table=None) -> np.ndarray:
        ps = self.system(pos, np.zeros_like(pos))
        table = self.table(pos) if table is None else table
        return compute_density(ps, self.kernel, self.density_mode, table, self.workers,
                               self.backend, self.params.rho0)

    def evaluate(self, pos, rho=None, table=None):
        """Acceleration at ``pos``. Returns ``(acc, rho, table)``.

        ``rho`` is recomputed from positions unless given (STD scheme).
        """
        table = self.table(pos) if table is None else table
        if rho is None:
            rho = self.density(pos, table)
        elif np.any(~(rho[self.kind != WALL_LJ] > 0)):
            a = int(np.flatnonzero(~(rho > 0) & (self.kind != WALL_LJ))[0])
            raise DensityError(f"non-positive density {rho[a]!r} at particle {a}")
        ps = self.system(pos, np.zeros_like(pos), rho)
        acc = compute_acceleration(ps, self.kernel, self.params, table, self.anticlump,
                                   self.workers, self.backend)
        return acc, rho, table

    def density_rate(self, pos, vel, table=None):
        table = self.table(pos) if table is None else table
        return standard_density_rate(self.system(pos, vel), self.kernel, table,
                                     self.workers, self.backend)

    def diagnostics(self, pos, vel, rho, table, t, dissipated) -> DiagnosticsRecord:
        ps = self.system(pos, vel, rho)
        return total_energy(ps, self.kernel, self.params, self.wall_model, table, t,
                            dissipated, self.workers, self.backend)

    @property
    def has_dummy_walls(self) -> bool:
        return bool(np.any(self.dummy))


@dataclass
class SimState:
    """Integrator state.

    ``r`` and ``u`` are ``int64`` raws in fixpa mode and ``float64`` in flopa
    mode. ``acc``, ``rho`` and ``table`` belong to the current positions.
    ``step`` counts steps since the start or the last reversal; ``time``
    is ``total_steps * dt`` and never decreases.
    """

    arithmetic: str
    r: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    acc: np.ndarray | None = None
    table: NeighborTable | None = None
    step: int = 0
    total_steps: int = 0
    time: float = 0.0
    dissipated: float = 0.0
    reversed: bool = False

    @property
    def positions(self) -> np.ndarray:
        return fx.decode_array(self.r) if self.arithmetic == "fixpa" else self.r

    @property
    def velocities(self) -> np.ndarray:
        return fx.decode_array(self.u) if self.arithmetic == "fixpa" else self.u

    def copy(self) -> "SimState":
        return replace(self, r=self.r.copy(), u=self.u.copy(), rho=self.rho.copy(),
                       acc=None if self.acc is None else self.acc.copy())


def init_state(pos, vel, physics: Physics, cfg: IntegratorConfig) -> SimState:
    """Build the state at t = 0 (encodes in fixpa mode) and evaluate the first force."""
    if physics.density_mode != cfg.density_mode:
        raise ValueError(f"physics uses density mode {physics.density_mode!r} "
                         f"but the integrator is configured for {cfg.density_mode!r}")
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 2)
    vel = np.asarray(vel, dtype=np.float64).reshape(-1, 2).copy()
    vel[~physics.fluid] = 0.0
    if cfg.arithmetic == "fixpa":
        r, u = fx.encode_array(pos), fx.encode_array(vel)
        p = fx.decode_array(r)
    else:
        r, u = pos.copy(), vel
        p = r
    rho = physics.density(p)
    s = SimState(cfg.arithmetic, r, u, rho)
    refresh(s, physics, cfg)
    return s


def refresh(s: SimState, physics: Physics, cfg: IntegratorConfig) -> None:
    """Recompute acceleration (and SYM density) at the current positions."""
    rho = s.rho if cfg.scheme == "std" else None
    s.acc, s.rho, s.table = physics.evaluate(s.positions, rho)


# ---------------------------------------------------------------------------
# state arithmetic
# ---------------------------------------------------------------------------

def _increment(s: SimState, x: np.ndarray) -> np.ndarray:
    return fx.encode_array(x) if s.arithmetic == "fixpa" else x


def _add_rows(s: SimState, target: np.ndarray, rows: np.ndarray, inc: np.ndarray) -> np.ndarray:
    out = target.copy()
    if s.arithmetic == "fixpa":
        out[rows] = fx.add_array(target[rows], inc)
    else:
        out[rows] = target[rows] + inc
    return out


def _kick(s: SimState, u, acc, dt, physics: Physics):
    fl = physics.fluid
    inc = _increment(s, (0.5 * dt) * acc[fl])
    if physics.has_dummy_walls:
        w = physics.dummy
        du = (0.5 * dt) * acc[w]
        s.dissipated += fx.ordered_sum(0.5 * physics.mass[w] * (du[:, 0] * du[:, 0] + du[:, 1] * du[:, 1]))
    return _add_rows(s, u, fl, inc)


def _drift(s: SimState, r, u_half, dt, physics: Physics):
    fl = physics.fluid
    uh = fx.decode_array(u_half[fl]) if s.arithmetic == "fixpa" else u_half[fl]
    return _add_rows(s, r, fl, _increment(s, dt * uh))


def _decode(s: SimState, x):
    return fx.decode_array(x) if s.arithmetic == "fixpa" else x


def verlet_step(s: SimState, cfg: IntegratorConfig, physics: Physics) -> SimState:
    """One SYM kick-drift-kick step; reuses ``s.acc`` as the first kick."""
    if s.acc is None:
        refresh(s, physics, cfg)
    dt = cfg.dt
    out = replace(s)
    u_half = _kick(out, s.u, s.acc, dt, physics)
    out.r = _drift(out, s.r, u_half, dt, physics)
    try:
        out.acc, out.rho, out.table = physics.evaluate(out.positions)
    except Exception as exc:
        raise StepError(f"step {s.total_steps + 1}: {exc}") from exc
    out.u = _kick(out, u_half, out.acc, dt, physics)
    _advance(out, cfg)
    return out


def std_step(s: SimState, cfg: IntegratorConfig, physics: Physics) -> SimState:
    """One STD step: density is state, advanced by the continuity equation.

    After the drift the density rate is evaluated at the new positions with
    the half-step velocity, ``rho += dt * D(r_{m+1}, u_{m+1/2})``, and the
    second kick uses that density.
    """
    if s.acc is None:
        refresh(s, physics, cfg)
    dt = cfg.dt
    out = replace(s)
    u_half = _kick(out, s.u, s.acc, dt, physics)
    out.r = _drift(out, s.r, u_half, dt, physics)
    try:
        p1 = out.positions
        table = physics.table(p1)
        rate = physics.density_rate(p1, _decode(out, u_half), table)
        lj = physics.kind == WALL_LJ
        rho = s.rho + dt * rate
        rho[lj] = s.rho[lj]
        out.acc, out.rho, out.table = physics.evaluate(p1, rho, table)
    except Exception as exc:
        raise StepError(f"step {s.total_steps + 1}: {exc}") from exc
    out.u = _kick(out, u_half, out.acc, dt, physics)
    _advance(out, cfg)
    return out


def _advance(s: SimState, cfg: IntegratorConfig) -> None:
    s.step += 1
    s.total_steps += 1
    s.time = s.total_steps * cfg.dt


def reverse_velocities(s: SimState) -> SimState:
    """Negate all velocities exactly and reset the step counter."""
    u = fx.negate_array(s.u) if s.arithmetic == "fixpa" else -s.u
    return replace(s, u=u, step=0, reversed=not s.reversed)


def apply_active_filter(s: SimState, cfg: IntegratorConfig, physics: Physics) -> SimState:
    """Replace fluid velocities by their Shepard average (irreversible)."""
    ps = physics.system(s.positions, s.velocities, s.rho)
    filtered = shepard_filter(ps, physics.kernel, s.table, physics.workers, physics.backend)
    u = fx.encode_array(filtered) if s.arithmetic == "fixpa" else filtered
    return replace(s, u=u)


def step(s: SimState, cfg: IntegratorConfig, physics: Physics) -> SimState:
    return std_step(s, cfg, physics) if cfg.scheme == "std" else verlet_step(s, cfg, physics)


def diagnostics(s: SimState, physics: Physics) -> DiagnosticsRecord:
    return physics.diagnostics(s.positions, s.velocities, s.rho, s.table, s.time, s.dissipated)


def irreversible_reasons(cfg: IntegratorConfig, physics: Physics) -> list[str]:
    out = []
    if cfg.active_filter_every:
        out.append("active Shepard filter")
    if physics.has_dummy_walls:
        out.append("dummy-wall velocity clamping")
    if cfg.scheme == "std" and cfg.arithmetic == "fixpa":
        out.append("floating-point density state of the std scheme")
    return out


Hook = Callable[[SimState, DiagnosticsRecord], None]


def run(s: SimState, cfg: IntegratorConfig, physics: Physics, hooks: Iterable[Hook] = (),
        output_every: int = 50, steps: int | None = None, force: bool = False):
    """Advance ``s`` by ``steps`` (default: up to ``cfg.end_time``).

    Hooks get ``(state, record)`` at start, every ``output_every`` steps, at
    reversal and at the end. Returns ``(state, records)``.
    """
    if output_every < 1:
        raise ValueError("output_every must be >= 1")
    rev = cfg.reverse_step
    if rev is not None:
        why = irreversible_reasons(cfg, physics)
        if why and not force:
            raise IrreversibleConfigError(
                "reversal requested with irreversible operations: " + ", ".join(why)
                + " (pass force=True to run anyway)")
    n = cfg.total_steps - s.total_steps if steps is None else steps
    if n < 0:
        raise ValueError("state is already past the end time")
    hooks = list(hooks)
    records: list[DiagnosticsRecord] = []
    if s.acc is None:
        refresh(s, physics, cfg)

    def emit(state):
        rec = diagnostics(state, physics)
        records.append(rec)
        for h in hooks:
            h(state, rec)
        return rec

    e0 = emit(s).total
    watch = cfg.watchdog_factor
    for _ in range(n):
        s = step(s, cfg, physics)
        if cfg.active_filter_every and s.total_steps % cfg.active_filter_every == 0:
            s = apply_active_filter(s, cfg, physics)
        at_rev = rev is not None and not s.reversed and s.total_steps == rev
        if at_rev:
            s = reverse_velocities(s)
            refresh(s, physics, cfg)
        if s.total_steps % output_every == 0 or at_rev:
            rec = emit(s)
        elif watch is not None and cfg.scheme == "std":
            rec = diagnostics(s, physics)
        else:
            rec = None
        if watch is not None and rec is not None and not _within(rec.total, e0, watch):
            if records[-1] is not rec:
                records.append(rec)
            raise WatchdogTripped(
                f"total energy {rec.total:.6g} exceeds {watch:g} x initial {e0:.6g} "
                f"at t = {s.time:.6g} s", s, records)
    if records[-1].t != s.time:
        emit(s)
    return s, records


def _within(e, e0, factor) -> bool:
    if not math.isfinite(e):
        return False
    return abs(e) <= factor * abs(e0)
