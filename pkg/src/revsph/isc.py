"""Initial state correction.

Newton iteration that moves fluid particles until the summed density equals
``rho0`` at every fluid particle. Each step solves the saddle-point system

    [ I          (1/rho) G ] [dx ]   [ 0          ]
    [ -rho D       0       ] [phi] = [ rho0 - rho ]

for a displacement ``dx`` restricted to the discrete gradient of a scalar
``phi``. The system is never assembled: GMRES runs on the block operator,
right-preconditioned by the block upper-triangular factor whose Schur block
is assembled sparsely and LU-factorised. With that preconditioner GMRES
typically needs a single iteration per Newton step. A step that would raise
the residual 2-norm is halved up to six times before it is taken anyway.

Wall particles (dummy or any kind listed as fixed) contribute to the sums
but are not moved and carry no density constraint. By default every movable
particle is also constrained; a ``constrained`` mask that leaves some movable
particles free makes each step the least-norm move fixing the rest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from ._backend import get_backend
from .kernels import Kernel, dw_array
from .neighbors import NeighborTable, neighbor_table

log = logging.getLogger(__name__)


class IscError(RuntimeError):
    def __init__(self, message: str, report: "IscReport"):
        super().__init__(message)
        self.report = report


@dataclass
class IscProblem:
    positions: np.ndarray
    masses: np.ndarray
    kernel: Kernel
    rho0: float
    dr: float
    movable: np.ndarray | None = None
    constrained: np.ndarray | None = None
    contrib: np.ndarray | None = None
    noise: float | None = None
    max_iter: int = 30
    tol: float = 1e-10
    lin_tol: float = 1e-12
    seed: int = 0
    max_step: float = 0.25
    workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.masses = np.ascontiguousarray(self.masses, dtype=np.float64)
        n = len(self.masses)
        if self.movable is None:
            self.movable = np.ones(n, dtype=bool)
        self.movable = np.asarray(self.movable, dtype=bool)
        if self.constrained is None:
            self.constrained = self.movable.copy()
        self.constrained = np.asarray(self.constrained, dtype=bool)
        if not self.constrained.any():
            raise ValueError("ISC needs at least one constrained particle")
        if self.contrib is None:
            self.contrib = np.ones(n, dtype=np.int8)
        self.contrib = np.asarray(self.contrib, dtype=np.int8)
        if self.noise is None:
            self.noise = self.dr / 10.0
        if not (self.tol > 0 and self.lin_tol > 0):
            raise ValueError("ISC tolerances must be positive")
        if not (0 <= self.noise < self.dr):
            raise ValueError("ISC noise amplitude must lie in [0, dr)")
        if n < 2:
            raise ValueError("ISC needs at least two particles")


@dataclass
class IscReport:
    iterations: int = 0
    errors: list[float] = field(default_factory=list)
    converged: bool = False
    displacements: np.ndarray | None = None
    residual_norms: list[float] = field(default_factory=list)
    linear_residuals: list[float] = field(default_factory=list)
    krylov_iterations: list[int] = field(default_factory=list)


def _be(backend):
    return get_backend(backend) if backend is None or isinstance(backend, str) else backend


def apply_div(positions, rho, masses, k: Kernel, field_, contrib=None,
              table: NeighborTable | None = None, workers=1, backend=None) -> np.ndarray:
    """Discrete divergence ``-(1/rho_a) sum_b m_b (dx_a - dx_b) . w'(r_ab) e_ab``."""
    be = _be(backend)
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    if table is None:
        table = neighbor_table(pos, k.h, workers, be)
    if contrib is None:
        contrib = np.ones(len(pos), dtype=np.int8)
    f = np.ascontiguousarray(field_, dtype=np.float64).reshape(-1, 2)
    return be.isc_div(pos, np.ascontiguousarray(masses, dtype=np.float64),
                      np.ascontiguousarray(rho, dtype=np.float64), f,
                      np.asarray(contrib, dtype=np.int8), table.offsets, table.indices,
                      k.family_id, k.h, k.dnorm, workers)


def apply_grad(positions, rho, masses, k: Kernel, phi, contrib=None,
               table: NeighborTable | None = None, workers=1, backend=None) -> np.ndarray:
    """Discrete gradient ``rho_a sum_b m_b (phi_a/rho_a^2 + phi_b/rho_b^2) w'(r_ab) e_ab``."""
    be = _be(backend)
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    if table is None:
        table = neighbor_table(pos, k.h, workers, be)
    if contrib is None:
        contrib = np.ones(len(pos), dtype=np.int8)
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    q = np.ascontiguousarray(phi, dtype=np.float64) / (rho * rho)
    return be.isc_grad(pos, np.ascontiguousarray(masses, dtype=np.float64), rho, q,
                       np.asarray(contrib, dtype=np.int8), table.offsets, table.indices,
                       k.family_id, k.h, k.dnorm, workers)


def _pair_terms(pos, masses, k, contrib, table):
    n = len(pos)
    ii = np.repeat(np.arange(n), np.diff(table.offsets))
    jj = table.indices
    keep = (ii != jj) & (contrib[jj] != 0)
    ii, jj = ii[keep], jj[keep]
    d = pos[ii] - pos[jj]
    r = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    ok = r > 0
    ii, jj, d, r = ii[ok], jj[ok], d[ok], r[ok]
    g = masses[jj] * dw_array(k.family_id, k.h, k.dnorm, r)
    return ii, jj, g * d[:, 0] / r, g * d[:, 1] / r


def schur_matrix(pos, rho, masses, k, contrib, movable, table, constrained=None) -> sp.csc_matrix:
    """Sparse ``rho D (1/rho) G`` from constrained densities to constrained potentials.

    This is the Schur complement of the identity block. It couples
    second neighbours, which is why the Newton system itself is solved
    matrix-free and this matrix is only factorised as a preconditioner.
    ``constrained`` defaults to ``movable``.
    """
    n = len(pos)
    if constrained is None:
        constrained = movable
    mov, con = np.flatnonzero(movable), np.flatnonzero(constrained)
    lm = np.full(n, -1)
    lm[mov] = np.arange(len(mov))
    lc = np.full(n, -1)
    lc[con] = np.arange(len(con))
    ii, jj, gx, gy = _pair_terms(pos, masses, k, contrib, table)
    ra = 1.0 / rho[ii]
    rb = 1.0 / (rho[jj] * rho[jj])
    mi, mj, ci, cj = lm[ii], lm[jj], lc[ii], lc[jj]
    # G: rows (movable a, x|y), columns phi over constrained particles
    s1 = (mi >= 0) & (ci >= 0)
    s2 = (mi >= 0) & (cj >= 0)
    rows = np.concatenate([2 * mi[s1], 2 * mi[s1] + 1, 2 * mi[s2], 2 * mi[s2] + 1])
    cols = np.concatenate([ci[s1], ci[s1], cj[s2], cj[s2]])
    vals = np.concatenate([(gx * ra)[s1], (gy * ra)[s1], (rho[ii] * gx * rb)[s2],
                           (rho[ii] * gy * rb)[s2]])
    G = sp.csr_matrix((vals, (rows, cols)), shape=(2 * len(mov), len(con)))
    # D: rows constrained a, columns (movable b, x|y)
    t1 = (ci >= 0) & (mi >= 0)
    t2 = (ci >= 0) & (mj >= 0)
    rows = np.concatenate([ci[t1], ci[t1], ci[t2], ci[t2]])
    cols = np.concatenate([2 * mi[t1], 2 * mi[t1] + 1, 2 * mj[t2], 2 * mj[t2] + 1])
    vals = np.concatenate([(-gx * ra)[t1], (-gy * ra)[t1], (gx * ra)[t2], (gy * ra)[t2]])
    D = sp.csr_matrix((vals, (rows, cols)), shape=(len(con), 2 * len(mov)))
    inv = sp.diags(np.repeat(1.0 / rho[mov], 2))
    return (sp.diags(rho[con]) @ D @ inv @ G).tocsc()


def _newton_step(pos, rho, p: IscProblem, be, table):
    mov = np.flatnonzero(p.movable)
    con = np.flatnonzero(p.constrained)
    m = len(mov)
    n = len(pos)
    masses = p.masses
    k = p.kernel
    rho_m = rho[mov]
    rho_c = rho[con]

    def scatter_dx(v):
        full = np.zeros((n, 2))
        full[mov] = v.reshape(m, 2)
        return full

    def scatter_phi(v):
        full = np.zeros(n)
        full[con] = v
        return full

    def b_apply(phi):  # (1/rho) G phi on movable rows
        g = apply_grad(pos, rho, masses, k, scatter_phi(phi), p.contrib, table, p.workers, be)
        return (g[mov] / rho_m[:, None]).ravel()

    def matvec(z):
        z = np.asarray(z).ravel()
        dx, phi = z[:2 * m], z[2 * m:]
        top = dx + b_apply(phi)
        div = apply_div(pos, rho, masses, k, scatter_dx(dx), p.contrib, table, p.workers, be)
        bottom = -rho_c * div[con]
        return np.concatenate([top, bottom])

    S = schur_matrix(pos, rho, masses, k, p.contrib, p.movable, table, p.constrained)
    try:
        lu = splu(S)
        schur_solve = lu.solve
    except RuntimeError:
        # exactly singular Schur block: fall back to its diagonal
        diag = S.diagonal()
        diag[diag == 0] = 1.0
        schur_solve = lambda v: v / diag  # noqa: E731

    def psolve(rv):
        rv = np.asarray(rv).ravel()
        y2 = schur_solve(rv[2 * m:])
        y1 = rv[:2 * m] - b_apply(y2)
        return np.concatenate([y1, y2])

    size = 2 * m + len(con)
    op = LinearOperator((size, size), matvec=matvec, dtype=np.float64)
    pre = LinearOperator((size, size), matvec=psolve, dtype=np.float64)
    rhs = np.concatenate([np.zeros(2 * m), p.rho0 - rho_c])
    count = [0]

    def cb(_):
        count[0] += 1

    sol, info = gmres(op, rhs, rtol=p.lin_tol, atol=0.0, restart=min(size, 100),
                      maxiter=20, M=pre, callback=cb, callback_type="pr_norm")
    resid = float(np.linalg.norm(rhs - matvec(sol)) / max(np.linalg.norm(rhs), 1e-300))
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("ISC linear system is singular")
    return scatter_dx(sol[:2 * m]), resid, count[0], info


def _residual_norm(pos, p: IscProblem, be) -> float:
    table = neighbor_table(pos, p.kernel.h, p.workers, be)
    rho = be.density_sum(pos, p.masses, p.contrib, table.offsets, table.indices,
                         p.kernel.family_id, p.kernel.h, p.kernel.wnorm, p.workers)
    return float(np.linalg.norm(rho[p.constrained] - p.rho0))


def _backtrack(pos, dx, p: IscProblem, be, halvings: int = 6):
    # Full Newton step unless it raises the residual 2-norm; then halve. If
    # no fraction helps, the full step is kept and the growth guard decides.
    base = _residual_norm(pos, p, be)
    longest = float(np.max(np.hypot(dx[:, 0], dx[:, 1]))) if len(dx) else 0.0
    scale = min(1.0, p.max_step * p.dr / longest) if longest > 0 else 1.0
    for _ in range(halvings + 1):
        trial = pos + scale * dx
        e = _residual_norm(trial, p, be)
        if np.isfinite(e) and e < base:
            return trial
        scale *= 0.5
    return pos + dx


def solve_isc(p: IscProblem):
    """Run the correction. Returns ``(positions, report)``.

    Raises :class:`IscError` (carrying the report) when the residual 2-norm
    grows for three consecutive iterations or ``max_iter`` is reached.
    """
    be = _be(p.backend)
    report = IscReport()
    x0 = p.positions.copy()
    pos = x0.copy()
    mov, con = p.movable, p.constrained
    if p.noise > 0:
        rng = np.random.default_rng(p.seed)
        nm = int(mov.sum())
        rad = p.noise * np.sqrt(rng.random(nm))
        ang = 2.0 * np.pi * rng.random(nm)
        pos[mov, 0] += rad * np.cos(ang)
        pos[mov, 1] += rad * np.sin(ang)
    growth = 0
    while True:
        table = neighbor_table(pos, p.kernel.h, p.workers, be)
        rho = be.density_sum(pos, p.masses, p.contrib, table.offsets, table.indices,
                             p.kernel.family_id, p.kernel.h, p.kernel.wnorm, p.workers)
        err = float(np.max(np.abs(rho[con] - p.rho0)) / p.rho0)
        norm = float(np.linalg.norm(rho[con] - p.rho0))
        report.errors.append(err)
        report.residual_norms.append(norm)
        log.info("ISC iteration %d: max relative density error %.3e", report.iterations, err)
        if err <= p.tol:
            report.converged = True
            break
        if len(report.residual_norms) >= 2 and norm > report.residual_norms[-2]:
            growth += 1
        else:
            growth = 0
        if growth >= 3 or not np.isfinite(err):
            report.displacements = pos - x0
            raise IscError(f"ISC diverged after {report.iterations} iterations "
                           f"(error {err:.3e})", report)
        if report.iterations >= p.max_iter:
            report.displacements = pos - x0
            raise IscError(f"ISC did not reach {p.tol:g} in {p.max_iter} iterations "
                           f"(error {err:.3e})", report)
        if np.any(rho[con] <= 0):
            raise IscError("ISC produced non-positive density", report)
        try:
            dx, resid, kiters, _ = _newton_step(pos, rho, p, be, table)
        except np.linalg.LinAlgError as exc:
            report.displacements = pos - x0
            raise IscError(f"ISC linear solve failed: {exc}", report) from exc
        report.linear_residuals.append(resid)
        report.krylov_iterations.append(kiters)
        pos = _backtrack(pos, dx, p, be)
        report.iterations += 1
    report.displacements = pos - x0
    return pos, report
