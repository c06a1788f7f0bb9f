"""Pure numpy implementations of the hot pair loops.

This is the fallback used when the compiled ``_ckernels`` extension is not
available, and the reference the extension is tested against. Every routine
works on a CSR neighbor table whose rows list particle indices in ascending
order (self included). Per-particle sums are accumulated with
``np.bincount``, which adds weights sequentially in input order, so each row
is summed left to right in ascending neighbor index starting from +0.0 -
exactly the loop the compiled core runs.

``workers`` is accepted for signature compatibility and ignored.
"""

from __future__ import annotations

import numpy as np

from .kernels import dw_array, w_array

FLUID = 0
WALL_DUMMY = 1
WALL_LJ = 2

# Slack on the cell size so floor() rounding at cell faces can never hide a
# pair that is closer than the search radius.
CELL_SLACK = 1.0 + 2.0**-20


def sort_into_cells(pos: np.ndarray, radius: float):
    """Bin particles on a grid of cell size ~radius.

    Returns ``(cid, order, sorted_cid, stride)``: the cell id of every
    particle, the particle indices sorted by cell id (stable, so ascending
    within a cell), the matching sorted ids, and the id stride between
    columns. Cell coordinates are padded by one on each side so that
    ``cid +- 1`` and ``cid +- stride`` never alias another column.
    """
    if pos.shape[0] == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, 1
    if not np.all(np.isfinite(pos)):
        bad = int(np.argwhere(~np.isfinite(pos))[0][0])
        raise FloatingPointError(f"non-finite position for particle {bad}")
    cell = radius * CELL_SLACK
    lo = pos.min(axis=0)
    c = np.floor((pos - lo) / cell).astype(np.int64) + 1
    ncy = int(c[:, 1].max()) + 2
    if (int(c[:, 0].max()) + 2) * ncy > 2**62:
        raise OverflowError("particle cloud too sparse for the cell grid")
    cid = c[:, 0] * ncy + c[:, 1]
    order = np.argsort(cid, kind="stable").astype(np.int64)
    return cid, order, cid[order], ncy


def neighbor_table(pos: np.ndarray, radius: float, workers: int = 1):
    """CSR rows ``{b : |r_a - r_b| < radius}`` (self included), ascending."""
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    n = pos.shape[0]
    cid, order, scid, stride = sort_into_cells(pos, radius)
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    ii_parts = []
    jj_parts = []
    # cells cid-1, cid, cid+1 are consecutive ids: one range per column
    for ox in (-1, 0, 1):
        base = cid + ox * stride
        start = np.searchsorted(scid, base - 1, side="left")
        stop = np.searchsorted(scid, base + 1, side="right")
        cnt = stop - start
        tot = int(cnt.sum())
        if tot == 0:
            continue
        ii = np.repeat(np.arange(n, dtype=np.int64), cnt)
        first = np.repeat(start - np.concatenate(([0], np.cumsum(cnt)[:-1])), cnt)
        jj = order[first + np.arange(tot, dtype=np.int64)]
        dx = pos[ii, 0] - pos[jj, 0]
        dy = pos[ii, 1] - pos[jj, 1]
        r = np.sqrt(dx * dx + dy * dy)
        keep = r < radius
        ii_parts.append(ii[keep])
        jj_parts.append(jj[keep])
    ii = np.concatenate(ii_parts)
    jj = np.concatenate(jj_parts)
    srt = np.argsort(ii * n + jj, kind="stable")
    jj = jj[srt]
    counts = np.bincount(ii, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, jj.astype(np.int64)


def _pairs(pos, offsets, idx):
    n = pos.shape[0]
    ii = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
    jj = idx
    dx = pos[ii, 0] - pos[jj, 0]
    dy = pos[ii, 1] - pos[jj, 1]
    r = np.sqrt(dx * dx + dy * dy)
    return ii, jj, dx, dy, r


def _rowsum(ii, weights, n):
    if ii.size == 0:
        return np.zeros(n)
    return np.bincount(ii, weights=weights, minlength=n)


def density_sum(pos, mass, contrib, offsets, idx, family_id, h, wnorm, workers=1):
    """``rho_a = sum_b m_b w(r_ab)`` over contributing ``b`` (self included)."""
    n = pos.shape[0]
    ii, jj, dx, dy, r = _pairs(pos, offsets, idx)
    keep = contrib[jj] != 0
    ii, jj, r = ii[keep], jj[keep], r[keep]
    terms = mass[jj] * w_array(family_id, h, wnorm, r)
    return _rowsum(ii, terms, n)


def acceleration(pos, mass, pr, kind, offsets, idx, family_id, h, dnorm,
                 e_wall, r_wall, pc, ac_h, ac_dnorm, workers=1):
    """Pair part of the acceleration: pressure, anti-clump and LJ wall terms.

    ``pr = p/rho^2`` per particle; ``pc = p0/rho^2`` per particle (only read
    when ``ac_h > 0``). Rows of LJ wall particles are zero. Returns
    ``(acc, coincident_pairs, lj_penetrations)``.
    """
    n = pos.shape[0]
    acc = np.zeros((n, 2))
    ii, jj, dx, dy, r = _pairs(pos, offsets, idx)
    ki = kind[ii]
    kj = kind[jj]
    live = (ii != jj) & (ki != WALL_LJ)

    lj = live & (kj == WALL_LJ) & (ki == FLUID) & (r < r_wall)
    lj_hits = int(np.count_nonzero(lj & (r == 0.0)))
    sph = live & (kj != WALL_LJ)
    coincident = int(np.count_nonzero(sph & (r == 0.0)))
    sph &= r != 0.0
    use = lj | sph
    ii, jj, dx, dy, r = ii[use], jj[use], dx[use], dy[use], r[use]
    is_lj = lj[use]

    with np.errstate(divide="ignore", invalid="ignore"):
        ex = dx / r
        ey = dy / r
        dw = dw_array(family_id, h, dnorm, r)
        fac = mass[jj] * (pr[ii] + pr[jj]) * dw
        if ac_h > 0:
            dwc = dw_array(family_id, ac_h, ac_dnorm, r)
            fac = np.where(r < ac_h, fac + mass[jj] * (pc[ii] + pc[jj]) * dwc, fac)
        s = r_wall / r
        s2 = s * s
        flj = e_wall / r * (s2 * (s2 - 1.0)) / mass[ii]
        tx = np.where(is_lj, flj * ex, -(fac * ex))
        ty = np.where(is_lj, flj * ey, -(fac * ey))
    acc[:, 0] = _rowsum(ii, tx, n)
    acc[:, 1] = _rowsum(ii, ty, n)
    return acc, coincident, lj_hits


def density_rate(pos, vel, mass, contrib, offsets, idx, family_id, h, dnorm, workers=1):
    """``d rho_a/dt = sum_b m_b (u_a - u_b) . e_ab w'(r_ab)``."""
    n = pos.shape[0]
    ii, jj, dx, dy, r = _pairs(pos, offsets, idx)
    keep = (ii != jj) & (contrib[jj] != 0) & (r != 0.0)
    ii, jj, dx, dy, r = ii[keep], jj[keep], dx[keep], dy[keep], r[keep]
    ex = dx / r
    ey = dy / r
    dux = vel[ii, 0] - vel[jj, 0]
    duy = vel[ii, 1] - vel[jj, 1]
    terms = mass[jj] * (dux * ex + duy * ey) * dw_array(family_id, h, dnorm, r)
    return _rowsum(ii, terms, n)


def shepard(pos, vel, vol, contrib, offsets, idx, family_id, h, wnorm, workers=1):
    """Shepard-normalised velocity. Returns ``(num_x, num_y, gamma)``."""
    n = pos.shape[0]
    ii, jj, dx, dy, r = _pairs(pos, offsets, idx)
    keep = contrib[jj] != 0
    ii, jj, r = ii[keep], jj[keep], r[keep]
    vw = vol[jj] * w_array(family_id, h, wnorm, r)
    return (_rowsum(ii, vw * vel[jj, 0], n),
            _rowsum(ii, vw * vel[jj, 1], n),
            _rowsum(ii, vw, n))


def isc_div(pos, mass, rho, field, contrib, offsets, idx, family_id, h, dnorm, workers=1):
    """``-(1/rho_a) sum_b m_b (dx_a - dx_b) . e_ab w'(r_ab)``."""
    n = pos.shape[0]
    ii, jj, dx, dy, r = _pairs(pos, offsets, idx)
    keep = (ii != jj) & (contrib[jj] != 0) & (r != 0.0)
    ii, jj, dx, dy, r = ii[keep], jj[keep], dx[keep], dy[keep], r[keep]
    ex = dx / r
    ey = dy / r
    fx = field[ii, 0] - field[jj, 0]
    fy = field[ii, 1] - field[jj, 1]
    terms = mass[jj] * (fx * ex + fy * ey) * dw_array(family_id, h, dnorm, r)
    return -(_rowsum(ii, terms, n) / rho)


def isc_grad(pos, mass, rho, phi_over_rho2, contrib, offsets, idx, family_id, h, dnorm, workers=1):
    """``rho_a sum_b m_b (phi_a/rho_a^2 + phi_b/rho_b^2) w'(r_ab) e_ab``."""
    n = pos.shape[0]
    q = phi_over_rho2
    ii, jj, dx, dy, r = _pairs(pos, offsets, idx)
    keep = (ii != jj) & (contrib[jj] != 0) & (r != 0.0)
    ii, jj, dx, dy, r = ii[keep], jj[keep], dx[keep], dy[keep], r[keep]
    ex = dx / r
    ey = dy / r
    fac = mass[jj] * (q[ii] + q[jj]) * dw_array(family_id, h, dnorm, r)
    out = np.empty((n, 2))
    out[:, 0] = rho * _rowsum(ii, fac * ex, n)
    out[:, 1] = rho * _rowsum(ii, fac * ey, n)
    return out
