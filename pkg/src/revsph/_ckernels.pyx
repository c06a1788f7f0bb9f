# cython: language_level=3
"""Compiled pair loops (OpenMP over particles).

Each routine mirrors its counterpart in ``_pykernels`` expression by
expression: rows are summed left to right in ascending neighbor index
starting from +0.0, and the arithmetic is written with the same
parenthesisation. Rows are independent, so the result does not depend on
the number of threads.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int64_t i64

cdef enum:
    FLUID = 0
    WALL_DUMMY = 1
    WALL_LJ = 2
    WENDLAND2 = 0


cdef inline double kernel_w(int fam, double h, double wnorm, double r) noexcept nogil:
    cdef double q = r / h
    cdef double t, t2, t4, s, s2, s3
    if fam == WENDLAND2:
        if q < 1.0:
            t = 1.0 - q
            t2 = t * t
            t4 = t2 * t2
            return wnorm * t4 * (1.0 + 4.0 * q)
        return 0.0
    s = 2.0 * q
    if s < 1.0:
        s2 = s * s
        s3 = s2 * s
        return wnorm * ((1.0 - 1.5 * s2) + 0.75 * s3)
    if s < 2.0:
        t = 2.0 - s
        return wnorm * 0.25 * (t * t * t)
    return 0.0


cdef inline double kernel_dw(int fam, double h, double dnorm, double r) noexcept nogil:
    cdef double q = r / h
    cdef double t, s
    if fam == WENDLAND2:
        if q < 1.0:
            t = 1.0 - q
            return dnorm * q * (t * t * t)
        return 0.0
    s = 2.0 * q
    if s < 1.0:
        return dnorm * (-3.0 * s + 2.25 * (s * s))
    if s < 2.0:
        t = 2.0 - s
        return dnorm * (-0.75 * (t * t))
    return 0.0


cdef inline i64 lower_bound(const i64* a, i64 n, i64 key) noexcept nogil:
    cdef i64 lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


def pair_rows(const double[:, ::1] pos, double radius, const i64[::1] cid,
              const i64[::1] order, const i64[::1] scid, i64 stride, int workers):
    """Neighbor CSR from pre-binned particles (see ``sort_into_cells``).

    Cells ``cid-1, cid, cid+1`` are consecutive ids, so each of the three
    neighboring columns is one contiguous range of the cell-sorted arrays.
    """
    cdef i64 n = pos.shape[0]
    counts_np = np.zeros(n, dtype=np.int64)
    cdef i64[::1] counts = counts_np
    cdef i64[:, ::1] lo3 = np.empty((n, 3), dtype=np.int64)
    cdef i64[:, ::1] hi3 = np.empty((n, 3), dtype=np.int64)
    spos_np = np.ascontiguousarray(np.asarray(pos)[np.asarray(order)])
    cdef const double[:, ::1] spos = spos_np
    cdef i64 i, j, k, m, lo, hi, base, pos_k, cnt
    cdef int ox
    cdef double dx, dy, r, xi, yi
    cdef const i64* sp = &scid[0]
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        cnt = 0
        xi = pos[i, 0]
        yi = pos[i, 1]
        for ox in range(3):
            base = cid[i] + (ox - 1) * stride
            lo = lower_bound(sp, n, base - 1)
            hi = lower_bound(sp, n, base + 2)
            lo3[i, ox] = lo
            hi3[i, ox] = hi
            for k in range(lo, hi):
                dx = xi - spos[k, 0]
                dy = yi - spos[k, 1]
                r = sqrt(dx * dx + dy * dy)
                if r < radius:
                    cnt = cnt + 1
        counts[i] = cnt
    offsets_np = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts_np, out=offsets_np[1:])
    cdef i64[::1] offsets = offsets_np
    idx_np = np.empty(offsets_np[n], dtype=np.int64)
    cdef i64[::1] idx = idx_np
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        pos_k = offsets[i]
        xi = pos[i, 0]
        yi = pos[i, 1]
        for ox in range(3):
            for k in range(lo3[i, ox], hi3[i, ox]):
                dx = xi - spos[k, 0]
                dy = yi - spos[k, 1]
                r = sqrt(dx * dx + dy * dy)
                if r < radius:
                    j = order[k]
                    # insertion keeps the row sorted
                    m = pos_k
                    while m > offsets[i] and idx[m - 1] > j:
                        idx[m] = idx[m - 1]
                        m = m - 1
                    idx[m] = j
                    pos_k = pos_k + 1
    return offsets_np, idx_np


def density_sum(const double[:, ::1] pos, const double[::1] mass, const cnp.int8_t[::1] contrib,
                const i64[::1] offsets, const i64[::1] idx, int fam, double h, double wnorm,
                int workers=1):
    cdef i64 n = pos.shape[0]
    out_np = np.zeros(n)
    cdef double[::1] out = out_np
    cdef i64 i, j, k
    cdef double dx, dy, r, acc
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        acc = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = idx[k]
            if contrib[j] == 0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = sqrt(dx * dx + dy * dy)
            acc = acc + mass[j] * kernel_w(fam, h, wnorm, r)
        out[i] = acc
    return out_np


def acceleration(const double[:, ::1] pos, const double[::1] mass, const double[::1] pr,
                 const cnp.int8_t[::1] kind, const i64[::1] offsets, const i64[::1] idx,
                 int fam, double h, double dnorm, double e_wall, double r_wall,
                 const double[::1] pc, double ac_h, double ac_dnorm, int workers=1):
    cdef i64 n = pos.shape[0]
    acc_np = np.zeros((n, 2))
    cdef double[:, ::1] acc = acc_np
    cdef i64[::1] coinc = np.zeros(n, dtype=np.int64)
    cdef i64[::1] hits = np.zeros(n, dtype=np.int64)
    cdef i64 i, j, k
    cdef int ki, kj
    cdef double dx, dy, r, ex, ey, fac, s, s2, flj, ax, ay
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        ki = kind[i]
        if ki == WALL_LJ:
            continue
        ax = 0.0
        ay = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = idx[k]
            if j == i:
                continue
            kj = kind[j]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = sqrt(dx * dx + dy * dy)
            if kj == WALL_LJ:
                if ki != FLUID or not (r < r_wall):
                    continue
                if r == 0.0:
                    hits[i] += 1
                    continue
                ex = dx / r
                ey = dy / r
                s = r_wall / r
                s2 = s * s
                flj = e_wall / r * (s2 * (s2 - 1.0)) / mass[i]
                ax = ax + flj * ex
                ay = ay + flj * ey
            else:
                if r == 0.0:
                    coinc[i] += 1
                    continue
                ex = dx / r
                ey = dy / r
                fac = mass[j] * (pr[i] + pr[j]) * kernel_dw(fam, h, dnorm, r)
                if ac_h > 0 and r < ac_h:
                    fac = fac + mass[j] * (pc[i] + pc[j]) * kernel_dw(fam, ac_h, ac_dnorm, r)
                ax = ax + -(fac * ex)
                ay = ay + -(fac * ey)
        acc[i, 0] = ax
        acc[i, 1] = ay
    return acc_np, int(np.asarray(coinc).sum()), int(np.asarray(hits).sum())


def density_rate(const double[:, ::1] pos, const double[:, ::1] vel, const double[::1] mass,
                 const cnp.int8_t[::1] contrib, const i64[::1] offsets, const i64[::1] idx,
                 int fam, double h, double dnorm, int workers=1):
    cdef i64 n = pos.shape[0]
    out_np = np.zeros(n)
    cdef double[::1] out = out_np
    cdef i64 i, j, k
    cdef double dx, dy, r, ex, ey, dux, duy, acc
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        acc = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = idx[k]
            if j == i or contrib[j] == 0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = sqrt(dx * dx + dy * dy)
            if r == 0.0:
                continue
            ex = dx / r
            ey = dy / r
            dux = vel[i, 0] - vel[j, 0]
            duy = vel[i, 1] - vel[j, 1]
            acc = acc + mass[j] * (dux * ex + duy * ey) * kernel_dw(fam, h, dnorm, r)
        out[i] = acc
    return out_np


def shepard(const double[:, ::1] pos, const double[:, ::1] vel, const double[::1] vol,
            const cnp.int8_t[::1] contrib, const i64[::1] offsets, const i64[::1] idx,
            int fam, double h, double wnorm, int workers=1):
    cdef i64 n = pos.shape[0]
    nx_np = np.zeros(n)
    ny_np = np.zeros(n)
    g_np = np.zeros(n)
    cdef double[::1] nx = nx_np
    cdef double[::1] ny = ny_np
    cdef double[::1] g = g_np
    cdef i64 i, j, k
    cdef double dx, dy, r, vw, sx, sy, sg
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        sx = 0.0
        sy = 0.0
        sg = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = idx[k]
            if contrib[j] == 0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = sqrt(dx * dx + dy * dy)
            vw = vol[j] * kernel_w(fam, h, wnorm, r)
            sx = sx + vw * vel[j, 0]
            sy = sy + vw * vel[j, 1]
            sg = sg + vw
        nx[i] = sx
        ny[i] = sy
        g[i] = sg
    return nx_np, ny_np, g_np


def isc_div(const double[:, ::1] pos, const double[::1] mass, const double[::1] rho,
            const double[:, ::1] field, const cnp.int8_t[::1] contrib,
            const i64[::1] offsets, const i64[::1] idx, int fam, double h, double dnorm,
            int workers=1):
    cdef i64 n = pos.shape[0]
    out_np = np.zeros(n)
    cdef double[::1] out = out_np
    cdef i64 i, j, k
    cdef double dx, dy, r, ex, ey, fx, fy, acc
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        acc = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = idx[k]
            if j == i or contrib[j] == 0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = sqrt(dx * dx + dy * dy)
            if r == 0.0:
                continue
            ex = dx / r
            ey = dy / r
            fx = field[i, 0] - field[j, 0]
            fy = field[i, 1] - field[j, 1]
            acc = acc + mass[j] * (fx * ex + fy * ey) * kernel_dw(fam, h, dnorm, r)
        out[i] = -(acc / rho[i])
    return out_np


def isc_grad(const double[:, ::1] pos, const double[::1] mass, const double[::1] rho,
             const double[::1] q, const cnp.int8_t[::1] contrib,
             const i64[::1] offsets, const i64[::1] idx, int fam, double h, double dnorm,
             int workers=1):
    cdef i64 n = pos.shape[0]
    out_np = np.zeros((n, 2))
    cdef double[:, ::1] out = out_np
    cdef i64 i, j, k
    cdef double dx, dy, r, ex, ey, fac, sx, sy
    for i in prange(n, nogil=True, num_threads=workers, schedule="static"):
        sx = 0.0
        sy = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = idx[k]
            if j == i or contrib[j] == 0:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = sqrt(dx * dx + dy * dy)
            if r == 0.0:
                continue
            ex = dx / r
            ey = dy / r
            fac = mass[j] * (q[i] + q[j]) * kernel_dw(fam, h, dnorm, r)
            sx = sx + fac * ex
            sy = sy + fac * ey
        out[i, 0] = rho[i] * sx
        out[i, 1] = rho[i] * sy
    return out_np
