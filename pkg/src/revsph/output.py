"""Plain-text exports: diagnostics CSV and particle tables.

Diagnostics columns, in order::

    time, kinetic, internal, gravitational, wall, total,
    momentum_x, momentum_y, angular_momentum, rho_min, rho_max, dissipated,
    leading_edge, s_reduced, t_fit, s_eq_t, s_eq_e, gresho_error, gresho_error_passive

Floats are written with ``repr`` so values round-trip exactly; metrics that
do not apply to a run are left empty.
"""

from __future__ import annotations

import csv
import io

import numpy as np

BASE_COLUMNS = ("time", "kinetic", "internal", "gravitational", "wall", "total",
                "momentum_x", "momentum_y", "angular_momentum", "rho_min", "rho_max",
                "dissipated")
EXTRA_COLUMNS = ("leading_edge", "s_reduced", "t_fit", "s_eq_t", "s_eq_e",
                 "gresho_error", "gresho_error_passive")
COLUMNS = BASE_COLUMNS + EXTRA_COLUMNS


def _cell(x) -> str:
    return "" if x is None else repr(float(x))


def record_row(rec) -> list[str]:
    base = [rec.t, rec.kinetic, rec.internal, rec.gravitational, rec.wall, rec.total,
            rec.momentum[0], rec.momentum[1], rec.angular_momentum, rec.rho_min, rec.rho_max,
            rec.dissipated]
    return [_cell(x) for x in base] + [_cell(rec.extra.get(k)) for k in EXTRA_COLUMNS]


class DiagnosticsWriter:
    """Append-only CSV writer; usable directly as an integrator hook."""

    def __init__(self, fh):
        self._w = csv.writer(fh, lineterminator="\n")
        self._fh = fh
        self._w.writerow(COLUMNS)

    def __call__(self, state, rec):
        self._w.writerow(record_row(rec))
        self._fh.flush()

    def write(self, rec):
        self._w.writerow(record_row(rec))


def diagnostics_csv(records) -> str:
    buf = io.StringIO()
    w = DiagnosticsWriter(buf)
    for r in records:
        w.write(r)
    return buf.getvalue()


def particle_table(pos, vel, rho, mass, kind) -> str:
    """Whitespace-separated ``index kind x y u v rho mass`` rows for viewers."""
    buf = io.StringIO()
    buf.write("# index kind x y u v rho mass\n")
    pos, vel = np.asarray(pos, dtype=float).tolist(), np.asarray(vel, dtype=float).tolist()
    for a in range(len(mass)):
        buf.write(f"{a} {int(kind[a])} {pos[a][0]!r} {pos[a][1]!r} {vel[a][0]!r} {vel[a][1]!r} "
                  f"{float(rho[a])!r} {float(mass[a])!r}\n")
    return buf.getvalue()
