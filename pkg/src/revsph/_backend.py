"""Selection between the compiled pair loops and the numpy fallback.

The compiled extension is used when it imports, unless the environment
variable ``REVSPH_BACKEND=python`` asks for the fallback. Both backends
expose the same functions and produce bitwise-identical results.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None


def _compiled_neighbor_table(pos, radius, workers=1):
    import numpy as np

    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if pos.shape[0] == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    cid, order, scid, stride = _pykernels.sort_into_cells(pos, radius)
    return _ckernels.pair_rows(pos, float(radius), cid, order, scid, stride, int(workers))


def _make(name):
    if name == "python":
        mod = _pykernels
        table = _pykernels.neighbor_table
    elif name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled core revsph._ckernels is not built")
        mod = _ckernels
        table = _compiled_neighbor_table
    else:
        raise ValueError(f"unknown backend {name!r}")
    return SimpleNamespace(
        name=name,
        neighbor_table=table,
        density_sum=mod.density_sum,
        acceleration=mod.acceleration,
        density_rate=mod.density_rate,
        shepard=mod.shepard,
        isc_div=mod.isc_div,
        isc_grad=mod.isc_grad,
    )


_CACHE = {}


def available() -> list[str]:
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def get_backend(name: str | None = None):
    if name is None:
        name = os.environ.get("REVSPH_BACKEND") or ("compiled" if _ckernels is not None else "python")
    if name not in _CACHE:
        _CACHE[name] = _make(name)
    return _CACHE[name]
