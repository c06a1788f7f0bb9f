"""Time the compiled core against the numpy fallback.

    python benchmarks/bench_backends.py --dr 0.02 --repeat 5 --workers 1 4

Every operation runs on the same Gresho square-lattice start for each
backend; the table reports the best wall time, the speedup and whether the
two outputs are bitwise equal.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from revsph import available_backends, bench
from revsph import integrate as it
from revsph.isc import apply_div, apply_grad
from revsph.neighbors import neighbor_table


def cases(dr: float, workers: int):
    sc = bench.GreshoScenario(dr=dr)
    rng = np.random.default_rng(0)

    def setup(backend):
        pos, vel, phys, _ = sc.build("square", workers, backend)
        cfg = sc.config()
        state = it.init_state(pos, vel, phys, cfg)
        return pos, phys, cfg, state

    prepared = {b: setup(b) for b in available_backends()}
    any_b = next(iter(prepared))
    pos, phys = prepared[any_b][0], prepared[any_b][1]
    rho = phys.density(pos)
    x = rng.standard_normal(pos.shape)
    phi = rng.standard_normal(len(pos))
    k = phys.kernel

    def table(b):
        t = neighbor_table(pos, k.h, workers, b)
        return t.offsets.tobytes() + t.indices.tobytes()

    def density(b):
        return prepared[b][1].density(pos).tobytes()

    def forces(b):
        acc, r, _ = prepared[b][1].evaluate(pos)
        return acc.tobytes() + r.tobytes()

    def div(b):
        return apply_div(pos, rho, phys.mass, k, x, workers=workers, backend=b).tobytes()

    def grad(b):
        return apply_grad(pos, rho, phys.mass, k, phi, workers=workers, backend=b).tobytes()

    def step(b):
        _, ph, cfg, s = prepared[b]
        out = it.step(s.copy(), cfg, ph)
        return out.r.tobytes() + out.u.tobytes()

    return len(pos), {"neighbor table": table, "density": density, "forces": forces,
                      "isc divergence": div, "isc gradient": grad, "integrator step": step}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dr", type=float, default=0.02)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workers", type=int, nargs="+", default=[1])
    args = ap.parse_args(argv)

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled core not built; only the numpy fallback is available", file=sys.stderr)
    status = 0
    for w in args.workers:
        n, ops = cases(args.dr, w)
        print(f"\n{n} particles (dr={args.dr}), workers={w}")
        print(f"{'operation':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'equal':>8}")
        for name, fn in ops.items():
            times, outs = {}, {}
            for b in backends:
                outs[b] = fn(b)
                times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
            equal = len({outs[b] for b in backends}) == 1
            status |= not equal
            speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            print(f"{name:<18}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
                  + f"{speed:>9.1f}x{'yes' if equal else 'NO':>8}")
    return status


if __name__ == "__main__":
    sys.exit(main())
