"""Command-line driver.

Subcommands: ``run``, ``isc``, ``reverse-check``, ``analyze-entropy`` and
``gresho-table``. Every command exits with 0 on success and a nonzero status
with a one-line diagnostic on stderr otherwise; ``reverse-check`` (and
``run`` with a reversal) exit with 1 when the round trip is not bitwise
exact.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import bench, checkpoint, thermo
from .config import (
    ConfigError,
    default_config,
    integrator_config,
    load_config,
    render_config,
    to_dambreak,
    to_gresho,
    with_overrides,
)
from .integrate import WatchdogTripped, init_state
from .integrate import run as run_integrator
from .sphcore import shepard_filter
from .output import DiagnosticsWriter, particle_table

log = logging.getLogger("revsph")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="revsph", description="Reversible 2D WCSPH simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(p, scenario=True):
        p.add_argument("--config", type=Path, help="TOML scenario file")
        if scenario:
            p.add_argument("--scenario", choices=("dambreak", "gresho"))
        p.add_argument("--dr", type=float, help="particle spacing")
        p.add_argument("--kernel", choices=("wendland2", "cubic_spline"))
        p.add_argument("--workers", type=_positive_int, default=1, help="threads for pair loops")
        p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("run", help="run a scenario")
    common(p)
    p.add_argument("--arith", choices=("fixpa", "flopa"))
    p.add_argument("--scheme", choices=("sym", "std"))
    p.add_argument("--end-time", type=float)
    p.add_argument("--reverse-at", type=float)
    p.add_argument("--arrangement", choices=bench.GRESHO_ROWS)
    p.add_argument("--filter", choices=("none", "active"))
    p.add_argument("--isc", type=_on_off, metavar="on|off")
    p.add_argument("--isc-tol", type=float)
    p.add_argument("--isc-seed", type=int)
    p.add_argument("--output-every", type=_positive_int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--force", action="store_true",
                   help="allow reversal together with irreversible operations")

    p = sub.add_parser("isc", help="initial state correction of a square block")
    p.add_argument("--n", type=_positive_int, default=30, help="particles per side")
    p.add_argument("--dr", type=float, default=0.01)
    p.add_argument("--rho0", type=float, default=1000.0)
    p.add_argument("--kernel", choices=("wendland2", "cubic_spline"), default="wendland2")
    p.add_argument("--noise", type=float, help="noise amplitude (default dr/10; 0 disables)")
    p.add_argument("--isc-tol", type=float, default=1e-10)
    p.add_argument("--isc-seed", type=int, default=0)
    p.add_argument("--max-iter", type=_positive_int, default=30)
    p.add_argument("--out", type=Path, help="write per-iteration errors as CSV")

    p = sub.add_parser("reverse-check", help="forward, reverse, compare with the initial state")
    common(p, scenario=False)
    p.add_argument("--arith", choices=("fixpa", "flopa"), default="fixpa")
    p.add_argument("--reverse-at", type=float, default=0.5)
    p.add_argument("--output-every", type=_positive_int, default=50)

    p = sub.add_parser("analyze-entropy", help="entropy series from checkpoint snapshots")
    p.add_argument("snapshots", type=Path, nargs="+", help="checkpoint files or directories")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", type=Path, help="entropy CSV path (default stdout)")
    p.add_argument("--histogram", type=Path, help="histogram CSV of the last snapshot")

    p = sub.add_parser("gresho-table", help="Gresho errors for 4 grids x 3 filter modes")
    common(p, scenario=False)
    p.add_argument("--rows", default=",".join(bench.GRESHO_ROWS))
    p.add_argument("--modes", default=",".join(bench.FILTER_MODES))
    p.add_argument("--end-time", type=float)
    p.add_argument("--output-every", type=_positive_int, default=50)
    return ap


# ---------------------------------------------------------------------------

def _resolve_config(args, name=None):
    name = name or getattr(args, "scenario", None)
    if args.config:
        cfg = load_config(args.config)
        if name and cfg.name != name:
            raise ConfigError(f"{args.config} describes scenario {cfg.name!r}, not {name!r}")
    else:
        cfg = default_config(name or "dambreak")
    sc = {"dr": args.dr, "kernel": args.kernel, "arrangement": getattr(args, "arrangement", None)}
    integ = {
        "arithmetic": getattr(args, "arith", None),
        "scheme": getattr(args, "scheme", None),
        "end_time": getattr(args, "end_time", None),
        "reverse_at": getattr(args, "reverse_at", None),
        "filter": getattr(args, "filter", None),
    }
    isc = {"enabled": getattr(args, "isc", None), "tol": getattr(args, "isc_tol", None),
           "seed": getattr(args, "isc_seed", None)}
    out = {"dir": str(args.out) if args.out else None,
           "every": getattr(args, "output_every", None),
           "checkpoint_every": getattr(args, "checkpoint_every", None)}
    if integ["reverse_at"] is not None and integ["end_time"] is None:
        integ["end_time"] = 2.0 * integ["reverse_at"]
    pick = lambda d: {k: v for k, v in d.items() if v is not None}  # noqa: E731
    return with_overrides(cfg, scenario=pick(sc), integrator=pick(integ), isc=pick(isc),
                          output=pick(out))


def _write_metadata(outdir: Path, cfg, extra: dict):
    meta = {"version": __version__, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "config_sha256": cfg.hash().hex(), **extra}
    (outdir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    outdir = Path(cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.toml").write_text(render_config(cfg))
    icfg = integrator_config(cfg)
    every = cfg["output"]["every"]
    ck_every = cfg["output"]["checkpoint_every"]
    chash = cfg.hash()
    snapdir = outdir / "snapshots"
    if ck_every:
        snapdir.mkdir(exist_ok=True)
    if cfg.name == "dambreak":
        sc = to_dambreak(cfg)
        pos, vel, phys, report = sc.build(args.workers, None, icfg.density_mode)
    else:
        sc = to_gresho(cfg)
        pos, vel, phys, report = sc.build(cfg["scenario"]["arrangement"], args.workers, None,
                                          icfg.density_mode)
    if report is not None:
        print(f"ISC converged in {report.iterations} iterations "
              f"(final error {report.errors[-1]:.3e})")
    state = init_state(pos, vel, phys, icfg)
    r0, u0 = state.r.copy(), state.u.copy()
    counter = {"n": 0}
    fl = phys.fluid
    fmass = float(phys.mass[fl][0])
    bins = cfg["output"]["entropy_bins"]
    entropy = thermo.EntropySeries()
    leading = []

    def metrics(s, rec):
        p, v = s.positions, s.velocities
        if cfg.name == "dambreak":
            x = bench.leading_edge(p, phys.kind, sc.l_wcw, 0.5 * sc.dr)
            leading.append((s.time, s.time * math.sqrt(sc.g / sc.l_wcw) if sc.g > 0 else s.time, x))
            vf = v[fl]
            entropy.append(s.time, np.sqrt(vf[:, 0] ** 2 + vf[:, 1] ** 2), fmass, bins)
            rec.extra.update(leading_edge=x, s_reduced=entropy.reduced[-1],
                             t_fit=entropy.temperature[-1], s_eq_t=entropy.eq_from_t[-1],
                             s_eq_e=entropy.eq_from_e[-1])
        else:
            vol = phys.mass / s.rho
            rec.extra["gresho_error"] = bench.gresho_error_at(p[fl], v[fl], vol[fl])
            ps = phys.system(p, v, s.rho)
            vf = shepard_filter(ps, phys.kernel, s.table, phys.workers, phys.backend)
            rec.extra["gresho_error_passive"] = bench.gresho_error_at(p[fl], vf[fl], vol[fl])

    def snapshots(s, rec):
        counter["n"] += 1
        if ck_every and (counter["n"] - 1) % ck_every == 0:
            c = checkpoint.from_state(s, phys, icfg.scheme, chash)
            checkpoint.write_checkpoint(snapdir / f"step_{s.total_steps:09d}.ckpt", c)
            if cfg["output"]["snapshot_text"]:
                (snapdir / f"step_{s.total_steps:09d}.txt").write_text(
                    particle_table(s.positions, s.velocities, s.rho, phys.mass, phys.kind))

    status = 0
    with open(outdir / "diagnostics.csv", "w", newline="") as fh:
        writer = DiagnosticsWriter(fh)
        try:
            state, records = run_integrator(state, icfg, phys, [metrics, writer, snapshots],
                                            every, force=args.force)
        except WatchdogTripped as exc:
            print(f"WATCHDOG {exc}", file=sys.stderr)
            state, records, status = exc.state, exc.records, 3
    checkpoint.write_checkpoint(outdir / "final.ckpt",
                                checkpoint.from_state(state, phys, icfg.scheme, chash))
    extra = {"steps": state.total_steps, "workers": args.workers}
    if icfg.reverse_at is not None and status == 0:
        exact = bool(np.array_equal(state.r, r0) and np.array_equal(state.u, -u0))
        dec = (lambda x: x * 2.0**-32) if icfg.arithmetic == "fixpa" else (lambda x: x)  # noqa: E731
        dpos = float(np.max(np.abs(dec(state.r) - dec(r0))))
        dvel = float(np.max(np.abs(dec(state.u) + dec(u0))))
        verdict = "PASS" if exact else "FAIL"
        print(f"{verdict} reversal: max position mismatch {dpos:.3e} m, "
              f"max velocity mismatch {dvel:.3e} m/s")
        extra["reversal"] = verdict
        status = 0 if exact else 1
    if cfg.name == "gresho" and records:
        e = max(r.extra["gresho_error"] for r in records)
        ep = max(r.extra["gresho_error_passive"] for r in records)
        print(f"gresho error {100 * e:.2f}% (passive filter {100 * ep:.2f}%)")
    if cfg.name == "dambreak":
        (outdir / "entropy.csv").write_text(entropy.to_csv())
        rows = ["time,t_star,leading_edge"] + [f"{t!r},{ts!r},{x!r}" for t, ts, x in leading]
        (outdir / "leading_edge.csv").write_text("\n".join(rows) + "\n")
    _write_metadata(outdir, cfg, extra)
    print(f"wrote {outdir / 'diagnostics.csv'}")
    return status


def cmd_isc(args) -> int:
    from .isc import IscError, IscProblem, solve_isc
    from .kernels import make_kernel

    g = (np.arange(args.n) + 0.5) * args.dr
    X, Y = np.meshgrid(g, g, indexing="ij")
    pos = np.column_stack([X.ravel(), Y.ravel()])
    mass = np.full(len(pos), args.rho0 * args.dr ** 2)
    prob = IscProblem(pos, mass, make_kernel(args.kernel, 3.0 * args.dr), args.rho0, args.dr,
                      noise=args.noise, max_iter=args.max_iter, tol=args.isc_tol,
                      seed=args.isc_seed)
    status = 0
    try:
        _, rep = solve_isc(prob)
        print(f"converged in {rep.iterations} iterations")
    except IscError as exc:
        rep = exc.report
        print(f"ISC failed: {exc}")
        status = 1
    for k, e in enumerate(rep.errors):
        print(f"iteration {k}: max relative density error {e:.3e}")
    if args.out:
        lines = ["iteration,max_rel_error"] + [f"{k},{e!r}" for k, e in enumerate(rep.errors)]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return status


def cmd_reverse_check(args) -> int:
    args.scenario = "dambreak"
    cfg = _resolve_config(args, "dambreak")
    sc = to_dambreak(cfg)
    rep = bench.reverse_check(sc, args.arith, args.reverse_at, args.output_every, args.workers)
    print(rep.line())
    if args.out:
        from .output import diagnostics_csv
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "diagnostics.csv").write_text(diagnostics_csv(rep.result.records))
    return 0 if rep.passed else 1


def _snapshot_files(paths):
    files = []
    for p in paths:
        if p.is_dir():
            files.extend(sorted(p.glob("*.ckpt")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"no such snapshot: {p}")
    if not files:
        raise FileNotFoundError("no checkpoint files found")
    return files


def cmd_analyze_entropy(args) -> int:
    series = thermo.EntropySeries()
    last = None
    cks = [checkpoint.read_checkpoint(f) for f in _snapshot_files(args.snapshots)]
    cks.sort(key=lambda c: c.time)
    for c in cks:
        fl = c.kind == 0
        v = c.velocities()[fl]
        speeds = np.sqrt(v[:, 0] ** 2 + v[:, 1] ** 2)
        m = float(c.mass[fl][0])
        series.append(c.time, speeds, m, args.bins)
        last = (speeds, m)
    text = series.to_csv()
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.histogram and last is not None:
        speeds, m = last
        h = thermo.build_histogram(speeds, args.bins, m)
        t = thermo.fit_temperature(speeds, m)
        chi2, dof = thermo.chi_square(h, t)
        args.histogram.write_text(thermo.histogram_csv(h, t))
        print(f"chi-square {chi2:.4g} with {dof} degrees of freedom", file=sys.stderr)
    return 0


def cmd_gresho_table(args) -> int:
    cfg = _resolve_config(args, "gresho")
    if args.end_time is not None:
        cfg = with_overrides(cfg, integrator={"end_time": args.end_time})
    sc = to_gresho(cfg)
    rows = [r for r in args.rows.split(",") if r]
    modes = [m for m in args.modes.split(",") if m]
    for r in rows:
        if r not in bench.GRESHO_ROWS:
            raise ConfigError(f"unknown arrangement {r!r}")
    for m in modes:
        if m not in bench.FILTER_MODES:
            raise ConfigError(f"unknown filter mode {m!r}")
    results = bench.gresho_table(sc, rows, modes, args.output_every, args.workers)
    text = bench.gresho_table_csv(results, modes)
    sys.stdout.write(text)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "gresho_table.csv").write_text(text)
    return 0


COMMANDS = {
    "run": cmd_run,
    "isc": cmd_isc,
    "reverse-check": cmd_reverse_check,
    "analyze-entropy": cmd_analyze_entropy,
    "gresho-table": cmd_gresho_table,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError, checkpoint.CheckpointError, RuntimeError,
            ArithmeticError) as exc:
        print(f"revsph {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
