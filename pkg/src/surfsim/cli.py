"""Command-line entry point.

Exit status is 0 on success, 1 for usage errors and 2 for runtime failures.
The default output root comes from ``SURFSIM_OUT`` (falling back to
``./surfsim_out``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

OUT_ENV = "SURFSIM_OUT"
DEFAULT_A, DEFAULT_XI, DEFAULT_ALPHA = 6.5e5, 2.92, 0.872


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "surfsim_out"))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from exc


def _add_run_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", type=Path, help="flat key = value run config")
    sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key (repeatable)")
    sp.add_argument("--d", type=int)
    sp.add_argument("--p", type=float)
    sp.add_argument("--c", type=float)
    sp.add_argument("--rounds", type=int)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--seed", dest="master_seed", type=int)
    sp.add_argument("--engine", choices=["statevector", "tableau"])
    sp.add_argument("--cr-noise-mode", dest="cr_noise_mode", choices=["replace", "stack"])
    sp.add_argument("--schedule", choices=["serialized", "parallel"])
    sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sp.add_argument("--out", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="surfsim", description="Surface code memory experiments under coherent noise.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("layout", help="print the stabilizer table")
    sp.add_argument("--d", type=int, default=5)

    sp = sub.add_parser("circuit", help="dump the syndrome-extraction circuit")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--schedule", choices=["parallel", "serialized"], default="parallel")
    sp.add_argument("--no-readout", action="store_true", help="omit the final data readout")
    sp.add_argument("--out", type=Path, help="write to this file instead of stdout")

    sp = sub.add_parser("run", help="run one experiment")
    _add_run_flags(sp)

    sp = sub.add_parser("sweep", help="run a (p, c) grid, resumable")
    _add_run_flags(sp)
    sp.add_argument("--ps", type=_floats, help="p values, comma or space separated")
    sp.add_argument("--cs", type=_floats, help="c values")
    sp.add_argument("--full-grid", action="store_true", help="p from 1e-3 to 7e-2, c from 0 to 1 by 0.25")

    sp = sub.add_parser("fit", help="fit a results CSV and render figures")
    sp.add_argument("results", type=Path)
    sp.add_argument("--fit-range", type=float, nargs=2, metavar=("P_MIN", "P_MAX"), default=(1e-3, 3e-3))
    sp.add_argument("--weighted", action="store_true", help="inverse-variance weights in log space")
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("lifetime", help="logical lifetime grid and break-even contour")
    sp.add_argument("--A", dest="A", type=float, default=DEFAULT_A)
    sp.add_argument("--xi", type=float, default=DEFAULT_XI)
    sp.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    sp.add_argument("--d", type=int, default=5)
    sp.add_argument("--steps", type=int, default=11, help="steps per syndrome round")
    sp.add_argument("--x-min", type=float, default=1e-4)
    sp.add_argument("--x-max", type=float, default=2e-2)
    sp.add_argument("--n", type=int, default=120)
    sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("validate", help="schedule and engine equivalence checks")
    sp.add_argument("--d", type=int, nargs="+", default=[3, 5])
    sp.add_argument("--shots", type=int, default=50, help="shots for the engine cross-check at d=3")
    sp.add_argument("--p", type=float, default=1e-2)
    return parser


def _resolve_config(args) -> "ExperimentConfig":
    from .experiment import config_from_mapping, load_config

    base = load_config(args.config) if args.config else {}
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        base[k.strip()] = v.strip()
    flags = {k: getattr(args, k) for k in ("d", "p", "c", "rounds", "shots", "master_seed", "engine",
                                           "cr_noise_mode", "schedule")}
    if args.command == "sweep":
        base.setdefault("p", "0")
        base.setdefault("c", "0")
    try:
        return config_from_mapping(flags, base)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _progress(done: int, total: int) -> None:
    if sys.stderr.isatty():
        print(f"\r{done}/{total} shots", end="" if done < total else "\n", file=sys.stderr, flush=True)


def cmd_layout(args) -> int:
    from .layout import build_layout

    print(build_layout(args.d).table())
    return 0


def cmd_circuit(args) -> int:
    from .circuit import build_parallel_circuit, build_serialized_circuit
    from .layout import build_layout

    builder = build_parallel_circuit if args.schedule == "parallel" else build_serialized_circuit
    text = builder(build_layout(args.d), args.rounds, readout=not args.no_readout).dump()
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    from .experiment import run_experiment, write_manifest, write_results

    cfg = _resolve_config(args)
    out = args.out or _default_out() / "run"
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg, workers=args.workers, progress=_progress)
    write_results(out / "results.csv", [result])
    write_manifest(out, "run", cfg.as_dict(), {
        "workers": args.workers, "aborts": result.aborts, "flips": result.flips,
        "peak_rss_bytes": result.peak_rss_bytes, "state_bytes": result.state_bytes,
        "config_hash": cfg.config_hash(),
    })
    print(f"d={cfg.d} p={cfg.p:g} c={cfg.c:g} rounds={cfg.rounds} shots={result.shots_run} "
          f"p_L={result.p_L:.6g} stderr={result.stderr:.3g} aborts={result.aborts} "
          f"wall={result.wall_time:.1f}s -> {out / 'results.csv'}")
    return 0


def cmd_sweep(args) -> int:
    from .experiment import full_grid, sweep, write_manifest

    cfg = _resolve_config(args)
    if args.full_grid:
        grid = full_grid()
    else:
        ps = args.ps if args.ps is not None else [cfg.p]
        cs = args.cs if args.cs is not None else [cfg.c]
        grid = [(p, c) for c in cs for p in ps]
    if not grid:
        raise UsageError("sweep grid is empty")
    out = args.out or _default_out() / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, "sweep", cfg.as_dict(), {"grid": grid, "workers": args.workers})
    rows = sweep(grid, cfg, out / "results.csv", workers=args.workers, progress=lambda m: print(m, flush=True))
    print(f"{len(rows)} points -> {out / 'results.csv'}")
    return 0


def cmd_fit(args) -> int:
    from .analysis import FitError, emit_outputs, fit_effective_alpha, fit_power_law, fit_report, group_by_c
    from .experiment import read_results, write_manifest

    rows = read_results(args.results)
    by_c = group_by_c(rows)
    if 0.0 not in by_c:
        raise FitError("results contain no c = 0 series")
    fit = fit_power_law(by_c[0.0], tuple(args.fit_range), weighted=args.weighted)
    model = fit_effective_alpha(by_c, fit) if len(by_c) >= 3 else None
    out = args.out or _default_out() / "fit"
    emit_outputs(rows, fit, model, None, out)
    write_manifest(out, "fit", {"results": str(args.results), "fit_range": list(args.fit_range),
                                "weighted": args.weighted})
    sys.stdout.write(fit_report(fit, model))
    return 0


def cmd_lifetime(args) -> int:
    import numpy as np

    from .analysis import break_even, emit_outputs, lifetime_grid
    from .experiment import write_manifest

    xs = np.geomspace(args.x_min, args.x_max, args.n)
    cs = np.linspace(0.0, 1.0, 41)
    grid = lifetime_grid(xs, cs, args.A, args.xi, args.alpha, args.d, args.steps)
    out = args.out or _default_out() / "lifetime"
    emit_outputs([], None, None, grid, out)
    write_manifest(out, "lifetime", {k: getattr(args, k) for k in ("A", "xi", "alpha", "d", "steps",
                                                                    "x_min", "x_max", "n")})
    print("c     break-even t_g/t_c")
    for c in (0.0, 0.25, 0.5, 0.75, 1.0):
        print(f"{c:<5g} {break_even(c, args.A, args.xi, args.alpha, args.d, args.steps):.6g}")
    return 0


def cmd_validate(args) -> int:
    from .circuit import build_parallel_circuit, build_serialized_circuit, validate_schedules
    from .layout import build_layout
    from .noise import NoiseParams
    from .shots import Program, shot_seed
    from .statevector import run_shot
    from .tableau import calibration_frame, run_shot_tableau

    ok = True
    for d in args.d:
        layout = build_layout(d)
        report = validate_schedules(build_parallel_circuit(layout, 1), build_serialized_circuit(layout, 1))
        print(f"d={d} {report}")
        ok &= bool(report)
    circuit = build_serialized_circuit(build_layout(3), 3)
    params = NoiseParams(args.p)
    program = Program.compile(circuit, params)
    calib = calibration_frame(circuit)
    mismatches = 0
    for i in range(args.shots):
        seed = shot_seed(0, i)
        a = run_shot(circuit, params, calib, seed, program=program)
        b = run_shot_tableau(circuit, params, calib, seed, program=program)
        mismatches += a != b
    print(f"engine cross-check d=3 p={args.p:g}: {args.shots - mismatches}/{args.shots} identical records")
    ok &= mismatches == 0
    return 0 if ok else 2


COMMANDS = {
    "layout": cmd_layout, "circuit": cmd_circuit, "run": cmd_run, "sweep": cmd_sweep,
    "fit": cmd_fit, "lifetime": cmd_lifetime, "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"surfsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
