"""Monte-Carlo memory experiments: configs, shot execution, sweeps and results files."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import hashlib
import json
import logging
import math
import os
import resource
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .circuit import Circuit, build_parallel_circuit, build_serialized_circuit
from .decoder import DecodingGraphs, build_decoding_graphs, decode_shot
from .layout import build_layout, check_distance
from .noise import CRNoiseMode, NoiseParams
from .shots import Frame, NumericHealthError, Program, initialize_codestate, shot_seed
from .statevector import plan_check_blocks, run_shot
from .tableau import calibration_frame, run_shot_tableau

log = logging.getLogger(__name__)

__all__ = [
    "Engine", "ExperimentConfig", "RunResult", "ExperimentError", "SweepResumeError",
    "initialize_codestate", "run_experiment", "sweep", "full_grid", "load_config",
    "write_results", "append_result", "read_results", "write_manifest", "RESULTS_HEADER",
]

RESULTS_HEADER = ("d", "p", "c", "rounds", "shots", "p_L", "stderr", "wall_time_s", "master_seed")
ABORT_LIMIT = 1e-3  # fraction of aborted shots that fails a run


class Engine(str, enum.Enum):
    STATEVECTOR = "statevector"
    TABLEAU = "tableau"


class ExperimentError(RuntimeError):
    """A run that finished but violated a health requirement."""

    def __init__(self, message: str, result: Optional["RunResult"] = None):
        super().__init__(message)
        self.result = result


class SweepResumeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    p: float
    c: float = 0.0
    rounds: Optional[int] = None  # defaults to d
    shots: int = 1000
    master_seed: int = 0
    cr_noise_mode: CRNoiseMode = CRNoiseMode.REPLACE
    engine: Engine = Engine.STATEVECTOR
    schedule: str = "serialized"  # or "parallel" (tableau only at d=5)

    def __post_init__(self):
        check_distance(self.d)
        object.__setattr__(self, "engine", Engine(self.engine))
        object.__setattr__(self, "cr_noise_mode", CRNoiseMode(self.cr_noise_mode))
        if self.rounds is None:
            object.__setattr__(self, "rounds", self.d)
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.shots < 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")
        if self.schedule not in ("serialized", "parallel"):
            raise ValueError(f"schedule must be 'serialized' or 'parallel', got {self.schedule!r}")
        if self.engine is Engine.TABLEAU and self.c != 0.0:
            raise ValueError("the tableau engine needs c = 0")
        self.noise  # validates p and c

    @property
    def noise(self) -> NoiseParams:
        return NoiseParams(self.p, self.c, self.cr_noise_mode)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["engine"] = self.engine.value
        out["cr_noise_mode"] = self.cr_noise_mode.value
        return out

    def config_hash(self, exclude: Sequence[str] = ()) -> str:
        data = {k: v for k, v in self.as_dict().items() if k not in exclude}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_CASTS: dict[str, Callable] = {
    "d": int, "p": float, "c": float, "rounds": int, "shots": int, "master_seed": int,
    "engine": str, "cr_noise_mode": str, "schedule": str,
}


def config_from_mapping(values: Mapping[str, object], base: Optional[Mapping[str, object]] = None) -> ExperimentConfig:
    """Build a config from string or typed values; ``values`` wins over ``base``."""
    merged: dict[str, object] = dict(base or {})
    merged.update({k: v for k, v in values.items() if v is not None})
    unknown = set(merged) - set(_CASTS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "d" not in merged or "p" not in merged:
        raise ValueError("config needs at least d and p")
    typed = {}
    for k, v in merged.items():
        if k == "rounds" and (v is None or v == ""):
            continue
        typed[k] = _CASTS[k](v)
    return ExperimentConfig(**typed)


def load_config(path: Path | str) -> dict[str, str]:
    """Read a flat ``key = value`` file; a leading ``[run]`` header is optional."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    stripped = text.lstrip()
    if not stripped.startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    section = "run" if parser.has_section("run") else parser.sections()[0]
    return dict(parser[section])


@dataclass
class RunResult:
    config: ExperimentConfig
    flips: int
    shots_run: int
    wall_time: float
    aborts: int = 0
    peak_rss_bytes: int = 0
    state_bytes: int = 0
    x_events: int = 0

    @property
    def p_L(self) -> float:
        return self.flips / self.shots_run if self.shots_run else float("nan")

    @property
    def stderr(self) -> float:
        p = self.p_L
        return math.sqrt(p * (1 - p) / self.shots_run) if self.shots_run else float("nan")

    def row(self) -> list[str]:
        cfg = self.config
        return [str(cfg.d), repr(cfg.p), repr(cfg.c), str(cfg.rounds), str(self.shots_run),
                repr(self.p_L), repr(self.stderr), f"{self.wall_time:.3f}", str(cfg.master_seed)]


# Per-process cache so that pool workers compile each configuration once.
_CONTEXT: dict[str, tuple] = {}


def _context(cfg: ExperimentConfig):
    key = cfg.config_hash(exclude=("shots", "master_seed"))
    if key not in _CONTEXT:
        layout = build_layout(cfg.d)
        builder = build_serialized_circuit if cfg.schedule == "serialized" else build_parallel_circuit
        circuit: Circuit = builder(layout, cfg.rounds)
        program = Program.compile(circuit, cfg.noise)
        plan = plan_check_blocks(program) if cfg.engine is Engine.STATEVECTOR else None
        calib: Frame = calibration_frame(circuit)
        graphs: DecodingGraphs = build_decoding_graphs(circuit)
        _CONTEXT.clear()
        _CONTEXT[key] = (circuit, program, plan, calib, graphs)
    return _CONTEXT[key]


def _run_indices(cfg: ExperimentConfig, indices: Sequence[int]) -> list[tuple[int, Optional[int], int]]:
    """(shot index, logical bit or None on abort, X-type event count) per shot."""
    circuit, program, plan, calib, graphs = _context(cfg)
    out = []
    for idx in indices:
        seed = shot_seed(cfg.master_seed, idx)
        try:
            if cfg.engine is Engine.TABLEAU:
                rec = run_shot_tableau(circuit, cfg.noise, calib, seed, program=program)
            else:
                rec = run_shot(circuit, cfg.noise, calib, seed, program=program, plan=plan)
        except NumericHealthError as exc:
            log.warning("shot %d aborted: %s", idx, exc)
            out.append((idx, None, 0))
            continue
        res = decode_shot(rec, graphs)
        out.append((idx, res.logical, res.x_events))
    return out


def _chunks(n: int, size: int) -> list[range]:
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def _peak_rss() -> int:
    own = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    kids = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    return max(own, kids) * 1024  # Linux reports KiB


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   progress: Optional[Callable[[int, int], None]] = None) -> RunResult:
    """Run ``config.shots`` shots and decode them.

    Shot ``i`` always uses the seed derived from (master_seed, i), and outcomes
    are reduced in shot order, so the result does not depend on ``workers``."""
    start = time.perf_counter()
    n = config.shots
    if workers > 1 and n > 1:
        size = max(1, math.ceil(n / (workers * 4)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_indices, config, list(ch)) for ch in _chunks(n, size)]
            outcomes = []
            for fut in futures:
                outcomes.extend(fut.result())
                if progress:
                    progress(len(outcomes), n)
    else:
        outcomes = []
        for ch in _chunks(n, 1 if config.engine is Engine.STATEVECTOR else 256):
            outcomes.extend(_run_indices(config, list(ch)))
            if progress:
                progress(len(outcomes), n)
    outcomes.sort(key=lambda t: t[0])
    done = [t for t in outcomes if t[1] is not None]
    aborts = n - len(done)
    state_bytes = (16 << _context(config)[0].n_registers) if config.engine is Engine.STATEVECTOR else 0
    result = RunResult(
        config=config,
        flips=sum(t[1] for t in done),
        shots_run=len(done),
        wall_time=time.perf_counter() - start,
        aborts=aborts,
        peak_rss_bytes=_peak_rss(),
        state_bytes=state_bytes,
        x_events=sum(t[2] for t in done),
    )
    if aborts > ABORT_LIMIT * n:
        raise ExperimentError(f"{aborts} of {n} shots aborted on numeric health", result)
    return result


def full_grid() -> list[tuple[float, float]]:
    """The full (p, c) grid: p from 1e-3 to 7e-2, c from 0 to 1 in steps of 0.25."""
    ps = [1e-3, 2e-3, 3e-3, 5e-3, 7e-3, 1e-2, 2e-2, 3e-2, 5e-2, 7e-2]
    cs = [0.0, 0.25, 0.5, 0.75, 1.0]
    return [(p, c) for c in cs for p in ps]


def write_results(path: Path | str, results: Iterable[RunResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            w.writerow(r.row())


def append_result(path: Path | str, result: RunResult) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RESULTS_HEADER)
        w.writerow(result.row())
        fh.flush()
        os.fsync(fh.fileno())


def read_results(path: Path | str) -> list[dict[str, float]]:
    """Rows of a results CSV with numeric values."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != RESULTS_HEADER:
            raise ValueError(f"unexpected results header {header}")
        rows = []
        for raw in reader:
            if not raw:
                continue
            row = {}
            for k, v in zip(header, raw):
                row[k] = int(v) if k in ("d", "rounds", "shots", "master_seed") else float(v)
            rows.append(row)
    return rows


def _sweep_hash(base: ExperimentConfig, grid: Sequence[tuple[float, float]]) -> str:
    data = {"base": base.config_hash(exclude=("p", "c")), "grid": [list(map(float, g)) for g in grid]}
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def sweep(grid: Sequence[tuple[float, float]], base: ExperimentConfig, out_csv: Path | str,
          workers: int = 1, progress: Optional[Callable[[str], None]] = None) -> list[dict[str, float]]:
    """Run every (p, c) point, appending each result as soon as it is done.

    Re-running with the same arguments skips points already in ``out_csv``;
    a different base config or grid is refused."""
    grid = [(float(p), float(c)) for p, c in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    out_csv = Path(out_csv)
    state = out_csv.with_name(out_csv.name + ".sweep.json")
    key = _sweep_hash(base, grid)
    if state.exists() and out_csv.exists():
        saved = json.loads(state.read_text())
        if saved.get("hash") != key:
            raise SweepResumeError(
                f"{out_csv} was produced by a different sweep (hash {saved.get('hash')}, now {key})")
        done = {(r["p"], r["c"]) for r in read_results(out_csv)}
    else:
        if out_csv.exists():
            out_csv.unlink()
        state.write_text(json.dumps({"hash": key, "base": base.as_dict(), "grid": grid}, indent=1))
        done = set()
    for p, c in grid:
        if (p, c) in done:
            continue
        cfg = base.replace(p=p, c=c)
        result = run_experiment(cfg, workers=workers)
        append_result(out_csv, result)
        if progress:
            progress(f"p={p:g} c={c:g} p_L={result.p_L:.4g} +- {result.stderr:.2g}")
    return read_results(out_csv)


def code_version() -> str:
    from . import __version__

    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(out_dir: Path | str, command: str, resolved: Mapping[str, object],
                   extra: Optional[Mapping[str, object]] = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv,
        "config": dict(resolved),
        "code_version": code_version(),
        "python": sys.version.split()[0],
    }
    if extra:
        manifest.update(extra)
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path
