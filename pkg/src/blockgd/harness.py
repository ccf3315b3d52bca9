"""Benchmark harness: repeated seeded runs, aggregate tables, CSV export.

Runs every configured (method, dimension, repetition) combination with seed
``base_seed + repetition``, averages iteration counts and wall times over the
repetitions, and renders a method-by-dimension table.  A cell whose runs did
not all converge renders as ``--``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfigFileError,
    EvaluationError,
    InvalidConfigError,
    NumericalInconsistencyError,
)
from .problems import make_problem
from .solvers import METHODS, SolverConfig, SolveResult, solve

CSV_HEADER = "method,problem,n,q,delta,seed,iterations,final_residual,wall_time_s,converged"
TRACE_HEADER = "iteration,residual_norm,cumulative_seconds"


@dataclass(frozen=True)
class MethodSpec:
    """One benchmarked method with its block size and relaxation."""

    name: str
    q: int | None = None
    delta: float = 1.0

    def __post_init__(self):
        if self.name not in METHODS:
            raise InvalidConfigError(f"method must be one of {METHODS}, got {self.name!r}")
        if self.name != "gd" and self.q is None:
            raise InvalidConfigError(f"method {self.name!r} needs a block size q")

    @property
    def label(self) -> str:
        if self.name == "gd":
            return "gd" if self.delta == 1.0 else f"gd (delta={self.delta:g})"
        return f"{self.name} (q={self.q}, delta={self.delta:g})"

    def solver_config(self, tol, max_iter, seed) -> SolverConfig:
        return SolverConfig(method=self.name, q=self.q, delta=self.delta,
                            tol=tol, max_iter=max_iter, seed=seed)


@dataclass(frozen=True)
class ExperimentConfig:
    """A benchmark campaign over one problem family."""

    problem: str
    dimensions: tuple[int, ...]
    methods: tuple[MethodSpec, ...]
    repetitions: int = 10
    tol: float = 1e-6
    max_iter: int = 200000
    base_seed: int = 0
    csv_path: str | None = None
    table_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(int(n) for n in self.dimensions))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.dimensions or any(n < 1 for n in self.dimensions):
            raise InvalidConfigError(f"dimensions must be positive, got {self.dimensions}")
        if not self.methods:
            raise InvalidConfigError("at least one method is required")
        if self.repetitions < 1:
            raise InvalidConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        if not self.tol > 0:
            raise InvalidConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidConfigError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass(frozen=True)
class RunRecord:
    """Outcome of a single seeded run."""

    method: str
    problem: str
    n: int
    q: int | None
    delta: float
    seed: int
    iterations: int
    final_residual: float
    wall_time_s: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class Cell:
    """Aggregate of the repetitions for one (method, dimension) pair."""

    mean_iterations: float | None
    mean_wall_time_s: float | None
    all_converged: bool


@dataclass
class BenchmarkReport:
    """All run records of a campaign plus per-cell aggregates."""

    config: ExperimentConfig
    records: list[RunRecord] = field(default_factory=list)

    def runs(self, spec: MethodSpec, n: int) -> list[RunRecord]:
        return [r for r in self.records if r.method == spec.name and r.q == spec.q
                and r.delta == spec.delta and r.n == n]

    def cell(self, spec: MethodSpec, n: int) -> Cell:
        runs = self.runs(spec, n)
        converged = [r for r in runs if r.converged]
        ok = bool(runs) and len(converged) == len(runs)
        mean_it = float(np.mean([r.iterations for r in converged])) if converged else None
        mean_wall = float(np.mean([r.wall_time_s for r in converged])) if converged else None
        return Cell(mean_it, mean_wall, ok)


def run_experiment(config: ExperimentConfig) -> BenchmarkReport:
    """Run every configured combination sequentially in config order.

    Problem construction happens outside the timed region (the solver times
    its own loop).  A run that raises an evaluation error is recorded as
    failed and the campaign continues.
    """
    report = BenchmarkReport(config)
    for spec in config.methods:
        for n in config.dimensions:
            problem = make_problem(config.problem, n)
            for rep in range(config.repetitions):
                seed = config.base_seed + rep
                solver_config = spec.solver_config(config.tol, config.max_iter, seed)
                try:
                    result = solve(problem, solver_config)
                except (EvaluationError, NumericalInconsistencyError) as exc:
                    report.records.append(RunRecord(
                        spec.name, config.problem, n, spec.q, spec.delta, seed,
                        iterations=0, final_residual=float("nan"), wall_time_s=0.0,
                        converged=False, error=str(exc)))
                    continue
                report.records.append(RunRecord(
                    spec.name, config.problem, n, spec.q, spec.delta, seed,
                    iterations=result.iterations,
                    final_residual=result.final_residual,
                    wall_time_s=result.wall_time_s,
                    converged=result.converged))
    return report


def export_csv(report: BenchmarkReport, path) -> None:
    """Write one row per run; floats in shortest round-trip decimal, LF endings."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in report.records:
            fields = (
                r.method,
                r.problem,
                str(r.n),
                "" if r.q is None else str(r.q),
                repr(float(r.delta)),
                str(r.seed),
                str(r.iterations),
                repr(float(r.final_residual)),
                repr(float(r.wall_time_s)),
                "true" if r.converged else "false",
            )
            fh.write(",".join(fields) + "\n")


def export_trace(result: SolveResult, path) -> None:
    """Write the residual-versus-time trace of one run at the recorded stride."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        for it, seconds in zip(result.sample_iterations, result.sample_seconds):
            norm = float(result.residual_norms[int(it)])
            fh.write(f"{int(it)},{norm!r},{float(seconds)!r}\n")


def _format_mean_iterations(runs) -> str:
    values = [r.iterations for r in runs]
    mean = float(np.mean(values))
    if all(v == values[0] for v in values):
        return str(values[0])
    return f"{mean:.1f}"


def compare_table(report: BenchmarkReport) -> str:
    """Render the campaign as a method-by-dimension text table.

    Each method occupies an IT row and a CPU row; cells whose repetitions did
    not all converge render as ``--``.  Row and column order follow the
    experiment configuration.
    """
    config = report.config
    if not report.records:
        raise InvalidConfigError("cannot render a table for an empty report")
    header = ["method", ""] + [f"n={n}" for n in config.dimensions]
    rows = [header]
    for spec in config.methods:
        it_row = [spec.label, "IT"]
        cpu_row = ["", "CPU"]
        for n in config.dimensions:
            cell = report.cell(spec, n)
            if cell.all_converged:
                it_row.append(_format_mean_iterations(report.runs(spec, n)))
                cpu_row.append(f"{cell.mean_wall_time_s:.4f}")
            else:
                it_row.append("--")
                cpu_row.append("--")
        rows.append(it_row)
        rows.append(cpu_row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        cells += [row[i].rjust(widths[i]) for i in range(2, len(header))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Config files: [experiment] section plus one [method] section per method,
# `key = value` lines, blank lines and # comments allowed.
# ---------------------------------------------------------------------------

_EXPERIMENT_KEYS = {"problem", "dimensions", "repetitions", "tol", "max_iter",
                    "base_seed", "csv", "table"}
_METHOD_KEYS = {"name", "q", "delta"}


def _parse_value(value, kind, line_no, line):
    try:
        return kind(value)
    except ValueError:
        raise ConfigFileError(f"expected {kind.__name__}, got {value!r}", line_no, line) from None


def load_experiment_config(path) -> ExperimentConfig:
    """Parse an experiment config file (see the shipped configs/ examples)."""
    with open(path, "r", encoding="ascii") as fh:
        raw_lines = fh.readlines()
    experiment: dict = {}
    methods: list[dict] = []
    section = None
    seen_experiment = False
    for line_no, raw in enumerate(raw_lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[experiment]":
            if seen_experiment:
                raise ConfigFileError("duplicate [experiment] section", line_no, raw)
            seen_experiment = True
            section = "experiment"
            continue
        if line == "[method]":
            methods.append({"_line": line_no})
            section = "method"
            continue
        if line.startswith("["):
            raise ConfigFileError(f"unknown section {line}", line_no, raw)
        if "=" not in line:
            raise ConfigFileError("expected 'key = value'", line_no, raw)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if section == "experiment":
            if key not in _EXPERIMENT_KEYS:
                raise ConfigFileError(f"unknown experiment key {key!r}", line_no, raw)
            experiment[key] = (value, line_no, raw)
        elif section == "method":
            if key not in _METHOD_KEYS:
                raise ConfigFileError(f"unknown method key {key!r}", line_no, raw)
            methods[-1][key] = (value, line_no, raw)
        else:
            raise ConfigFileError("key outside any section", line_no, raw)

    if not seen_experiment:
        raise ConfigFileError("missing [experiment] section")
    for key in ("problem", "dimensions"):
        if key not in experiment:
            raise ConfigFileError(f"missing experiment key {key!r}")
    if not methods:
        raise ConfigFileError("at least one [method] section is required")

    value, line_no, raw = experiment["dimensions"]
    tokens = [tok for tok in value.replace(",", " ").split() if tok]
    dimensions = [_parse_value(tok, int, line_no, raw) for tok in tokens]

    def experiment_value(key, kind, default):
        if key not in experiment:
            return default
        value, line_no, raw = experiment[key]
        return _parse_value(value, kind, line_no, raw)

    specs = []
    for entry in methods:
        decl_line = entry.pop("_line")
        if "name" not in entry:
            raise ConfigFileError("method section missing 'name'", decl_line, "[method]")
        name = entry["name"][0]
        q = _parse_value(entry["q"][0], int, *entry["q"][1:]) if "q" in entry else None
        delta = _parse_value(entry["delta"][0], float, *entry["delta"][1:]) if "delta" in entry else 1.0
        try:
            specs.append(MethodSpec(name=name, q=q, delta=delta))
        except InvalidConfigError as exc:
            raise ConfigFileError(str(exc), decl_line, "[method]") from exc

    try:
        return ExperimentConfig(
            problem=experiment["problem"][0],
            dimensions=tuple(dimensions),
            methods=tuple(specs),
            repetitions=experiment_value("repetitions", int, 10),
            tol=experiment_value("tol", float, 1e-6),
            max_iter=experiment_value("max_iter", int, 200000),
            base_seed=experiment_value("base_seed", int, 0),
            csv_path=experiment["csv"][0] if "csv" in experiment else None,
            table_path=experiment["table"][0] if "table" in experiment else None,
        )
    except InvalidConfigError as exc:
        raise ConfigFileError(str(exc)) from exc
