"""
This module provides the pre-configured experiments and the validation suites of a field model.

Experiments are grids of independent cells (method × stepsize × horizon). `ExperimentRunner` executes the
cells in a fixed order, or in a process pool when `workers > 1`; in both cases the results are merged in
cell order, so the files written by two runs of the same configuration are identical byte for byte.

Classes:
    - ExperimentConfig: A Pydantic model with the experiment grid, the solver and the oracle settings.
    - ConvergenceRow: One row of the convergence table.
    - LongtimeRow: One row of the long-time summary.
    - ExactnessReport: Monomial exactness of one Gauss-Legendre rule.
    - ValidationReport: The combined result of the validation suites.
    - ExperimentRunner: Runs the experiments and writes their CSV files and manifests.

Functions:
    - convergence_orders: Observed orders of accuracy between consecutive stepsizes.
    - quadrature_exactness: Check every supported rule on monomials.
    - validate_model: Run the consistency, invariance and quadrature suites against a model.

Files written to `ExperimentConfig.out_dir`:
    - `convergence.csv`: method, T, h, global_error, observed_order, status, steps, max_fp_iters.
    - `longtime_{method}_h{h}_T{T}.csv`: one trajectory file per cell, see `patisson_pusher.output`.
    - `longtime_summary.csv`: max energy and momentum drift per cell.
    - `manifest.txt`: configuration, package version, oracle settings and per-cell status.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from opentelemetry import trace
from opentelemetry.trace import Tracer
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from patisson_pusher.core import (
    DEFAULT_FD_STEP,
    DEFAULT_FD_TOLERANCE,
    ConsistencyReport,
    FieldModel,
    ParticleState,
    builtin_model,
    consistency_check,
)
from patisson_pusher.diagnostics import (
    ALIGNMENT_TOL,
    INVARIANCE_TOL,
    InvarianceReport,
    OracleSettings,
    Quantity,
    TrajectoryRecord,
    combine_oracle_passes,
    global_error,
    invariance_check,
    max_drift,
    oracle_pass,
)
from patisson_pusher.errors import ConfigurationError, ErrorCode, ErrorSchema, PusherError
from patisson_pusher.integrators import SolverParams, integrate, step_count
from patisson_pusher.methods import Method, MethodSpec, ModelName
from patisson_pusher.output import format_number, write_manifest, write_rows_csv, write_trajectory_csv
from patisson_pusher.quadrature import SUPPORTED_STAGES, gauss_legendre_rule, monomial_error
from patisson_pusher.tracing import cell_span_decorator
from patisson_pusher.types import CellKey, Horizon, Stepsize, Vec3

PACKAGE = "patisson-pusher"
OK = "ok"

PAPER_METHODS = (Method.BORIS, Method.EP1, Method.EP2, Method.EP3)
PAPER_X0 = (0.0, 1.0, 0.1)
PAPER_V0 = (0.09, 0.05, 0.20)
CONVERGENCE_STEPSIZES = tuple(2.0**-i for i in range(6, 10))
CONVERGENCE_HORIZONS = (10.0, 100.0, 1000.0)
LONGTIME_STEPSIZES = (0.05, 0.1)
LONGTIME_HORIZONS = {"ci": 1e3, "full": 1e4}

DEFAULT_PROBES = (
    (0.0, 1.0, 0.1),
    (0.6, -0.8, 0.3),
    (-1.2, 0.5, -0.7),
    (0.3, 0.4, 2.0),
)
DEFAULT_TAUS = (0.0, 0.7, math.pi / 2, -1.3)
EXACTNESS_TOL = 1e-14
INEXACTNESS_FLOOR = 1e-6

CONVERGENCE_COLUMNS = {
    "method": "method",
    "T": "horizon",
    "h": "h",
    "global_error": "global_error",
    "observed_order": "observed_order",
    "status": "status",
    "steps": "steps",
    "max_fp_iters": "max_fp_iters",
}
LONGTIME_COLUMNS = {
    "method": "method",
    "T": "horizon",
    "h": "h",
    "max_energy_drift": "max_energy_drift",
    "max_momentum_drift": "max_momentum_drift",
    "status": "status",
    "steps": "steps",
    "max_fp_iters": "max_fp_iters",
    "file": "file",
}


def package_version() -> str:
    try:
        return metadata.version(PACKAGE)
    except metadata.PackageNotFoundError:
        return "0+unknown"


class ExperimentConfig(BaseModel):
    """
    Configuration of an experiment grid.

    Attributes:
        model (ModelName): The built-in field model.
        field_strength (float): b of the `constant-B` model.
        methods (tuple[Method, ...]): Methods to run, in output order.
        stepsizes (tuple[Stepsize, ...]): Positive stepsizes; cells run from the largest to the smallest.
        horizons (tuple[Horizon, ...]): Positive final times T; every run starts at t = 0.
        sample_every (Optional[int]): Recording stride. None records the final state only in convergence
            runs and about once per unit time (⌈1/h⌉ steps) in long-time runs.
        solver (SolverParams): Fixed-point parameters of the implicit methods.
        oracle (OracleSettings): Reference oracle settings, written to the manifest.
        x0 (tuple[float, float, float]): Initial position.
        v0 (tuple[float, float, float]): Initial velocity.
        out_dir (Path): Directory for CSV files and the manifest.
        workers (int): Number of worker processes, 1 runs the cells in this process.
    """

    model_config = ConfigDict(frozen=True)

    model: ModelName = ModelName.PAPER_SEC6
    field_strength: float = 1.0
    methods: tuple[Method, ...] = Field(default=PAPER_METHODS, min_length=1)
    stepsizes: tuple[Stepsize, ...] = Field(default=CONVERGENCE_STEPSIZES, min_length=1)
    horizons: tuple[Horizon, ...] = Field(default=CONVERGENCE_HORIZONS, min_length=1)
    sample_every: Optional[int] = Field(default=None, ge=1)
    solver: SolverParams = SolverParams()
    oracle: OracleSettings = OracleSettings()
    x0: tuple[float, float, float] = PAPER_X0
    v0: tuple[float, float, float] = PAPER_V0
    out_dir: Path = Path("results")
    workers: int = Field(default=1, ge=1)

    @field_validator("stepsizes", "horizons")
    @classmethod
    def _check_positive(cls, values: tuple[float, ...], info: ValidationInfo) -> tuple[float, ...]:
        for value in values:
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{info.field_name} must be positive and finite, got {value}")
        if len(set(values)) != len(values):
            raise ValueError(f"{info.field_name} contains duplicates: {values}")
        return values

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, methods: tuple[Method, ...]) -> tuple[Method, ...]:
        if len(set(methods)) != len(methods):
            raise ValueError(f"methods contains duplicates: {[m.value for m in methods]}")
        return methods

    @field_validator("x0", "v0")
    @classmethod
    def _check_finite(cls, values: tuple[float, float, float], info: ValidationInfo) -> tuple[float, ...]:
        if not all(math.isfinite(value) for value in values):
            raise ValueError(f"{info.field_name} must be finite, got {values}")
        return values

    @classmethod
    def paper_convergence(cls, **overrides: Any) -> "ExperimentConfig":
        """Four methods, T ∈ {10, 100, 1000} and h = 2⁻ⁱ for i = 6..9 on `paper-sec6`."""
        return cls(**overrides)

    @classmethod
    def paper_longtime(cls, profile: str = "ci", **overrides: Any) -> "ExperimentConfig":
        """
        Four methods, h ∈ {0.05, 0.1} on `paper-sec6`.

        Args:
            profile (str): `ci` runs to T = 10³, `full` to T = 10⁴

        Raises:
            ConfigurationError: unknown profile
        """
        if profile not in LONGTIME_HORIZONS:
            raise ConfigurationError(
                ErrorSchema(
                    error=ErrorCode.INVALID_PARAMETERS,
                    extra=f"profile={profile!r}, expected one of {list(LONGTIME_HORIZONS)}",
                )
            )
        settings: dict[str, Any] = {
            "stepsizes": LONGTIME_STEPSIZES,
            "horizons": (LONGTIME_HORIZONS[profile],),
        }
        settings.update(overrides)
        return cls(**settings)

    @property
    def initial_state(self) -> ParticleState:
        return ParticleState.from_components(self.x0, self.v0)

    def build_model(self) -> FieldModel:
        return builtin_model(self.model, self.field_strength)


@dataclass(frozen=True)
class Cell:
    method: Method
    h: Stepsize
    horizon: Horizon

    @property
    def key(self) -> CellKey:
        return (self.method.value, self.h, self.horizon)

    @property
    def spec(self) -> MethodSpec:
        return MethodSpec(kind=self.method, h=self.h)


class CellOutcome(BaseModel):
    method: Method
    h: Stepsize
    horizon: Horizon
    status: str = OK
    steps: int = 0
    max_fp_iters: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OK

    @property
    def key(self) -> CellKey:
        return (self.method.value, self.h, self.horizon)


class ConvergenceRow(CellOutcome):
    global_error: Optional[float] = None
    observed_order: Optional[float] = None


class LongtimeRow(CellOutcome):
    max_energy_drift: Optional[float] = None
    max_momentum_drift: Optional[float] = None
    file: Optional[str] = None


class RunManifest(BaseModel):
    package: str = PACKAGE
    version: str = Field(default_factory=package_version)
    experiment: str
    config: dict[str, Any]
    cells: dict[str, str] = Field(default_factory=dict)


def convergence_orders(
    errors: Sequence[Optional[float]], stepsizes: Sequence[Stepsize]
) -> list[Optional[float]]:
    """
    Return log(eᵢ/eᵢ₊₁) / log(hᵢ/hᵢ₊₁) for consecutive pairs, which is log₂(e(h)/e(h/2)) when h halves.

    A pair with a missing or zero error, or with equal stepsizes, has no order.
    """
    orders: list[Optional[float]] = []
    for (e_coarse, e_fine), (h_coarse, h_fine) in zip(
        zip(errors, errors[1:]), zip(stepsizes, stepsizes[1:]), strict=True
    ):
        if not e_coarse or not e_fine or h_coarse == h_fine:
            orders.append(None)
            continue
        orders.append(math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine))
    return orders


def _cells(config: ExperimentConfig) -> list[Cell]:
    stepsizes = sorted(config.stepsizes, reverse=True)
    return [
        Cell(method=method, h=h, horizon=horizon)
        for method in config.methods
        for horizon in config.horizons
        for h in stepsizes
    ]


def _failure_status(error: PusherError) -> str:
    return error.error_schema.describe()


def _oracle_end(config: ExperimentConfig, cell: Cell) -> float:
    """
    Return the time a cell actually reaches: its horizon, or t0 + ⌊(T − t0)/h⌋·h when h does not divide the
    span. Cells that reach the same time share one reference trajectory.
    """
    t0 = config.initial_state.t
    end = t0 + step_count(cell.horizon - t0, cell.h) * cell.h
    if abs(end - cell.horizon) <= ALIGNMENT_TOL * max(1.0, abs(cell.horizon)):
        return cell.horizon
    return end


def _oracle_pass_task(config: ExperimentConfig, t_end: float, halvings: int) -> TrajectoryRecord:
    return oracle_pass(config.initial_state, config.build_model(), t_end, config.oracle, halvings)


def _convergence_cell(config: ExperimentConfig, cell: Cell, oracle: TrajectoryRecord) -> ConvergenceRow:
    """Measure the global error at the time the cell reaches, see `_oracle_end`."""
    row = ConvergenceRow(method=cell.method, h=cell.h, horizon=cell.horizon)
    if not oracle.ok:
        return row.model_copy(update={"status": f"oracle failed: {oracle.failure.describe()}"})

    sample_every = config.sample_every or max(1, step_count(cell.horizon, cell.h))
    try:
        record = integrate(
            config.initial_state, config.build_model(), cell.spec, config.solver, cell.horizon, sample_every
        )
        update: dict[str, Any] = {"steps": record.steps, "max_fp_iters": record.max_fp_iters}
        if record.ok:
            update["global_error"] = global_error(record, oracle)
        else:
            update["status"] = record.failure.describe()
    except PusherError as e:
        update = {"status": _failure_status(e)}
    return row.model_copy(update=update)


def longtime_sample_every(h: Stepsize) -> int:
    """About one sample per unit time: ⌈1/h⌉ steps, with 1/h rounded first so 1/0.05 stays 20."""
    return max(1, math.ceil(round(1.0 / h, 9)))


def longtime_file_name(cell: Cell) -> str:
    return f"longtime_{cell.method.value}_h{cell.h:g}_T{cell.horizon:g}.csv"


def _longtime_cell(config: ExperimentConfig, cell: Cell) -> LongtimeRow:
    row = LongtimeRow(method=cell.method, h=cell.h, horizon=cell.horizon)
    sample_every = config.sample_every or longtime_sample_every(cell.h)
    try:
        record = integrate(
            config.initial_state, config.build_model(), cell.spec, config.solver, cell.horizon, sample_every
        )
    except PusherError as e:
        return row.model_copy(update={"status": _failure_status(e)})

    file_name = longtime_file_name(cell)
    path = config.out_dir / file_name
    with path.open("w", encoding="utf-8", newline="") as stream:
        write_trajectory_csv(record, stream)

    return row.model_copy(
        update={
            "status": OK if record.ok else record.failure.describe(),
            "steps": record.steps,
            "max_fp_iters": record.max_fp_iters,
            "max_energy_drift": max_drift(record, Quantity.ENERGY),
            "max_momentum_drift": max_drift(record, Quantity.MOMENTUM) if record.has_momentum else None,
            "file": file_name,
        }
    )


def _run_in_worker(experiment: Optional[str], func: Callable[..., Any], *args: Any) -> Any:
    if experiment is not None:
        func = cell_span_decorator(trace.get_tracer(__name__), experiment)(func)
    return func(*args)


class ExactnessReport(BaseModel):
    stages: int
    exact_error: float
    inexact_error: float
    passed: bool


class ValidationReport(BaseModel):
    model: str
    consistency: ConsistencyReport
    invariance: Optional[InvarianceReport] = None
    quadrature: list[ExactnessReport]

    @property
    def passed(self) -> bool:
        return not self.failures()

    def failures(self) -> list[str]:
        failures = []
        if not self.consistency.passed:
            failures.append(
                f"consistency: force residual {self.consistency.force_residual!r}, "
                f"curl residual {self.consistency.curl_residual!r} (tolerance {self.consistency.tolerance!r})"
            )
        if self.invariance is not None and not self.invariance.passed:
            failures.append(
                f"invariance: potential deviation {self.invariance.potential_deviation!r}, "
                f"vector potential deviation {self.invariance.vector_potential_deviation!r} "
                f"(tolerance {self.invariance.tolerance!r})"
            )
        for rule in self.quadrature:
            if not rule.passed:
                failures.append(
                    f"quadrature s={rule.stages}: exact error {rule.exact_error!r}, "
                    f"degree {2 * rule.stages} error {rule.inexact_error!r}"
                )
        return failures


def quadrature_exactness() -> list[ExactnessReport]:
    """Check that the s-point rule is exact up to degree 2s − 1 and inexact at degree 2s."""
    reports = []
    for s in SUPPORTED_STAGES:
        rule = gauss_legendre_rule(s)
        exact_error = max(monomial_error(rule, k) for k in range(rule.degree + 1))
        inexact_error = monomial_error(rule, rule.degree + 1)
        reports.append(
            ExactnessReport(
                stages=s,
                exact_error=exact_error,
                inexact_error=inexact_error,
                passed=exact_error <= EXACTNESS_TOL and inexact_error > INEXACTNESS_FLOOR,
            )
        )
    return reports


def validate_model(
    model: FieldModel,
    probes: Optional[Sequence[Vec3 | Sequence[float]]] = None,
    fd_step: float = DEFAULT_FD_STEP,
    tolerance: float = DEFAULT_FD_TOLERANCE,
    taus: Sequence[float] = DEFAULT_TAUS,
) -> ValidationReport:
    """
    Run every validation suite against a model.

    The invariance suite runs only for models with a vector potential and a symmetry generator.

    Raises:
        DomainError: a probe hits a model singularity
    """
    points = DEFAULT_PROBES if probes is None else probes
    invariance = None
    if model.has_vector_potential and model.symmetry is not None:
        invariance = invariance_check(model, model.symmetry, points, taus, INVARIANCE_TOL)
    return ValidationReport(
        model=model.name,
        consistency=consistency_check(model, points, fd_step, tolerance),
        invariance=invariance,
        quadrature=quadrature_exactness(),
    )


@dataclass
class ExperimentRunner:
    """
    Runs the pre-configured experiments of a configuration.

    Attributes:
        config (ExperimentConfig): The experiment grid.
        tracer (Tracer): The tracer of the cell spans in this process; worker processes use the global
            tracer provider of the worker.
        logger_object (Optional[logging.Logger]): The logger instance to use for logging, default is `None`.
        logging_level (int): The logging level for the logger, default is `logging.DEBUG`.
    """

    config: ExperimentConfig
    tracer: Tracer = field(default_factory=lambda: trace.get_tracer(__name__))
    logger_object: Optional[logging.Logger] = None
    logging_level: int = logging.DEBUG

    def __post_init__(self) -> None:
        if not self.logger_object:
            self.logger = logging.getLogger(__name__)
            self.logger.addHandler(logging.NullHandler())
        else:
            self.logger = self.logger_object
        self.logger.setLevel(self.logging_level)

        self.model = self.config.build_model()
        if Method.EP_EXACT in self.config.methods and not self.model.has_linear_direction:
            raise ConfigurationError(
                ErrorSchema(error=ErrorCode.MISSING_LINEAR_DIRECTION, extra=f"model={self.model.name!r}")
            )
        logging_msg = "".join(f" - {attribute}: {value}\n" for attribute, value in self.config)
        self.logger.debug(f"Initialized {self.__class__.__name__}: \n{logging_msg}")

    def run_convergence(self) -> list[ConvergenceRow]:
        """
        Integrate every cell to its horizon and compare the final state with the reference oracle.

        The observed order of a row is measured against the previous (twice larger) stepsize of the same
        method and horizon, so the first row of each group has none. Writes `convergence.csv` and
        `manifest.txt`.
        """
        config = self.config
        cells = _cells(config)
        ends = list(dict.fromkeys(_oracle_end(config, cell) for cell in cells))
        halvings = (0, 1) if config.oracle.extrapolate else (0,)
        self.logger.info(f"convergence: computing {len(ends)} reference trajectories")
        passes = self._run_tasks(
            _oracle_pass_task, [(config, end, halving) for end in ends for halving in halvings]
        )
        oracles: dict[float, TrajectoryRecord] = {}
        for index, end in enumerate(ends):
            pair = passes[index * len(halvings) : (index + 1) * len(halvings)]
            oracle = combine_oracle_passes(pair[0], pair[1], self.model) if len(pair) == 2 else pair[0]
            if not oracle.ok:
                self.logger.warning(f"reference oracle for t={end!r} failed: {oracle.failure.describe()}")
            oracles[end] = oracle

        rows: list[ConvergenceRow] = self._run_tasks(
            _convergence_cell,
            [(config, cell, oracles[_oracle_end(config, cell)]) for cell in cells],
            "convergence",
        )

        group = len(config.stepsizes)
        for start in range(0, len(rows), group):
            chunk = rows[start : start + group]
            orders = convergence_orders([row.global_error for row in chunk], [row.h for row in chunk])
            for offset, order in enumerate(orders, start=1):
                rows[start + offset] = rows[start + offset].model_copy(update={"observed_order": order})

        self._report(rows)
        config.out_dir.mkdir(parents=True, exist_ok=True)
        with (config.out_dir / "convergence.csv").open("w", encoding="utf-8", newline="") as stream:
            write_rows_csv(rows, CONVERGENCE_COLUMNS, stream)
        self._write_manifest("convergence", rows)
        return rows

    def run_longtime(self) -> list[LongtimeRow]:
        """
        Integrate every cell to its horizon and write its energy and momentum drift series.

        Writes one trajectory CSV per cell, `longtime_summary.csv` and `manifest.txt`.
        """
        config = self.config
        if not self.model.has_vector_potential:
            self.logger.warning(f"model {self.model.name!r} has no vector potential, momentum is skipped")
        config.out_dir.mkdir(parents=True, exist_ok=True)

        rows: list[LongtimeRow] = self._run_tasks(
            _longtime_cell, [(config, cell) for cell in _cells(config)], "longtime"
        )
        self._report(rows)
        with (config.out_dir / "longtime_summary.csv").open("w", encoding="utf-8", newline="") as stream:
            write_rows_csv(rows, LONGTIME_COLUMNS, stream)
        self._write_manifest("longtime", rows)
        return rows

    def run_validation(
        self,
        probes: Optional[Sequence[Vec3 | Sequence[float]]] = None,
        fd_step: float = DEFAULT_FD_STEP,
        taus: Sequence[float] = DEFAULT_TAUS,
    ) -> ValidationReport:
        report = validate_model(self.model, probes, fd_step, DEFAULT_FD_TOLERANCE, taus)
        for failure in report.failures():
            self.logger.warning(f"validation of {self.model.name!r} failed: {failure}")
        return report

    def _run_tasks(
        self, func: Callable[..., Any], tasks: list[tuple[Any, ...]], experiment: Optional[str] = None
    ) -> list[Any]:
        if self.config.workers == 1 or len(tasks) <= 1:
            run = func if experiment is None else cell_span_decorator(self.tracer, experiment)(func)
            return [run(*task) for task in tasks]

        results: list[Any] = [None] * len(tasks)
        with ProcessPoolExecutor(max_workers=self.config.workers) as executor:
            futures = {
                executor.submit(_run_in_worker, experiment, func, *task): index
                for index, task in enumerate(tasks)
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()
        return results

    def _report(self, rows: Sequence[CellOutcome]) -> None:
        for row in rows:
            if row.ok:
                self.logger.info(f"{row.method.label} h={row.h!r} T={row.horizon!r}: {row.steps} steps")
            else:
                self.logger.warning(f"{row.method.label} h={row.h!r} T={row.horizon!r}: {row.status}")

    def _write_manifest(self, experiment: str, rows: Sequence[CellOutcome]) -> None:
        manifest = RunManifest(
            experiment=experiment,
            config=self.config.model_dump(mode="json"),
            cells={
                f"{row.method.value}_h{format_number(row.h)}_T{format_number(row.horizon)}": row.status
                for row in rows
            },
        )
        write_manifest(manifest.model_dump(mode="json"), self.config.out_dir / "manifest.txt")
