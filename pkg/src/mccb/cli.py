"""Command-line interface: train, compare, reproduce, metrics and synthesize.

Every run-configuration field can come from a JSON file (``--config``) and be
overridden by a flag of the same name. Artifacts land in ``output_dir``:

- ``train``: ``model.json``, ``balance.json``, ``manifest.json``
- ``compare``: ``compare_per_demo.csv``, ``compare_summary.csv``,
  ``compare_overlay.csv``
- ``reproduce``: ``repro_<name>.csv`` and ``repro_<name>.json``

Exit codes: 0 success, 2 configuration or IO, 3 numerical failure, 4 infeasible
or underdetermined constraints.
"""

import argparse
import csv
import json
import logging
import platform
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import scipy
from opentelemetry import trace
from pydantic import BaseModel, ConfigDict, ValidationError

from . import __version__
from .balance import (
    BalanceResult,
    estimate_beta,
    load_balance,
    optimize_alpha,
    save_balance,
)
from .callbacks import LoggingCallbacks
from .config import (
    ALL_METHODS,
    MethodName,
    RunConfig,
    RuntimeEnv,
    initialize_environment,
    load_run_config,
)
from .errors import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ArtifactMismatchError,
    ConfigurationError,
    MCCBError,
    UnderdeterminedReproductionError,
)
from .metrics import MetricReport, evaluate
from .multicoord import MultiCoordModel, load_model, save_model, train
from .observability import setup_logging, setup_tracing
from .reproduce import (
    ConstraintSet,
    QuadraticCost,
    Reproduction,
    WeightTriple,
    solve_batch,
    solve_reproduction,
    write_reproduction,
)
from .synthetic import FAMILIES, make_family, write_csv_dir
from .trajectory import (
    DemonstrationSet,
    dtw_align,
    load_demonstrations,
    read_trajectory_csv,
    select_reference,
)

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
BALANCE_FILE = "balance.json"
MANIFEST_FILE = "manifest.json"
SUMMARY_METRICS = ("sse", "dtwd", "frechet", "sea")

BASELINE_WEIGHTS: dict[str, WeightTriple] = {
    "cartesian": WeightTriple(1.0, 0.0, 0.0),
    "tangent": WeightTriple(0.0, 1.0, 0.0),
    "laplacian": WeightTriple(0.0, 0.0, 1.0),
    "uniform": WeightTriple(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
}


class Manifest(BaseModel):
    """Everything needed to re-run an experiment."""

    command: str
    mccb_version: str
    python_version: str
    numpy_version: str
    scipy_version: str
    config: dict[str, Any]
    reference_index: int
    horizon: int
    n_demos: int
    dims: int
    labels: list[str]
    artifacts: list[str]

    model_config = ConfigDict(extra="forbid")


def method_weights(
    method: MethodName | str, result: BalanceResult
) -> WeightTriple:
    """Weights of a comparison method; baselines are unscaled, MCCB uses α/β."""
    if method == "mccb":
        return result.weights
    try:
        return BASELINE_WEIGHTS[method]
    except KeyError as e:
        msg = f"unknown method '{method}'; choose from {list(ALL_METHODS)}"
        raise ConfigurationError(msg) from e


def prepare_demonstrations(
    config: RunConfig, reference_index: int | None = None
) -> tuple[DemonstrationSet, int]:
    """Load and align the configured dataset.

    Returns:
        Aligned demonstrations and the alignment reference index
    """
    raw = load_demonstrations(config.dataset, config.format)
    if reference_index is None:
        reference_index = config.reference_index
    if reference_index is None:
        reference_index = select_reference(raw)
    aligned = dtw_align(raw, reference_index, config.target_horizon)
    return aligned, reference_index


def build_constraints(
    config: RunConfig, demos: DemonstrationSet
) -> list[ConstraintSet]:
    """Per-demonstration endpoint constraints plus configured via points."""
    unknown = set(config.via_points) - set(demos.labels)
    if unknown:
        msg = f"via points reference unknown demonstrations: {sorted(unknown)}"
        raise ConfigurationError(msg)

    constraints = []
    for label, demo in zip(demos.labels, demos, strict=True):
        constraint = ConstraintSet.endpoints(demo, config.endpoint_mode)
        if via := config.via_points.get(label):
            constraint = constraint.with_via_points((p.t, p.value) for p in via)
        constraints.append(constraint)
    return constraints


def _write_manifest(
    config: RunConfig,
    command: str,
    demos: DemonstrationSet,
    reference_index: int,
    artifacts: Sequence[str],
) -> Path:
    manifest = Manifest(
        command=command,
        mccb_version=__version__,
        python_version=platform.python_version(),
        numpy_version=np.__version__,
        scipy_version=scipy.__version__,
        config=config.model_dump(mode="json", by_alias=True),
        reference_index=reference_index,
        horizon=demos.horizon,
        n_demos=len(demos),
        dims=demos.dims,
        labels=list(demos.labels),
        artifacts=list(artifacts),
    )
    path = config.output_dir / MANIFEST_FILE
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def cmd_train(
    config: RunConfig,
    callbacks: LoggingCallbacks | None = None,
    workers: int | None = None,
) -> tuple[MultiCoordModel, BalanceResult]:
    """Align, train the three mixtures, balance the weights and persist everything.

    Args:
        config: Run configuration
        callbacks: Optional lifecycle callbacks
        workers: Thread pool width for fits and candidate evaluation

    Returns:
        Trained model and balancing result
    """
    demos, reference_index = prepare_demonstrations(config)
    model = train(
        demos,
        n_components=config.n_components,
        seed=config.seed,
        settings=config.em,
        callbacks=callbacks,
        workers=workers,
        reference_index=reference_index,
    )
    cost = QuadraticCost.from_model(model)
    beta = estimate_beta(model, demos, cost=cost)
    result = optimize_alpha(
        model,
        demos,
        beta,
        per_demo_constraints=build_constraints(config, demos),
        grid_step=config.grid_step,
        cost=cost,
        dense_threshold=config.dense_threshold,
        workers=workers,
        callbacks=callbacks,
    )

    config.output_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, config.output_dir / MODEL_FILE)
    save_balance(result, config.output_dir / BALANCE_FILE)
    _write_manifest(
        config, "train", demos, reference_index, [MODEL_FILE, BALANCE_FILE]
    )
    logger.info(f"Training artifacts written to {config.output_dir}")
    return model, result


def check_manifest_version(output_dir: Path) -> str | None:
    """Warn when the artifacts in ``output_dir`` were written by another version.

    Returns:
        The recorded ``mccb_version``, or None when no readable manifest exists
    """
    path = output_dir / MANIFEST_FILE
    try:
        manifest = Manifest.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError:
        logger.warning(f"No manifest at {path}; artifact version unknown")
        return None
    except ValidationError as e:
        logger.warning(f"Unreadable manifest {path}: {e.error_count()} errors")
        return None
    if manifest.mccb_version != __version__:
        logger.warning(
            f"Artifacts in {output_dir} were written by mccb {manifest.mccb_version}; "
            f"running {__version__}"
        )
    return manifest.mccb_version


def load_artifacts(
    config: RunConfig,
) -> tuple[MultiCoordModel, BalanceResult, DemonstrationSet]:
    """Load the trained artifacts and re-derive the aligned training set.

    Raises:
        ArtifactMismatchError: If the artifacts are missing or were trained on a
            different dataset, horizon or reference.
    """
    check_manifest_version(config.output_dir)
    model = load_model(config.output_dir / MODEL_FILE)
    result = load_balance(config.output_dir / BALANCE_FILE)
    if config.target_horizon is not None and config.target_horizon != model.horizon:
        msg = (
            f"model was trained with target_T={model.horizon}, "
            f"config asks for {config.target_horizon}"
        )
        raise ArtifactMismatchError(msg)
    if (
        config.reference_index is not None
        and model.reference_index is not None
        and config.reference_index != model.reference_index
    ):
        msg = (
            f"model was aligned on reference {model.reference_index}, "
            f"config asks for {config.reference_index}"
        )
        raise ArtifactMismatchError(msg)

    demos, _ = prepare_demonstrations(
        config.model_copy(update={"target_horizon": model.horizon}),
        reference_index=model.reference_index,
    )
    if demos.labels != model.labels or demos.dims != model.dims:
        msg = (
            f"dataset {config.dataset} does not match the trained model "
            f"(labels {list(demos.labels)} vs {list(model.labels)})"
        )
        raise ArtifactMismatchError(msg)
    return model, result, demos


def _write_csv(
    path: Path, fieldnames: Sequence[str], rows: list[dict[str, Any]]
) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _summarise(
    rows: list[dict[str, Any]], methods: Sequence[str]
) -> list[dict[str, Any]]:
    summary = []
    for method in methods:
        feasible = [
            r for r in rows if r["method"] == method and r["status"] == "ok"
        ]
        for metric in SUMMARY_METRICS:
            cells = [r.get(metric, "") for r in feasible]
            values = np.array([c for c in cells if c != ""], dtype=np.float64)
            if values.size == 0:
                continue
            summary.append(
                {
                    "method": method,
                    "metric": metric,
                    "mean": float(values.mean()),
                    "median": float(np.median(values)),
                    "total": float(values.sum()),
                    "count": int(values.size),
                }
            )
    return summary


def cmd_compare(
    config: RunConfig, callbacks: LoggingCallbacks | None = None
) -> list[dict[str, Any]]:
    """Reproduce every demonstration with every configured method and tabulate.

    Singular baselines are recorded as ``infeasible`` rows.

    Returns:
        Per-demonstration rows, as written to ``compare_per_demo.csv``
    """
    model, result, demos = load_artifacts(config)
    cost = QuadraticCost.from_model(model)
    constraints = build_constraints(config, demos)
    planar = demos.dims == 2
    metric_names = ["sse", "dtwd", "frechet"] + (["sea"] if planar else [])

    rows: list[dict[str, Any]] = []
    overlay: list[dict[str, Any]] = []
    axes = [f"x{d}" for d in range(demos.dims)]

    def overlay_rows(label: str, method: str, samples: np.ndarray) -> None:
        for t, sample in enumerate(samples):
            overlay.append(
                {"demo": label, "method": method, "t": t}
                | {axis: repr(float(v)) for axis, v in zip(axes, sample, strict=True)}
            )

    for label, demo in zip(demos.labels, demos, strict=True):
        overlay_rows(label, "demonstration", demo.samples)

    for method in config.baselines:
        weights = method_weights(method, result)
        try:
            reproductions: list[Reproduction] | None = solve_batch(
                cost, weights, constraints, config.dense_threshold, callbacks
            )
        except UnderdeterminedReproductionError as e:
            logger.warning(f"{method} baseline is infeasible: {e}")
            reproductions = None

        for j, (label, demo) in enumerate(zip(demos.labels, demos, strict=True)):
            row: dict[str, Any] = {"method": method, "demo": label}
            if reproductions is None:
                blanks = dict.fromkeys(metric_names, "")
                rows.append(row | {"status": "infeasible"} | blanks)
                continue
            reproduction = reproductions[j]
            report: MetricReport = evaluate(reproduction.trajectory, demo)
            metrics = report.as_row()
            values = {k: metrics[k] for k in metric_names}
            rows.append(row | {"status": "ok"} | values)
            overlay_rows(label, method, reproduction.trajectory.samples)

    output_dir = config.output_dir
    _write_csv(
        output_dir / "compare_per_demo.csv",
        ["method", "demo", "status", *metric_names],
        rows,
    )
    _write_csv(
        output_dir / "compare_summary.csv",
        ["method", "metric", "mean", "median", "total", "count"],
        _summarise(rows, config.baselines),
    )
    _write_csv(
        output_dir / "compare_overlay.csv", ["demo", "method", "t", *axes], overlay
    )
    logger.info(
        f"Compared {len(config.baselines)} methods on {len(demos)} demonstrations; "
        f"tables written to {output_dir}"
    )
    return rows


def parse_point(text: str) -> list[float]:
    """Parse ``v1,v2,...`` into floats."""
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as e:
        msg = f"malformed point '{text}': expected comma-separated numbers"
        raise argparse.ArgumentTypeError(msg) from e


def parse_via(text: str) -> tuple[int, list[float]]:
    """Parse a via point ``t:v1,v2,...``."""
    index, sep, values = text.partition(":")
    if not sep:
        msg = f"malformed via point '{text}': expected t:v1,v2,..."
        raise argparse.ArgumentTypeError(msg)
    try:
        t = int(index)
    except ValueError as e:
        msg = f"malformed via point '{text}': time index must be an integer"
        raise argparse.ArgumentTypeError(msg) from e
    return t, parse_point(values)


def parse_via_points(text: str) -> dict[str, Any]:
    """Parse the ``via_points`` mapping given as JSON on the command line.

    Example: ``{"demo_a": [{"t": 40, "value": [1.0, 2.0]}]}``.
    """
    try:
        value = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"malformed via_points '{text}': {e.msg}"
        raise argparse.ArgumentTypeError(msg) from e
    if not isinstance(value, dict):
        msg = f"malformed via_points '{text}': expected a JSON object"
        raise argparse.ArgumentTypeError(msg)
    return value


def cmd_reproduce(
    config: RunConfig,
    initial: Sequence[float] | None = None,
    target: Sequence[float] | None = None,
    via: Sequence[tuple[int, Sequence[float]]] = (),
    method: MethodName = "mccb",
    name: str = "custom",
    callbacks: LoggingCallbacks | None = None,
) -> Reproduction:
    """Solve and write a reproduction for new endpoints and via points.

    Raises:
        ConfigurationError: If no constraint is given.
        UnderdeterminedReproductionError: If the constraints leave the system
            singular for the chosen method.
    """
    model = load_model(config.output_dir / MODEL_FILE)
    result = load_balance(config.output_dir / BALANCE_FILE)
    points: list[tuple[int, Sequence[float]]] = []
    if initial is not None:
        points.append((0, initial))
    if target is not None:
        points.append((model.horizon - 1, target))
    points.extend(via)
    if not points:
        msg = "reproduce needs at least one of --initial, --target or --via"
        raise ConfigurationError(msg)

    constraints = ConstraintSet.from_points(points, model.horizon)
    weights = method_weights(method, result)
    try:
        reproduction = solve_reproduction(
            model, weights, constraints, config.dense_threshold, callbacks
        )
    except UnderdeterminedReproductionError as e:
        msg = (
            f"{e}. The {method} weights leave the trajectory offset free; "
            "pin a time index with --initial, --target or --via"
        )
        raise UnderdeterminedReproductionError(msg) from e
    write_reproduction(reproduction, constraints, config.output_dir, name)
    return reproduction


def cmd_metrics(a: Path, b: Path, output: Path | None = None) -> MetricReport:
    """Metrics between two trajectory CSV files, printed or written as JSON."""
    report = evaluate(read_trajectory_csv(a), read_trajectory_csv(b))
    text = report.model_dump_json(indent=2)
    if output is None:
        print(text)
    else:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text + "\n", encoding="utf-8")
    return report


def cmd_synthesize(
    family: str, output: Path, n_demos: int, horizon: int, seed: int
) -> DemonstrationSet:
    """Write a synthetic skill family as a ``csv-dir`` dataset."""
    demos = make_family(family, n_demos, horizon, seed)
    write_csv_dir(demos, output)
    return demos


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file with the run schema")
    parser.add_argument("--dataset", type=Path, help="demonstration directory or file")
    parser.add_argument("--format", choices=["csv-dir", "jsonl"])
    parser.add_argument("--target_T", type=int, help="aligned horizon")
    parser.add_argument("--reference_index", type=int, help="alignment reference")
    parser.add_argument("--K", type=int, help="Gaussian components per coordinate")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--grid_step", type=float, help="simplex lattice spacing")
    parser.add_argument("--endpoint_mode", choices=["both", "initial", "target"])
    parser.add_argument("--output_dir", type=Path)
    parser.add_argument("--baselines", nargs="+", choices=list(ALL_METHODS))
    parser.add_argument("--dense_threshold", type=int)
    parser.add_argument(
        "--via_points", type=parse_via_points, help="JSON: {demo_id: [{t, value}]}"
    )
    parser.add_argument("--em.tol", dest="em_tol", type=float, help="EM tolerance")
    parser.add_argument("--em.max_iter", dest="em_max_iter", type=int)
    parser.add_argument("--em.reg_factor", dest="em_reg_factor", type=float)


_RUN_FLAGS = (
    "dataset",
    "format",
    "target_T",
    "reference_index",
    "K",
    "seed",
    "grid_step",
    "endpoint_mode",
    "output_dir",
    "baselines",
    "dense_threshold",
    "via_points",
)
_EM_FLAGS = ("tol", "max_iter", "reg_factor")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per workflow step."""
    parser = argparse.ArgumentParser(
        prog="mccb", description="Multi-coordinate cost balancing"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("train", help="align, train and balance"))
    _add_run_flags(sub.add_parser("compare", help="five-way baseline comparison"))

    reproduce = sub.add_parser("reproduce", help="reproduce for new constraints")
    _add_run_flags(reproduce)
    reproduce.add_argument("--initial", type=parse_point, help="v1,v2,...")
    reproduce.add_argument("--target", type=parse_point, help="v1,v2,...")
    reproduce.add_argument(
        "--via", type=parse_via, action="append", default=[], help="t:v1,v2,..."
    )
    reproduce.add_argument("--method", choices=list(ALL_METHODS), default="mccb")
    reproduce.add_argument("--name", default="custom")

    metrics = sub.add_parser("metrics", help="metrics between two trajectory CSVs")
    metrics.add_argument("a", type=Path)
    metrics.add_argument("b", type=Path)
    metrics.add_argument("--output", type=Path)

    synthesize = sub.add_parser("synthesize", help="write a synthetic dataset")
    synthesize.add_argument("family", choices=sorted(FAMILIES))
    synthesize.add_argument("output", type=Path)
    synthesize.add_argument("--n_demos", type=int, default=7)
    synthesize.add_argument("--horizon", type=int, default=200)
    synthesize.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge the optional config file with command-line overrides."""
    overrides: dict[str, object] = {
        flag: getattr(args, flag)
        for flag in _RUN_FLAGS
        if getattr(args, flag, None) is not None
    }
    em = {
        flag: getattr(args, f"em_{flag}")
        for flag in _EM_FLAGS
        if getattr(args, f"em_{flag}", None) is not None
    }
    if em:
        overrides["em"] = em
    return load_run_config(args.config, overrides)


def run(args: argparse.Namespace, env: RuntimeEnv) -> None:
    """Dispatch a parsed command."""
    callbacks = LoggingCallbacks()
    if args.command == "metrics":
        cmd_metrics(args.a, args.b, args.output)
        return
    if args.command == "synthesize":
        cmd_synthesize(args.family, args.output, args.n_demos, args.horizon, args.seed)
        return

    config = config_from_args(args)
    config.print_config()
    if args.command == "train":
        cmd_train(config, callbacks, workers=env.workers)
    elif args.command == "compare":
        cmd_compare(config, callbacks)
    else:
        cmd_reproduce(
            config,
            initial=args.initial,
            target=args.target,
            via=args.via,
            method=args.method,
            name=args.name,
            callbacks=callbacks,
        )


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``mccb`` command.

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    try:
        env = initialize_environment(RuntimeEnv, print_config=False)
    except ConfigurationError as e:
        print(f"mccb: {e}", file=sys.stderr)
        return e.exit_code

    setup_logging(env.log_level)
    setup_tracing(env.service_name, env.otlp_endpoint, env.telemetry_namespace)
    env.print_config()

    tracer = trace.get_tracer(__name__)
    with tracer.start_as_current_span(f"mccb.{args.command}"):
        try:
            run(args, env)
        except MCCBError as e:
            logger.error(f"[{e.provenance}] {type(e).__name__}: {e}")
            return e.exit_code
        except np.linalg.LinAlgError as e:
            logger.error(f"{type(e).__name__}: {e}")
            return EXIT_NUMERICAL
        except (ValueError, OSError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
