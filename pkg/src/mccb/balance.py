"""Learning per-coordinate weights from the demonstrations.

Weights factor as ``w_i = α_i / β_i``. The scale factors β normalise each
coordinate's total demonstration cost; the preferences α are searched on a simplex
lattice to minimise the summed training-set SSE of constrained reproductions.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, ValidationError

from .callbacks import LoggingCallbacks
from .errors import (
    ArtifactMismatchError,
    ConfigurationError,
    MCCBError,
    NumericalError,
    UnderdeterminedReproductionError,
)
from .metrics import sse
from .multicoord import MultiCoordModel
from .reproduce import (
    DEFAULT_DENSE_THRESHOLD,
    ConstraintSet,
    QuadraticCost,
    WeightTriple,
    solve_batch,
)
from .trajectory import DemonstrationSet

logger = logging.getLogger(__name__)

COST_FLOOR = 1e-12
REFINEMENT_DIVISIONS = 10
_KEY_DECIMALS = 12

Stage = Literal["lattice", "anchor", "refine"]


@dataclass(frozen=True)
class Candidate:
    """One evaluated preference vector α.

    Attributes:
        alpha: Preferences (α_C, α_G, α_L) on the simplex
        stage: Whether α came from the lattice, the anchor set or refinement
        objective: Summed training SSE, ``inf`` when infeasible
        per_demo_sse: SSE of each demonstration's reproduction
        reason: Why an infeasible candidate was skipped
    """

    alpha: tuple[float, float, float]
    stage: Stage
    objective: float
    per_demo_sse: tuple[float, ...] = ()
    reason: str | None = None

    @property
    def feasible(self) -> bool:
        """Whether every inner reproduction could be solved."""
        return self.reason is None

    def sort_key(self) -> tuple[float, tuple[float, float, float]]:
        """Objective first, then the lexicographically smallest α."""
        return (self.objective, self.alpha)


@dataclass(frozen=True)
class BalanceResult:
    """Outcome of the weight search.

    Attributes:
        alpha: Preferences on the probability simplex
        beta: Scale factors on the open simplex
        weights: ``α_i / β_i``
        per_demo_sse: Training SSE of each demonstration at the optimum
        grid_log: Every evaluated candidate, in evaluation order
        grid_step: Lattice spacing of the search
    """

    alpha: tuple[float, float, float]
    beta: tuple[float, float, float]
    weights: WeightTriple
    per_demo_sse: tuple[float, ...]
    grid_log: tuple[Candidate, ...]
    grid_step: float

    @property
    def total_sse(self) -> float:
        """Summed training SSE at the optimum."""
        return float(sum(self.per_demo_sse))

    def to_document(self) -> "BalanceDocument":
        """Serialisable JSON document."""
        return BalanceDocument(
            alpha=list(self.alpha),
            beta=list(self.beta),
            weights=self.weights.as_dict(),
            per_demo_sse=list(self.per_demo_sse),
            total_sse=self.total_sse,
            grid_step=self.grid_step,
            grid_log=[
                CandidateRecord(
                    alpha=list(c.alpha),
                    stage=c.stage,
                    objective=c.objective if c.feasible else None,
                    per_demo_sse=list(c.per_demo_sse),
                    reason=c.reason,
                )
                for c in self.grid_log
            ],
        )

    @classmethod
    def from_document(cls, document: "BalanceDocument") -> "BalanceResult":
        """Rebuild a result from its JSON document."""
        alpha = _triple(document.alpha)
        beta = _triple(document.beta)
        return cls(
            alpha=alpha,
            beta=beta,
            weights=WeightTriple.from_alpha_beta(alpha, beta),
            per_demo_sse=tuple(document.per_demo_sse),
            grid_log=tuple(
                Candidate(
                    alpha=_triple(record.alpha),
                    stage=record.stage,
                    objective=(
                        float("inf") if record.objective is None else record.objective
                    ),
                    per_demo_sse=tuple(record.per_demo_sse),
                    reason=record.reason,
                )
                for record in document.grid_log
            ),
            grid_step=document.grid_step,
        )


class CandidateRecord(BaseModel):
    """One grid-log entry of the balance document."""

    alpha: list[float]
    stage: Stage
    objective: float | None
    per_demo_sse: list[float] = []
    reason: str | None = None

    model_config = ConfigDict(extra="forbid")


class BalanceDocument(BaseModel):
    """JSON schema of a persisted balance result."""

    alpha: list[float]
    beta: list[float]
    weights: dict[str, float]
    per_demo_sse: list[float]
    total_sse: float
    grid_step: float
    grid_log: list[CandidateRecord]

    model_config = ConfigDict(extra="forbid")


def _triple(
    values: Sequence[float] | NDArray[np.float64],
) -> tuple[float, float, float]:
    a, b, c = (float(v) for v in values)
    return (a, b, c)


def beta_from_totals(totals: ArrayLike) -> NDArray[np.float64]:
    """Normalise per-coordinate total costs into scale factors β.

    Totals below ``COST_FLOOR`` are clamped to it first. When every total is below
    the floor the result is uniform.
    """
    values = np.asarray(totals, dtype=np.float64)
    if values.shape != (3,) or np.any(values < 0):
        msg = f"expected three non-negative cost totals, got {values}"
        raise ValueError(msg)
    if not np.all(np.isfinite(values)):
        msg = f"non-finite coordinate cost totals {values}"
        raise NumericalError(msg)
    if np.all(values < COST_FLOOR):
        logger.warning(
            "Every coordinate cost is below the floor; falling back to uniform beta"
        )
        return np.full(3, 1.0 / 3.0)
    clamped = np.maximum(values, COST_FLOOR)
    return clamped / clamped.sum()


def demonstration_costs(
    cost: QuadraticCost, demos: DemonstrationSet
) -> NDArray[np.float64]:
    """Per-demonstration costs as an N x 3 array (cartesian, tangent, laplacian)."""
    return np.stack([cost.evaluate(demo).as_array() for demo in demos])


def estimate_beta(
    model: MultiCoordModel,
    demos: DemonstrationSet,
    cost: QuadraticCost | None = None,
) -> NDArray[np.float64]:
    """Scale factors ``β_i = Σ_j J_i(X_j) / Σ_l Σ_j J_l(X_j)``.

    Args:
        model: Model trained on ``demos``
        demos: Aligned training demonstrations
        cost: Cost assembled from ``model`` (built when omitted)

    Returns:
        β in (cartesian, tangent, laplacian) order, summing to one
    """
    cost = cost or QuadraticCost.from_model(model)
    totals = demonstration_costs(cost, demos).sum(axis=0)
    beta = beta_from_totals(totals)
    logger.info(
        f"Coordinate cost totals {totals.tolist()} give beta {beta.tolist()}"
    )
    return beta


def simplex_lattice(step: float) -> NDArray[np.float64]:
    """Points ``(a, b, c)`` with ``a + b + c = 1`` and a, b on multiples of ``step``.

    When ``step`` divides one, c is a multiple of ``step`` too and the lattice has
    ``(k + 1)(k + 2) / 2`` points for ``k = 1 / step``.
    """
    if not 0 < step <= 0.5:
        msg = f"grid_step must lie in (0, 0.5], got {step}"
        raise ConfigurationError(msg)
    divisions = round(1.0 / step)
    if abs(divisions * step - 1.0) < 1e-9:
        points = [
            (i / divisions, j / divisions, (divisions - i - j) / divisions)
            for i in range(divisions + 1)
            for j in range(divisions + 1 - i)
        ]
    else:
        count = int(np.floor(1.0 / step + 1e-9))
        points = [
            (i * step, j * step, max(0.0, 1.0 - i * step - j * step))
            for i in range(count + 1)
            for j in range(count + 1 - i)
        ]
    return np.asarray(points)


def project_to_simplex(v: ArrayLike) -> NDArray[np.float64]:
    """Euclidean projection of ``v`` onto the probability simplex."""
    values = np.asarray(v, dtype=np.float64)
    ordered = np.sort(values)[::-1]
    cumulative = np.cumsum(ordered) - 1.0
    ranks = np.arange(1, values.size + 1)
    active = np.flatnonzero(ordered - cumulative / ranks > 0)[-1]
    theta = cumulative[active] / (active + 1)
    return np.maximum(values - theta, 0.0)


def anchor_points(beta: ArrayLike) -> NDArray[np.float64]:
    """Vertices, the barycentre and ``α = β`` (which gives weights (1, 1, 1))."""
    return np.vstack([np.eye(3), np.full((1, 3), 1.0 / 3.0), np.asarray(beta)[None]])


def refinement_points(center: ArrayLike, step: float) -> NDArray[np.float64]:
    """Simplex points within ``step`` of ``center`` (ℓ∞) on a ``step / 10`` grid."""
    base = np.asarray(center, dtype=np.float64)
    fine = step / REFINEMENT_DIVISIONS
    offsets = range(-REFINEMENT_DIVISIONS, REFINEMENT_DIVISIONS + 1)
    points = []
    for i in offsets:
        for j in offsets:
            k = -(i + j)
            if abs(k) > REFINEMENT_DIVISIONS:
                continue
            points.append(project_to_simplex(base + fine * np.array([i, j, k])))
    return np.asarray(points)


def _key(alpha: NDArray[np.float64]) -> tuple[float, ...]:
    return tuple(np.round(alpha, _KEY_DECIMALS).tolist())


def _evaluate(
    cost: QuadraticCost,
    beta: NDArray[np.float64],
    alpha: NDArray[np.float64],
    stage: Stage,
    demos: DemonstrationSet,
    constraints: Sequence[ConstraintSet],
    dense_threshold: int,
) -> Candidate:
    triple = _triple(alpha)
    try:
        weights = WeightTriple.from_alpha_beta(alpha, beta)
        reproductions = solve_batch(cost, weights, constraints, dense_threshold)
    except (UnderdeterminedReproductionError, ConfigurationError) as e:
        return Candidate(alpha=triple, stage=stage, objective=np.inf, reason=str(e))
    errors = tuple(
        sse(reproduction.trajectory, demo)
        for reproduction, demo in zip(reproductions, demos, strict=True)
    )
    return Candidate(
        alpha=triple, stage=stage, objective=float(sum(errors)), per_demo_sse=errors
    )


def optimize_alpha(
    model: MultiCoordModel,
    demos: DemonstrationSet,
    beta: ArrayLike,
    per_demo_constraints: Sequence[ConstraintSet] | None = None,
    grid_step: float = 0.05,
    cost: QuadraticCost | None = None,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    workers: int | None = None,
    callbacks: LoggingCallbacks | None = None,
) -> BalanceResult:
    """Search the preferences α minimising the summed training SSE.

    Every lattice point and anchor is evaluated, then one refinement pass at
    ``grid_step / 10`` around the best of them. The minimiser is chosen by
    objective and then by the lexicographically smallest α, so evaluation order
    never changes the result.

    Args:
        model: Model trained on ``demos``
        demos: Aligned training demonstrations
        beta: Scale factors from ``estimate_beta``
        per_demo_constraints: One constraint set per demonstration
            (default: both endpoints of each demonstration)
        grid_step: Lattice spacing in (0, 0.5]
        cost: Cost assembled from ``model`` (built when omitted)
        dense_threshold: Horizons up to this value use the dense KKT solver
        workers: Thread pool width for candidate evaluation
        callbacks: Optional lifecycle callbacks

    Returns:
        Balancing result with the full grid log

    Raises:
        ConfigurationError: On an invalid grid step or constraint count.
        UnderdeterminedReproductionError: If no candidate is feasible.
    """
    beta_array = np.asarray(beta, dtype=np.float64)
    if per_demo_constraints is None:
        per_demo_constraints = [ConstraintSet.endpoints(demo) for demo in demos]
    if len(per_demo_constraints) != len(demos):
        msg = (
            f"{len(per_demo_constraints)} constraint sets for {len(demos)} "
            "demonstrations"
        )
        raise ConfigurationError(msg)
    if len(demos) == 1:
        logger.warning("single demonstration: balancing degenerate")
    cost = cost or QuadraticCost.from_model(model)

    constraints = list(per_demo_constraints)
    seen: set[tuple[float, ...]] = set()

    def run(points: NDArray[np.float64], stage: Stage) -> list[Candidate]:
        fresh = []
        for alpha in points:
            key = _key(alpha)
            if key not in seen:
                seen.add(key)
                fresh.append(alpha)
        evaluate = partial(
            _evaluate,
            cost,
            beta_array,
            stage=stage,
            demos=demos,
            constraints=constraints,
            dense_threshold=dense_threshold,
        )
        with ThreadPoolExecutor(max_workers=workers) as pool:
            evaluated = list(pool.map(evaluate, fresh))
        if callbacks is not None:
            for candidate in evaluated:
                callbacks.after_candidate(candidate)
        return evaluated

    log = run(simplex_lattice(grid_step), "lattice")
    log += run(anchor_points(beta_array), "anchor")
    feasible = [c for c in log if c.feasible]
    if not feasible:
        msg = "no feasible weight candidate: every inner reproduction is singular"
        raise UnderdeterminedReproductionError(msg)
    coarse = min(feasible, key=Candidate.sort_key)
    logger.debug(f"Best lattice candidate {coarse.alpha} (SSE {coarse.objective:.6e})")

    log += run(refinement_points(coarse.alpha, grid_step), "refine")
    best = min((c for c in log if c.feasible), key=Candidate.sort_key)

    result = BalanceResult(
        alpha=best.alpha,
        beta=_triple(beta_array),
        weights=WeightTriple.from_alpha_beta(best.alpha, beta_array),
        per_demo_sse=best.per_demo_sse,
        grid_log=tuple(log),
        grid_step=grid_step,
    )
    samples = sum(demo.horizon for demo in demos)
    rms = float(np.sqrt(best.objective / samples))
    diameter = max(float(np.mean([demo.diameter for demo in demos])), 1e-300)
    logger.info(
        f"Balanced preferences {best.alpha}: RMS training error {rms:.3g} "
        f"({100.0 * rms / diameter:.2f}% of the mean demonstration diameter)"
    )
    if callbacks is not None:
        callbacks.after_balance(result)
    return result


def balance(
    model: MultiCoordModel,
    demos: DemonstrationSet,
    per_demo_constraints: Sequence[ConstraintSet] | None = None,
    grid_step: float = 0.05,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    workers: int | None = None,
    callbacks: LoggingCallbacks | None = None,
) -> BalanceResult:
    """Estimate β and then search α, sharing one assembled cost."""
    cost = QuadraticCost.from_model(model)
    beta = estimate_beta(model, demos, cost=cost)
    return optimize_alpha(
        model,
        demos,
        beta,
        per_demo_constraints=per_demo_constraints,
        grid_step=grid_step,
        cost=cost,
        dense_threshold=dense_threshold,
        workers=workers,
        callbacks=callbacks,
    )


def save_balance(result: BalanceResult, path: Path) -> None:
    """Write the balance result as JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        result.to_document().model_dump_json(indent=2) + "\n", encoding="utf-8"
    )
    logger.info(f"Wrote balance result to {path}")


def load_balance(path: Path) -> BalanceResult:
    """Read a balance result written by ``save_balance``.

    Raises:
        ArtifactMismatchError: If the file is missing or invalid.
    """
    try:
        document = BalanceDocument.model_validate_json(path.read_text(encoding="utf-8"))
        return BalanceResult.from_document(document)
    except OSError as e:
        msg = f"Cannot read balance artifact {path}: {e}"
        raise ArtifactMismatchError(msg) from e
    except (ValidationError, ValueError, MCCBError) as e:
        msg = f"Balance artifact {path} is invalid: {e}"
        raise ArtifactMismatchError(msg) from e
