"""Blended quadratic costs and equality-constrained reproductions.

A reproduction ``X`` (T x n) minimises

    w_C J_C(X) + w_G J_G(X) + w_L J_L(X)   subject to   P X = X*

where each ``J_i(X) = (vec(A_i X) - vec(M_i))ᵀ Σ_i⁻¹ (vec(A_i X) - vec(M_i))``
uses the coordinate operator ``A_i`` (identity, G or L), the profile means
``M_i`` and the block-diagonal profile covariance ``Σ_i``. Vectorisation is
time-major, so operators lift as ``A_i ⊗ I_n`` and selectors as ``P ⊗ I_n``.

Covariance blocks enter through their Cholesky factors: with ``Σ_t = C_t C_tᵀ``
the cost is ``‖B (A x - m)‖²`` for the whitening ``B = blockdiag(C_t⁻¹)``.
The stationarity and constraint rows form the symmetric indefinite KKT system::

    [ H  Pᵀ ] [ x ]   [ g  ]
    [ P  0  ] [ λ ] = [ x* ]

solved directly (dense below ``dense_threshold`` time steps, sparse LU above).
"""

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict
from scipy import sparse
from scipy.sparse.linalg import splu

from .diffops import DiffOperator, build_operator
from .errors import (
    ConfigurationError,
    InfeasibleConstraintsError,
    NumericalError,
    SingularCovarianceError,
    UnderdeterminedReproductionError,
)
from .multicoord import COORDINATES, ConditionalProfile, Coordinate, MultiCoordModel
from .trajectory import Trajectory, write_trajectory_csv

if TYPE_CHECKING:
    from .callbacks import LoggingCallbacks

logger = logging.getLogger(__name__)

DEFAULT_DENSE_THRESHOLD = 200
UNDERDETERMINED_MESSAGE = (
    "underdetermined reproduction: add constraints or Cartesian weight"
)


@dataclass(frozen=True)
class WeightTriple:
    """Non-negative per-coordinate weights ``(w_C, w_G, w_L)``."""

    cartesian: float
    tangent: float
    laplacian: float

    def __post_init__(self) -> None:
        values = (self.cartesian, self.tangent, self.laplacian)
        if not all(np.isfinite(v) and v >= 0 for v in values):
            msg = f"weights must be finite and non-negative, got {values}"
            raise ConfigurationError(msg)
        if not any(v > 0 for v in values):
            msg = "at least one weight must be strictly positive"
            raise ConfigurationError(msg)
        names = ("cartesian", "tangent", "laplacian")
        for name, value in zip(names, values, strict=True):
            object.__setattr__(self, name, float(value))

    @classmethod
    def from_alpha_beta(cls, alpha: ArrayLike, beta: ArrayLike) -> "WeightTriple":
        """Weights ``w_i = α_i / β_i``."""
        a = np.asarray(alpha, dtype=np.float64)
        b = np.asarray(beta, dtype=np.float64)
        return cls(*(a / b).tolist())

    def as_array(self) -> NDArray[np.float64]:
        """Weights in (cartesian, tangent, laplacian) order."""
        return np.array([self.cartesian, self.tangent, self.laplacian])

    def __getitem__(self, coordinate: Coordinate | str) -> float:
        value: float = getattr(self, Coordinate(coordinate).value)
        return value

    def as_dict(self) -> dict[str, float]:
        """Weights keyed by coordinate name."""
        return {c.value: self[c] for c in COORDINATES}


@dataclass(frozen=True)
class ConstraintSet:
    """Linear equality constraints ``P X = X*`` on a T x n trajectory.

    Attributes:
        selectors: m x T selector matrix P (one-hot rows for point constraints)
        targets: m x n target values X*
    """

    selectors: NDArray[np.float64]
    targets: NDArray[np.float64]

    def __post_init__(self) -> None:
        selectors = np.array(self.selectors, dtype=np.float64)
        targets = np.array(self.targets, dtype=np.float64)
        if selectors.ndim == 1:
            selectors = selectors[np.newaxis]
        if targets.ndim == 1:
            targets = targets[np.newaxis]
        m, horizon = selectors.shape
        if m < 1:
            msg = "a constraint set needs at least one row"
            raise InfeasibleConstraintsError(msg)
        if targets.shape[0] != m:
            msg = f"{m} selector rows but {targets.shape[0]} target rows"
            raise InfeasibleConstraintsError(msg)
        if m >= horizon:
            msg = f"{m} constraint rows leave no freedom on a horizon of {horizon}"
            raise InfeasibleConstraintsError(msg)
        if not (np.all(np.isfinite(selectors)) and np.all(np.isfinite(targets))):
            msg = "constraint selectors and targets must be finite"
            raise InfeasibleConstraintsError(msg)
        if np.linalg.matrix_rank(selectors) < m:
            msg = "constraint selector rows are linearly dependent"
            raise InfeasibleConstraintsError(msg)
        selectors.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "selectors", selectors)
        object.__setattr__(self, "targets", targets)

    @property
    def horizon(self) -> int:
        """Horizon T the selectors act on."""
        return int(self.selectors.shape[1])

    @property
    def dims(self) -> int:
        """Value dimensions n."""
        return int(self.targets.shape[1])

    @property
    def n_rows(self) -> int:
        """Number of constraint rows m."""
        return int(self.selectors.shape[0])

    @classmethod
    def from_points(
        cls,
        points: Iterable[tuple[int, ArrayLike]],
        horizon: int,
    ) -> "ConstraintSet":
        """One-hot constraints pinning ``x(t) = value`` for each ``(t, value)``.

        Negative indices count from the end. Repeated indices with equal values
        collapse into one row.

        Raises:
            InfeasibleConstraintsError: On an index outside the horizon or on
                conflicting values for one index.
        """
        pinned: dict[int, NDArray[np.float64]] = {}
        for t, value in points:
            index = t + horizon if t < 0 else t
            if not 0 <= index < horizon:
                msg = f"constraint index {t} outside horizon {horizon}"
                raise InfeasibleConstraintsError(msg)
            target = np.atleast_1d(np.asarray(value, dtype=np.float64))
            if index in pinned:
                if not np.array_equal(pinned[index], target):
                    msg = f"inconsistent constraints at index {index}"
                    raise InfeasibleConstraintsError(msg)
                continue
            pinned[index] = target
        if not pinned:
            msg = "a constraint set needs at least one row"
            raise InfeasibleConstraintsError(msg)

        widths = {target.shape[0] for target in pinned.values()}
        if len(widths) != 1:
            msg = f"constraint targets disagree on dimension: {sorted(widths)}"
            raise InfeasibleConstraintsError(msg)
        indices = sorted(pinned)
        selectors = np.zeros((len(indices), horizon))
        selectors[np.arange(len(indices)), indices] = 1.0
        return cls(selectors, np.stack([pinned[t] for t in indices]))

    @classmethod
    def endpoints(
        cls,
        trajectory: Trajectory | ArrayLike,
        mode: Literal["both", "initial", "target"] = "both",
    ) -> "ConstraintSet":
        """Constraints pinning a trajectory's first and/or last sample."""
        samples = (
            trajectory.samples
            if isinstance(trajectory, Trajectory)
            else np.asarray(trajectory, dtype=np.float64)
        )
        horizon = samples.shape[0]
        points: list[tuple[int, ArrayLike]] = []
        if mode in ("both", "initial"):
            points.append((0, samples[0]))
        if mode in ("both", "target"):
            points.append((horizon - 1, samples[-1]))
        return cls.from_points(points, horizon)

    def with_via_points(
        self, points: Iterable[tuple[int, ArrayLike]]
    ) -> "ConstraintSet":
        """Return a new set with extra one-hot via-point rows appended."""
        via = ConstraintSet.from_points(points, self.horizon)
        if via.dims != self.dims:
            msg = f"via points have {via.dims} dimensions, constraints have {self.dims}"
            raise InfeasibleConstraintsError(msg)
        return ConstraintSet(
            np.vstack([self.selectors, via.selectors]),
            np.vstack([self.targets, via.targets]),
        )

    def residual(self, X: Trajectory | ArrayLike) -> float:
        """Constraint violation ``‖P X − X*‖∞``."""
        samples = X.samples if isinstance(X, Trajectory) else np.asarray(X, np.float64)
        return float(np.abs(self.selectors @ samples - self.targets).max())

    @property
    def scale(self) -> float:
        """Residual scale ``max(1, ‖X*‖∞)``."""
        return max(1.0, float(np.abs(self.targets).max()))


@dataclass(frozen=True)
class CostBreakdown:
    """Per-coordinate costs ``(J_C, J_G, J_L)`` of one trajectory."""

    cartesian: float
    tangent: float
    laplacian: float

    def weighted(self, weights: WeightTriple) -> float:
        """Blended cost ``Σ w_i J_i``."""
        return (
            weights.cartesian * self.cartesian
            + weights.tangent * self.tangent
            + weights.laplacian * self.laplacian
        )

    def as_array(self) -> NDArray[np.float64]:
        """Costs in (cartesian, tangent, laplacian) order."""
        return np.array([self.cartesian, self.tangent, self.laplacian])

    def as_dict(self) -> dict[str, float]:
        """Costs keyed by coordinate name."""
        return {
            "cartesian": self.cartesian,
            "tangent": self.tangent,
            "laplacian": self.laplacian,
        }


@dataclass(frozen=True)
class Reproduction:
    """Solution of one constrained reproduction problem.

    Attributes:
        trajectory: The reproduction X_r
        weights: Weights it was solved with
        cost_breakdown: Per-coordinate costs at X_r
        kkt_residual: Relative residual of the KKT solve
        constraint_residual: ``‖P X_r − X*‖∞``
    """

    trajectory: Trajectory
    weights: WeightTriple
    cost_breakdown: CostBreakdown
    kkt_residual: float
    constraint_residual: float

    @property
    def objective(self) -> float:
        """Blended cost at the reproduction."""
        return self.cost_breakdown.weighted(self.weights)


def _block_cholesky(prof: ConditionalProfile) -> NDArray[np.float64]:
    if not np.all(np.isfinite(prof.block_cov)):
        msg = f"{prof.coordinate} profile has non-finite conditional covariances"
        raise NumericalError(msg)
    try:
        return np.linalg.cholesky(prof.block_cov)
    except np.linalg.LinAlgError as e:
        msg = (
            f"{prof.coordinate} profile has a conditional covariance block that is "
            "not positive definite"
        )
        raise SingularCovarianceError(msg) from e


def coordinate_cost(
    X: Trajectory | ArrayLike, prof: ConditionalProfile, op: DiffOperator
) -> float:
    """Mahalanobis cost of ``op·X`` against a conditional profile.

    Returns:
        ``dᵀ blockdiag(block_cov)⁻¹ d`` with ``d = vec(op·X) − vec(means)``

    Raises:
        HorizonMismatchError: If ``X`` and ``op`` disagree on the horizon.
        ValueError: If the profile shape does not match ``op·X``.
        SingularCovarianceError: If a covariance block is not positive definite.
    """
    transformed = op.apply(X)
    if transformed.shape != prof.means.shape:
        msg = (
            f"trajectory in {op.kind} coordinates has shape {transformed.shape}, "
            f"profile has {prof.means.shape}"
        )
        raise ValueError(msg)
    chol = _block_cholesky(prof)
    deviation = transformed - prof.means
    whitened = np.linalg.solve(chol, deviation[..., np.newaxis])[..., 0]
    return float(np.sum(whitened**2))


@dataclass(frozen=True)
class _CoordinateTerm:
    operator: DiffOperator
    profile: ConditionalProfile
    hessian: sparse.csr_array
    linear: NDArray[np.float64]


class QuadraticCost:
    """Per-coordinate quadratic forms of one model, reusable across weight triples.

    Each coordinate contributes ``J_i(x) = xᵀ H_i x − 2 g_iᵀ x + c_i`` with
    ``H_i = (B_i A_i)ᵀ (B_i A_i)`` and ``g_i = (B_i A_i)ᵀ B_i m_i``.

    Attributes:
        horizon: Horizon T
        dims: Value dimensions n
    """

    def __init__(self, profiles: Mapping[Coordinate, ConditionalProfile]) -> None:
        """Assemble the quadratic forms.

        Args:
            profiles: One profile per coordinate, all over the same (T, n)

        Raises:
            ValueError: If a coordinate is missing or shapes disagree.
            SingularCovarianceError: If a covariance block is not positive definite.
        """
        missing = [c for c in COORDINATES if c not in profiles]
        if missing:
            msg = f"missing profiles for {[c.value for c in missing]}"
            raise ValueError(msg)
        shapes = {profiles[c].means.shape for c in COORDINATES}
        if len(shapes) != 1:
            msg = f"profiles disagree on (T, n): {sorted(shapes)}"
            raise ValueError(msg)
        (self.horizon, self.dims) = shapes.pop()

        self._terms: dict[Coordinate, _CoordinateTerm] = {}
        for coordinate in COORDINATES:
            prof = profiles[coordinate]
            op = build_operator(coordinate.operator_kind, self.horizon)
            chol = _block_cholesky(prof)
            whitening = sparse.csr_array(
                sparse.block_diag(
                    [
                        scipy.linalg.solve_triangular(c, np.eye(self.dims), lower=True)
                        for c in chol
                    ],
                    format="csr",
                )
            )
            design = sparse.csr_array(whitening @ op.lifted(self.dims))
            target = whitening @ prof.means.reshape(-1)
            self._terms[coordinate] = _CoordinateTerm(
                operator=op,
                profile=prof,
                hessian=sparse.csr_array(design.T @ design),
                linear=design.T @ target,
            )

    @classmethod
    def from_model(cls, model: MultiCoordModel) -> "QuadraticCost":
        """Assemble the costs from a model's profiles over its training horizon."""
        return cls(model.profiles())

    def profile(self, coordinate: Coordinate | str) -> ConditionalProfile:
        """Profile a coordinate's cost was assembled from."""
        return self._terms[Coordinate(coordinate)].profile

    def evaluate(self, X: Trajectory | ArrayLike) -> CostBreakdown:
        """Per-coordinate costs of ``X``."""
        costs = [
            coordinate_cost(X, term.profile, term.operator)
            for term in self._terms.values()
        ]
        return CostBreakdown(*costs)

    def system(
        self, weights: WeightTriple
    ) -> tuple[sparse.csr_array, NDArray[np.float64]]:
        """Blended Hessian and linear term, normalised by ``max |H|``.

        Weights are divided by their maximum first, so proportional weight triples
        yield identical systems.
        """
        w = weights.as_array()
        w = w / w.max()
        hessian = sparse.csr_array((self.horizon * self.dims,) * 2)
        linear = np.zeros(self.horizon * self.dims)
        for weight, term in zip(w, self._terms.values(), strict=True):
            if weight > 0:
                hessian = hessian + weight * term.hessian
                linear = linear + weight * term.linear
        scale = float(np.abs(hessian.data).max()) if hessian.nnz else 0.0
        if not scale > 0:
            raise UnderdeterminedReproductionError(UNDERDETERMINED_MESSAGE)
        return sparse.csr_array(hessian / scale), linear / scale


def _pins_constant_mode(selectors: NDArray[np.float64]) -> bool:
    # Laplacian rows annihilate constants, so the selectors must not
    return bool(np.any(np.abs(selectors.sum(axis=1)) > 1e-12))


def _solve_group(
    cost: QuadraticCost,
    weights: WeightTriple,
    group: Sequence[ConstraintSet],
    dense_threshold: int,
) -> list[tuple[NDArray[np.float64], float]]:
    """Solve a group of constraint sets sharing selectors with one factorization."""
    selectors = group[0].selectors
    if weights.cartesian == 0 and weights.tangent == 0 and not _pins_constant_mode(
        selectors
    ):
        raise UnderdeterminedReproductionError(UNDERDETERMINED_MESSAGE)

    dims = cost.dims
    size = cost.horizon * dims
    hessian, linear = cost.system(weights)
    lifted = sparse.kron(
        sparse.csr_array(selectors), sparse.eye_array(dims), format="csr"
    )
    if not (np.all(np.isfinite(hessian.data)) and np.all(np.isfinite(linear))):
        msg = "non-finite entries in the reproduction KKT system"
        raise NumericalError(msg)
    kkt = sparse.bmat([[hessian, lifted.T], [lifted, None]], format="csc")
    rhs = np.column_stack(
        [np.concatenate([linear, c.targets.reshape(-1)]) for c in group]
    )

    try:
        if cost.horizon <= dense_threshold:
            solution = scipy.linalg.solve(kkt.toarray(), rhs, assume_a="sym")
        else:
            solution = splu(kkt).solve(rhs)
    except (np.linalg.LinAlgError, RuntimeError) as e:
        raise UnderdeterminedReproductionError(UNDERDETERMINED_MESSAGE) from e
    except ValueError as e:
        msg = f"KKT solve failed: {e}"
        raise NumericalError(msg) from e
    if not np.all(np.isfinite(solution)):
        raise UnderdeterminedReproductionError(UNDERDETERMINED_MESSAGE)

    residuals = np.abs(kkt @ solution - rhs).max(axis=0) / np.maximum(
        1.0, np.abs(rhs).max(axis=0)
    )
    return [
        (solution[:size, j].reshape(cost.horizon, dims), float(residuals[j]))
        for j in range(len(group))
    ]


def solve_batch(
    cost: QuadraticCost,
    weights: WeightTriple,
    constraint_sets: Sequence[ConstraintSet],
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    callbacks: "LoggingCallbacks | None" = None,
) -> list[Reproduction]:
    """Solve one reproduction per constraint set.

    Constraint sets that share a selector matrix share a single KKT factorization
    (multi right-hand-side solve). Results keep the order of ``constraint_sets``.

    Raises:
        InfeasibleConstraintsError: If a constraint set does not match the cost's
            horizon or dimensions.
        UnderdeterminedReproductionError: If the KKT system is singular.
    """
    groups: dict[bytes, list[int]] = {}
    for index, constraints in enumerate(constraint_sets):
        if (constraints.horizon, constraints.dims) != (cost.horizon, cost.dims):
            msg = (
                f"constraints act on (T={constraints.horizon}, n={constraints.dims}), "
                f"model has (T={cost.horizon}, n={cost.dims})"
            )
            raise InfeasibleConstraintsError(msg)
        key = constraints.selectors.tobytes()
        groups.setdefault(key, []).append(index)

    solved: dict[int, tuple[NDArray[np.float64], float]] = {}
    for indices in groups.values():
        group = [constraint_sets[i] for i in indices]
        for index, result in zip(
            indices, _solve_group(cost, weights, group, dense_threshold), strict=True
        ):
            solved[index] = result

    reproductions = []
    for index, constraints in enumerate(constraint_sets):
        samples, kkt_residual = solved[index]
        trajectory = Trajectory(samples)
        reproduction = Reproduction(
            trajectory=trajectory,
            weights=weights,
            cost_breakdown=cost.evaluate(trajectory),
            kkt_residual=kkt_residual,
            constraint_residual=constraints.residual(trajectory),
        )
        if callbacks is not None:
            callbacks.after_solve(reproduction)
        reproductions.append(reproduction)
    return reproductions


def solve_reproduction(
    model: MultiCoordModel | QuadraticCost,
    weights: WeightTriple,
    constraints: ConstraintSet,
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
    callbacks: "LoggingCallbacks | None" = None,
) -> Reproduction:
    """Solve the constrained reproduction for one weight triple.

    Args:
        model: Trained model, or a cost already assembled from one
        weights: Per-coordinate weights
        constraints: Equality constraints on the reproduction
        dense_threshold: Horizons up to this value use the dense solver
        callbacks: Optional lifecycle callbacks

    Returns:
        Exact minimiser of the blended cost on the constraint set

    Raises:
        UnderdeterminedReproductionError: If the system is singular, e.g.
            Laplacian-only weights with constraints that leave the constant
            offset free.
    """
    cost = (
        model if isinstance(model, QuadraticCost) else QuadraticCost.from_model(model)
    )
    return solve_batch(cost, weights, [constraints], dense_threshold, callbacks)[0]


class ConstraintRecord(BaseModel):
    """One constraint row: a time index for point constraints, else the selector."""

    t: int | None = None
    selector: list[float] | None = None
    target: list[float]

    model_config = ConfigDict(extra="forbid")


class ReproductionDocument(BaseModel):
    """JSON sidecar written next to a reproduction CSV."""

    name: str
    horizon: int
    dims: int
    weights: dict[str, float]
    cost_breakdown: dict[str, float]
    objective: float
    kkt_residual: float
    constraint_residual: float
    constraints: list[ConstraintRecord]

    model_config = ConfigDict(extra="forbid")


def write_reproduction(
    reproduction: Reproduction,
    constraints: ConstraintSet,
    output_dir: Path,
    name: str,
) -> tuple[Path, Path]:
    """Write ``repro_<name>.csv`` and its ``repro_<name>.json`` sidecar.

    Returns:
        Paths of the CSV and JSON files
    """
    csv_path = output_dir / f"repro_{name}.csv"
    json_path = output_dir / f"repro_{name}.json"
    write_trajectory_csv(reproduction.trajectory.samples, csv_path)

    rows = []
    for selector, target in zip(
        constraints.selectors, constraints.targets, strict=True
    ):
        if np.count_nonzero(selector) == 1 and selector.max() == 1.0:
            rows.append(
                ConstraintRecord(t=int(np.argmax(selector)), target=target.tolist())
            )
        else:
            rows.append(
                ConstraintRecord(selector=selector.tolist(), target=target.tolist())
            )
    document = ReproductionDocument(
        name=name,
        horizon=reproduction.trajectory.horizon,
        dims=reproduction.trajectory.dims,
        weights=reproduction.weights.as_dict(),
        cost_breakdown=reproduction.cost_breakdown.as_dict(),
        objective=reproduction.objective,
        kkt_residual=reproduction.kkt_residual,
        constraint_residual=reproduction.constraint_residual,
        constraints=rows,
    )
    json_path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote reproduction '{name}' to {csv_path}")
    return csv_path, json_path
