"""Multi-coordinate cost balancing for learning point-to-point skills.

Demonstrations are encoded in Cartesian, tangent and Laplacian coordinates with one
Gaussian mixture per coordinate. Reproductions solve an equality-constrained
quadratic program whose per-coordinate weights are learned from the demonstrations.

Typical use::

    from mccb import balance, dtw_align, load_demonstrations, train

    demos = dtw_align(load_demonstrations("demos/"))
    model = train(demos, n_components=5)
    result = balance(model, demos)
"""

from importlib.metadata import PackageNotFoundError, version

from .balance import BalanceResult, balance, estimate_beta, optimize_alpha
from .diffops import DiffOperator, OperatorKind, apply, build_operator
from .gmm import Conditional, GaussianMixture, condition, fit_em
from .metrics import MetricReport, dtwd, evaluate, frechet, sea, sse
from .multicoord import ConditionalProfile, Coordinate, MultiCoordModel, profile, train
from .reproduce import (
    ConstraintSet,
    Reproduction,
    WeightTriple,
    coordinate_cost,
    solve_reproduction,
)
from .trajectory import DemonstrationSet, Trajectory, dtw_align, load_demonstrations

try:
    __version__ = version("mccb")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

__all__ = [
    "BalanceResult",
    "Conditional",
    "ConditionalProfile",
    "ConstraintSet",
    "Coordinate",
    "DemonstrationSet",
    "DiffOperator",
    "GaussianMixture",
    "MetricReport",
    "MultiCoordModel",
    "OperatorKind",
    "Reproduction",
    "Trajectory",
    "WeightTriple",
    "__version__",
    "apply",
    "balance",
    "build_operator",
    "condition",
    "coordinate_cost",
    "dtw_align",
    "dtwd",
    "estimate_beta",
    "evaluate",
    "fit_em",
    "frechet",
    "load_demonstrations",
    "optimize_alpha",
    "profile",
    "sea",
    "solve_reproduction",
    "sse",
    "train",
]
