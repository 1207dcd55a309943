"""Graph Laplacian and incidence operators on a trajectory chain graph.

Both operators are square and tridiagonal, so they are stored as three bands and
applied without materialising the T x T matrix. Dense and sparse forms are produced
on request for QP assembly.

Laplacian (deviation of each sample from the centroid of its neighbors)::

    [ 1   -1                ]
    [-0.5  1   -0.5         ]
    [      ...  ...   ...   ]
    [          -0.5  1  -0.5]
    [                -1   1 ]

Tangent (graph incidence matrix, last row kept exactly as ``(0, ..., 0, -1)``)::

    [-1  1            ]
    [   -1  1         ]
    [       ...  ...  ]
    [           -1   1]
    [                -1]
"""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse

from .errors import HorizonMismatchError
from .trajectory import MIN_HORIZON, Trajectory


class OperatorKind(StrEnum):
    """Differential operator families."""

    LAPLACIAN = "laplacian"
    TANGENT = "tangent"
    IDENTITY = "identity"


@dataclass(frozen=True)
class DiffOperator:
    """A T x T tridiagonal operator stored by bands.

    Attributes:
        kind: Operator family
        lower: Sub-diagonal, ``lower[t]`` multiplies ``x(t-1)``; ``lower[0] == 0``
        diag: Main diagonal
        upper: Super-diagonal, ``upper[t]`` multiplies ``x(t+1)``; ``upper[-1] == 0``
    """

    kind: OperatorKind
    lower: NDArray[np.float64]
    diag: NDArray[np.float64]
    upper: NDArray[np.float64]

    @property
    def horizon(self) -> int:
        """Number of time steps T."""
        return int(self.diag.shape[0])

    @property
    def matrix(self) -> NDArray[np.float64]:
        """Dense T x T matrix."""
        return self.to_sparse().toarray()

    def to_sparse(self) -> sparse.csr_array:
        """CSR form of the operator."""
        return sparse.csr_array(
            sparse.diags_array(
                [self.lower[1:], self.diag, self.upper[:-1]],
                offsets=[-1, 0, 1],
                shape=(self.horizon, self.horizon),
            )
        )

    def lifted(self, dims: int) -> sparse.csr_array:
        """Operator acting on time-major vectorised trajectories: ``op ⊗ I_n``."""
        return sparse.csr_array(
            sparse.kron(self.to_sparse(), sparse.eye_array(dims), format="csr")
        )

    def apply(self, X: Trajectory | ArrayLike) -> NDArray[np.float64]:
        """Return ``op @ X`` for a T x n trajectory using the stored bands."""
        return apply(self, X)


def build_operator(kind: OperatorKind | str, horizon: int) -> DiffOperator:
    """Construct the operator of ``kind`` for ``horizon`` time steps.

    Raises:
        ValueError: If ``horizon`` is below 3.
    """
    kind = OperatorKind(kind)
    if horizon < MIN_HORIZON:
        msg = f"operators need a horizon of at least {MIN_HORIZON}, got {horizon}"
        raise ValueError(msg)

    lower = np.zeros(horizon)
    upper = np.zeros(horizon)
    if kind is OperatorKind.LAPLACIAN:
        diag = np.ones(horizon)
        lower[1:-1] = -0.5
        upper[1:-1] = -0.5
        upper[0] = -1.0
        lower[-1] = -1.0
    elif kind is OperatorKind.TANGENT:
        diag = -np.ones(horizon)
        upper[:-1] = 1.0
    else:
        diag = np.ones(horizon)

    for band in (lower, diag, upper):
        band.setflags(write=False)
    return DiffOperator(kind=kind, lower=lower, diag=diag, upper=upper)


def apply(op: DiffOperator, X: Trajectory | ArrayLike) -> NDArray[np.float64]:
    """Apply ``op`` to a T x n trajectory (``Δ = LX``, ``Γ = GX``).

    Raises:
        HorizonMismatchError: If the trajectory has a different number of rows.
    """
    samples = X.samples if isinstance(X, Trajectory) else np.asarray(X, np.float64)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    if samples.shape[0] != op.horizon:
        msg = (
            f"{op.kind} operator has horizon {op.horizon}, "
            f"trajectory has {samples.shape[0]} samples"
        )
        raise HorizonMismatchError(msg)

    out = op.diag[:, np.newaxis] * samples
    out[1:] += op.lower[1:, np.newaxis] * samples[:-1]
    out[:-1] += op.upper[:-1, np.newaxis] * samples[1:]
    return out
