"""Trajectory similarity metrics: SSE, DTW distance, discrete Fréchet distance and SEA.

Every metric accepts ``Trajectory`` objects or plain ``(length, dims)`` arrays.
"""

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import cdist

from .dtw import dtw_distance
from .trajectory import Trajectory

type Curve = Trajectory | ArrayLike


def _curve(values: Curve) -> NDArray[np.float64]:
    curve = (
        values.samples
        if isinstance(values, Trajectory)
        else np.asarray(values, dtype=np.float64)
    )
    if curve.ndim == 1:
        curve = curve[:, np.newaxis]
    if curve.ndim != 2 or curve.shape[0] == 0:
        msg = f"expected a non-empty (length, dims) array, got shape {curve.shape}"
        raise ValueError(msg)
    return curve


def _pair(a: Curve, b: Curve) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    curve_a, curve_b = _curve(a), _curve(b)
    if curve_a.shape[1] != curve_b.shape[1]:
        msg = (
            f"dimension mismatch: {curve_a.shape[1]} vs {curve_b.shape[1]} "
            "spatial dimensions"
        )
        raise ValueError(msg)
    return curve_a, curve_b


def sse(a: Curve, b: Curve) -> float:
    """Sum over time of squared Euclidean errors ``Σ_t ‖a(t) − b(t)‖²``.

    Raises:
        ValueError: If the shapes differ.
    """
    curve_a, curve_b = _pair(a, b)
    if curve_a.shape != curve_b.shape:
        msg = f"shape mismatch: {curve_a.shape} vs {curve_b.shape}"
        raise ValueError(msg)
    return float(np.sum((curve_a - curve_b) ** 2))


def dtwd(a: Curve, b: Curve) -> float:
    """DTW distance normalised by the optimal warping path length."""
    curve_a, curve_b = _pair(a, b)
    return dtw_distance(curve_a, curve_b, normalize=True)


def frechet(a: Curve, b: Curve) -> float:
    """Discrete Fréchet distance (smallest achievable maximal coupling distance)."""
    curve_a, curve_b = _pair(a, b)
    local = cdist(curve_a, curve_b)
    rows, cols = local.shape
    coupling = np.empty_like(local)
    coupling[0] = np.maximum.accumulate(local[0])
    coupling[:, 0] = np.maximum.accumulate(local[:, 0])
    for i in range(1, rows):
        for j in range(1, cols):
            reachable = min(
                coupling[i - 1, j], coupling[i - 1, j - 1], coupling[i, j - 1]
            )
            coupling[i, j] = max(reachable, local[i, j])
    return float(coupling[-1, -1])


def _triangle_areas(
    p: NDArray[np.float64], q: NDArray[np.float64], r: NDArray[np.float64]
) -> NDArray[np.float64]:
    u = q - p
    v = r - p
    return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def sea(a: Curve, b: Curve) -> float:
    """Swept error area between two planar trajectories of equal length.

    Each quadrilateral ``(a(t), a(t+1), b(t+1), b(t))`` is split on the diagonal
    ``(a(t), b(t+1))`` and on ``(a(t+1), b(t))``; the absolute triangle areas of the
    two splits are averaged. Convex quadrilaterals give their plain area.

    Raises:
        ValueError: If the trajectories are not 2-D or their lengths differ.
    """
    curve_a, curve_b = _pair(a, b)
    if curve_a.shape[1] != 2:
        msg = f"swept error area needs 2-D trajectories, got {curve_a.shape[1]}-D"
        raise ValueError(msg)
    if curve_a.shape != curve_b.shape:
        msg = f"shape mismatch: {curve_a.shape} vs {curve_b.shape}"
        raise ValueError(msg)
    a0, a1, b0, b1 = curve_a[:-1], curve_a[1:], curve_b[:-1], curve_b[1:]
    forward = _triangle_areas(a0, a1, b1) + _triangle_areas(a0, b1, b0)
    backward = _triangle_areas(a0, a1, b0) + _triangle_areas(a1, b1, b0)
    return float(0.5 * np.sum(forward + backward))


class MetricReport(BaseModel):
    """All applicable metrics between two trajectories."""

    sse: float = Field(ge=0.0)
    dtwd: float = Field(ge=0.0)
    frechet: float = Field(ge=0.0)
    sea: float | None = Field(default=None, ge=0.0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    def as_row(self) -> dict[str, float | str]:
        """Flat CSV row; SEA is an empty cell when not applicable."""
        return {
            "sse": self.sse,
            "dtwd": self.dtwd,
            "frechet": self.frechet,
            "sea": "" if self.sea is None else self.sea,
        }


def evaluate(a: Curve, b: Curve) -> MetricReport:
    """Compute every metric applicable to the pair (SEA only for 2-D data)."""
    curve_a, curve_b = _pair(a, b)
    planar = curve_a.shape[1] == 2
    return MetricReport(
        sse=sse(curve_a, curve_b),
        dtwd=dtwd(curve_a, curve_b),
        frechet=frechet(curve_a, curve_b),
        sea=sea(curve_a, curve_b) if planar else None,
    )
