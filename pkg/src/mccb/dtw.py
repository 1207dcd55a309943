"""Symmetric-step dynamic time warping shared by alignment and the DTWD metric."""

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist

# Back-tracking preference on equal accumulated cost: diagonal, then along A, then B
_STEPS: tuple[tuple[int, int], ...] = ((1, 1), (1, 0), (0, 1))


def _as_curve(values: ArrayLike) -> NDArray[np.float64]:
    curve = np.asarray(values, dtype=np.float64)
    if curve.ndim == 1:
        curve = curve[:, np.newaxis]
    if curve.ndim != 2 or curve.shape[0] == 0:
        msg = f"expected a non-empty (length, dims) array, got shape {curve.shape}"
        raise ValueError(msg)
    return curve


def accumulated_cost(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Return the accumulated DTW cost table with Euclidean local cost.

    ``D[i, j]`` is the minimal summed local cost of a warping path from ``(0, 0)`` to
    ``(i, j)`` using the steps ``(1, 0)``, ``(0, 1)`` and ``(1, 1)``.
    """
    curve_a = _as_curve(a)
    curve_b = _as_curve(b)
    if curve_a.shape[1] != curve_b.shape[1]:
        msg = (
            f"dimension mismatch: {curve_a.shape[1]} vs {curve_b.shape[1]} "
            "spatial dimensions"
        )
        raise ValueError(msg)

    local = cdist(curve_a, curve_b)
    rows, cols = local.shape
    table = np.empty_like(local)
    table[0] = np.cumsum(local[0])
    for i in range(1, rows):
        # Diagonal and vertical predecessors are vectorised; the horizontal one is not
        best_above = np.minimum(table[i - 1, 1:], table[i - 1, :-1])
        row = table[i]
        row[0] = table[i - 1, 0] + local[i, 0]
        for j in range(1, cols):
            row[j] = local[i, j] + min(best_above[j - 1], row[j - 1])
    return table


def warping_path(a: ArrayLike, b: ArrayLike) -> list[tuple[int, int]]:
    """Return the optimal warping path as ``(index_a, index_b)`` pairs, start first."""
    table = accumulated_cost(a, b)
    return _backtrack(table)


def _backtrack(table: NDArray[np.float64]) -> list[tuple[int, int]]:
    i, j = table.shape[0] - 1, table.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        best: tuple[int, int] | None = None
        best_cost = np.inf
        for di, dj in _STEPS:
            pi, pj = i - di, j - dj
            if pi < 0 or pj < 0:
                continue
            if table[pi, pj] < best_cost:
                best_cost = table[pi, pj]
                best = (pi, pj)
        if best is None:  # pragma: no cover - (0, 0) always reachable
            break
        i, j = best
        path.append(best)
    path.reverse()
    return path


def dtw_distance(a: ArrayLike, b: ArrayLike, normalize: bool = False) -> float:
    """Return the DTW distance between two curves.

    Args:
        a: First curve, shape (length_a, dims) or (length_a,)
        b: Second curve, shape (length_b, dims) or (length_b,)
        normalize: Divide the minimal summed cost by the length of the optimal
            warping path

    Returns:
        Minimal summed Euclidean cost, optionally path-length normalized
    """
    table = accumulated_cost(a, b)
    total = float(table[-1, -1])
    if not normalize:
        return total
    return total / len(_backtrack(table))
