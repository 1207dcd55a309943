"""Unit tests for trajectory similarity metrics."""

from collections.abc import Callable

import numpy as np
import pytest

from mccb.metrics import MetricReport, dtwd, evaluate, frechet, sea, sse
from mccb.trajectory import Trajectory


@pytest.fixture
def parallel_lines() -> tuple[np.ndarray, np.ndarray]:
    """Two horizontal lines one unit apart."""
    t = np.arange(5.0)
    return np.column_stack([t, np.zeros(5)]), np.column_stack([t, np.ones(5)])


class TestSse:
    """Tests for the summed squared error."""

    def test_sums_squared_errors(self) -> None:
        """Verify SSE is Σ_t ‖a(t) − b(t)‖²."""
        a = np.zeros((3, 2))
        b = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])

        assert sse(a, b) == pytest.approx(1.0 + 4.0 + 2.0)

    def test_accepts_trajectories(self) -> None:
        """Verify Trajectory arguments are unwrapped."""
        assert sse(Trajectory(np.arange(3.0)), Trajectory(np.arange(3.0))) == 0.0

    def test_shape_mismatch_raises(self) -> None:
        """Verify trajectories of different lengths are rejected."""
        with pytest.raises(ValueError, match="shape mismatch"):
            sse(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_dimension_mismatch_raises(self) -> None:
        """Verify trajectories of different dimensions are rejected."""
        with pytest.raises(ValueError, match="dimension mismatch"):
            sse(np.zeros((3, 2)), np.zeros((3, 3)))


class TestDistances:
    """Tests for the DTW and Fréchet distances."""

    def test_parallel_lines(
        self, parallel_lines: tuple[np.ndarray, np.ndarray]
    ) -> None:
        """Verify parallel lines one unit apart are a unit apart under both metrics."""
        a, b = parallel_lines

        assert frechet(a, b) == pytest.approx(1.0)
        assert dtwd(a, b) == pytest.approx(1.0)

    def test_frechet_with_different_lengths(self) -> None:
        """Verify the coupling may repeat samples of the shorter curve."""
        assert frechet([[0.0], [1.0]], [[0.0], [0.5], [1.0]]) == pytest.approx(0.5)

    def test_distances_vanish_on_identical_curves(self) -> None:
        """Verify a curve is at zero distance from itself."""
        curve = np.random.default_rng(0).normal(size=(12, 3))

        assert frechet(curve, curve) == 0.0
        assert dtwd(curve, curve) == 0.0

    def test_frechet_is_symmetric(self) -> None:
        """Verify swapping the curves leaves the distance unchanged."""
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(7, 2)), rng.normal(size=(9, 2))

        assert frechet(a, b) == pytest.approx(frechet(b, a))

    def test_frechet_bounds_pointwise_distance(self) -> None:
        """Verify Fréchet never exceeds the largest same-index distance."""
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))

        assert frechet(a, b) <= np.linalg.norm(a - b, axis=1).max() + 1e-12


class TestSea:
    """Tests for the swept error area."""

    def test_unit_square(self) -> None:
        """Verify two unit segments one apart sweep an area of one."""
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        b = np.array([[0.0, 1.0], [1.0, 1.0]])

        assert sea(a, b) == pytest.approx(1.0)

    def test_parallel_lines_area(
        self, parallel_lines: tuple[np.ndarray, np.ndarray]
    ) -> None:
        """Verify the area between lines 4 long and 1 apart is 4."""
        assert sea(*parallel_lines) == pytest.approx(4.0)

    def test_non_planar_raises(self) -> None:
        """Verify SEA is only defined for 2-D trajectories."""
        with pytest.raises(ValueError, match="needs 2-D"):
            sea(np.zeros((4, 3)), np.zeros((4, 3)))


class TestEvaluate:
    """Tests for the combined metric report."""

    def test_planar_report(
        self, parallel_lines: tuple[np.ndarray, np.ndarray]
    ) -> None:
        """Verify every metric is reported for planar data."""
        report = evaluate(*parallel_lines)

        assert report.sse == pytest.approx(5.0)
        assert report.sea == pytest.approx(4.0)
        assert report.as_row()["frechet"] == pytest.approx(1.0)

    def test_sea_is_empty_for_non_planar_data(self) -> None:
        """Verify SEA is omitted for 3-D data and leaves an empty CSV cell."""
        curve = np.zeros((4, 3))

        report = evaluate(curve, curve + 1.0)

        assert report.sea is None
        assert report.as_row()["sea"] == ""

    def test_report_rejects_negative_values(self) -> None:
        """Verify metric values must be non-negative."""
        with pytest.raises(ValueError):
            MetricReport(sse=-1.0, dtwd=0.0, frechet=0.0)


def couplings(rows: int, cols: int) -> list[list[tuple[int, int]]]:
    """Every monotone coupling from (0, 0) to (rows - 1, cols - 1)."""
    if rows == 1 and cols == 1:
        return [[(0, 0)]]
    found = []
    for di, dj in ((1, 0), (0, 1), (1, 1)):
        if rows - di >= 1 and cols - dj >= 1:
            found.extend(
                [*c, (rows - 1, cols - 1)] for c in couplings(rows - di, cols - dj)
            )
    return found


class TestMetricProperties:
    """Tests against enumeration oracles and invariances."""

    def test_frechet_matches_coupling_enumeration(self) -> None:
        """Verify Fréchet is the smallest maximal link over every coupling."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.normal(size=(int(rng.integers(1, 7)), 2))
            b = rng.normal(size=(int(rng.integers(1, 7)), 2))
            local = np.linalg.norm(a[:, None] - b[None], axis=2)

            brute = min(
                max(local[i, j] for i, j in c) for c in couplings(len(a), len(b))
            )

            assert frechet(a, b) == pytest.approx(brute, rel=1e-12)

    def test_sea_is_invariant_under_rigid_motion(self) -> None:
        """Verify rotating and translating both curves preserves the swept area."""
        rng = np.random.default_rng(8)
        a, b = rng.normal(size=(15, 2)), rng.normal(size=(15, 2))
        angle = 0.7
        rotation = np.array(
            [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
        )
        shift = np.array([3.0, -2.0])

        moved = sea(a @ rotation.T + shift, b @ rotation.T + shift)

        assert moved == pytest.approx(sea(a, b), abs=1e-12)

    def test_crossing_segments(self) -> None:
        """Verify crossing segments sum both triangle areas without cancelling."""
        a = np.array([[0.0, 0.0], [1.0, 1.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])

        # each diagonal split gives two triangles of area 0.5
        assert sea(a, b) == pytest.approx(0.5 + 0.5)
        assert sea(b, a) == pytest.approx(1.0)

    def test_sea_is_symmetric_on_self_intersecting_quads(self) -> None:
        """Verify swapping the curves keeps the area when every quad twists."""
        a = np.array([[0.0, 0.0], [3.0, 1.0], [4.0, -1.0]])
        b = np.array([[0.5, 2.0], [1.0, -2.0], [6.0, 3.0]])

        assert sea(a, b) == pytest.approx(sea(b, a), rel=1e-12)

    def test_convex_quad_matches_shoelace_area(self) -> None:
        """Verify a convex quadrilateral sweeps exactly its polygon area."""
        a = np.array([[0.0, 0.0], [2.0, 0.5]])
        b = np.array([[0.0, 1.0], [2.5, 2.0]])
        polygon = np.array([a[0], a[1], b[1], b[0]])
        x, y = polygon[:, 0], polygon[:, 1]
        shoelace = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

        assert sea(a, b) == pytest.approx(shoelace)

    @pytest.mark.parametrize("metric", [sse, dtwd, frechet, sea])
    def test_metrics_are_symmetric(self, metric: Callable[..., float]) -> None:
        """Verify every metric is symmetric in its arguments."""
        rng = np.random.default_rng(9)
        a, b = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))

        assert metric(a, b) == pytest.approx(metric(b, a))

    def test_dtwd_bounded_by_mean_pointwise_error(self) -> None:
        """Verify normalised DTW never exceeds the identity-path mean error."""
        rng = np.random.default_rng(10)
        a, b = rng.normal(size=(12, 2)), rng.normal(size=(12, 2))

        assert dtwd(a, b) <= np.linalg.norm(a - b, axis=1).mean() + 1e-12
