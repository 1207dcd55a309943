"""Unit tests for the LoggingCallbacks class in the callbacks module."""

import logging

import numpy as np
import pytest
from pytest_mock import MockType

from mccb.balance import BalanceResult, Candidate
from mccb.callbacks import LoggingCallbacks
from mccb.gmm import GaussianMixture
from mccb.reproduce import CostBreakdown, Reproduction, WeightTriple
from mccb.trajectory import Trajectory


# Test fixtures
@pytest.fixture
def custom_logger() -> logging.Logger:
    """Create a custom logger for testing."""
    logger = logging.getLogger("test.custom.logger")
    logger.setLevel(logging.DEBUG)
    return logger


@pytest.fixture
def fitted_mixture() -> GaussianMixture:
    """Single-component tangent mixture as reported after a converged fit."""
    return GaussianMixture(
        priors=np.array([1.0]),
        means=np.zeros((1, 3)),
        covariances=np.eye(3)[np.newaxis],
        coordinate="tangent",
        converged=True,
        n_iter=7,
        log_likelihoods=(-10.0, -5.0),
    )


@pytest.fixture
def balance_result() -> BalanceResult:
    """Balancing result with one feasible and one skipped candidate."""
    feasible = Candidate(
        alpha=(0.5, 0.25, 0.25), stage="lattice", objective=2.5, per_demo_sse=(2.5,)
    )
    skipped = Candidate(
        alpha=(0.0, 0.0, 1.0), stage="anchor", objective=np.inf, reason="singular"
    )
    return BalanceResult(
        alpha=(0.5, 0.25, 0.25),
        beta=(0.2, 0.3, 0.5),
        weights=WeightTriple.from_alpha_beta((0.5, 0.25, 0.25), (0.2, 0.3, 0.5)),
        per_demo_sse=(2.5,),
        grid_log=(feasible, skipped),
        grid_step=0.25,
    )


@pytest.fixture
def reproduction() -> Reproduction:
    """Solved reproduction with small residuals."""
    return Reproduction(
        trajectory=Trajectory(np.zeros((4, 2))),
        weights=WeightTriple(1.0, 1.0, 1.0),
        cost_breakdown=CostBreakdown(1.0, 2.0, 3.0),
        kkt_residual=1e-13,
        constraint_residual=0.0,
    )


class TestLoggerInjection:
    """Tests for logger injection and initialization."""

    def test_logging_callbacks_default_logger(self) -> None:
        """Verify LoggingCallbacks creates a logger from its own module."""
        callbacks = LoggingCallbacks()

        assert callbacks.logger is not None
        assert callbacks.logger.name == "mccb.callbacks"

    def test_logging_callbacks_custom_logger(
        self, custom_logger: logging.Logger
    ) -> None:
        """Verify LoggingCallbacks uses injected logger instance."""
        callbacks = LoggingCallbacks(logger=custom_logger)

        assert callbacks.logger is custom_logger

    def test_callbacks_with_custom_logger_logs_correctly(
        self,
        custom_logger: logging.Logger,
        fitted_mixture: GaussianMixture,
        mock_span: MockType,
        caplog: pytest.LogCaptureFixture,
    ) -> None:
        """Verify custom logger receives the messages of callback operations."""
        caplog.set_level(logging.DEBUG, logger="test.custom.logger")

        callbacks = LoggingCallbacks(logger=custom_logger)
        callbacks.before_fit("tangent", 120, 1)
        callbacks.after_fit(fitted_mixture)

        records = [r for r in caplog.records if r.name == "test.custom.logger"]
        assert len(records) == 2


class TestFitCallbacks:
    """Tests for the mixture fit callbacks."""

    def test_before_fit_logs_banner(self, caplog: pytest.LogCaptureFixture) -> None:
        """Verify before_fit announces the coordinate, K and sample count."""
        caplog.set_level(logging.INFO)

        result = LoggingCallbacks().before_fit("laplacian", 400, 5)

        assert result is None
        assert "*** Fitting laplacian mixture: K=5 on 400 samples ***" in caplog.text

    def test_on_em_iteration_logs_at_debug(
        self, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Verify iteration progress is logged at debug level only."""
        caplog.set_level(logging.INFO)
        callbacks = LoggingCallbacks()

        callbacks.on_em_iteration("cartesian", 3, -12.5)
        assert "EM iteration" not in caplog.text

        caplog.set_level(logging.DEBUG)
        callbacks.on_em_iteration("cartesian", 3, -12.5)
        assert "cartesian EM iteration 3: log-likelihood -12.500000" in caplog.text

    def test_after_fit_sets_span_attributes(
        self,
        fitted_mixture: GaussianMixture,
        mock_span: MockType,
        caplog: pytest.LogCaptureFixture,
    ) -> None:
        """Verify after_fit records iterations, likelihood and convergence."""
        caplog.set_level(logging.INFO)

        LoggingCallbacks().after_fit(fitted_mixture)

        mock_span.set_attribute.assert_any_call("mccb.em.tangent.iterations", 7)
        mock_span.set_attribute.assert_any_call("mccb.em.tangent.log_likelihood", -5.0)
        mock_span.set_attribute.assert_any_call("mccb.em.tangent.converged", True)
        assert "tangent mixture converged after 7 iterations" in caplog.text


class TestBalanceCallbacks:
    """Tests for the weight search callbacks."""

    def test_after_candidate_logs_objective(
        self, balance_result: BalanceResult, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Verify feasible candidates log their SSE and skipped ones their reason."""
        caplog.set_level(logging.DEBUG)
        callbacks = LoggingCallbacks()

        for candidate in balance_result.grid_log:
            callbacks.after_candidate(candidate)

        assert "alpha=(0.5000, 0.2500, 0.2500) SSE=2.500000e+00" in caplog.text
        assert "alpha=(0.0000, 0.0000, 1.0000) skipped: singular" in caplog.text

    def test_after_balance_sets_span_attributes(
        self,
        balance_result: BalanceResult,
        mock_span: MockType,
        caplog: pytest.LogCaptureFixture,
    ) -> None:
        """Verify after_balance logs the result and records it on the span."""
        caplog.set_level(logging.INFO)

        LoggingCallbacks().after_balance(balance_result)

        assert "*** Balanced weights: alpha=(0.5, 0.25, 0.25)" in caplog.text
        mock_span.set_attribute.assert_any_call("mccb.balance.objective", 2.5)
        mock_span.set_attribute.assert_any_call("mccb.balance.candidates", 2)
        mock_span.set_attribute.assert_any_call(
            "mccb.balance.alpha", [0.5, 0.25, 0.25]
        )
        mock_span.set_attribute.assert_any_call("mccb.balance.beta", [0.2, 0.3, 0.5])


class TestSolveCallbacks:
    """Tests for the reproduction solve callback."""

    def test_after_solve_records_residuals(
        self, reproduction: Reproduction, mock_span: MockType
    ) -> None:
        """Verify the KKT and constraint residuals are recorded on the span."""
        result = LoggingCallbacks().after_solve(reproduction)

        assert result is None
        mock_span.set_attribute.assert_any_call("mccb.kkt.residual", 1e-13)
        mock_span.set_attribute.assert_any_call("mccb.kkt.constraint_residual", 0.0)
