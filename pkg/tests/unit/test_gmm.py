"""Unit tests for EM fitting and Gaussian mixture regression."""

import logging

import numpy as np
import pytest
from pytest_mock import MockerFixture

from mccb.config import EMSettings
from mccb.errors import ConfigurationError, DegenerateComponentError, NumericalError
from mccb.gmm import (
    GaussianMixture,
    condition,
    condition_many,
    fit_em,
    joint_samples,
    responsibilities_at,
    time_grid,
)
from mccb.trajectory import DemonstrationSet


@pytest.fixture
def two_cluster_data() -> np.ndarray:
    """Joint samples near value 0 in the first half of time and 5 in the second."""
    rng = np.random.default_rng(0)
    t = np.linspace(0.0, 1.0, 200)
    x = np.where(t < 0.5, 0.0, 5.0) + 0.05 * rng.normal(size=t.size)
    return np.column_stack([t, x])


@pytest.fixture
def planar_demos_joint(planar_demos: DemonstrationSet) -> np.ndarray:
    """Joint (t, x, y) samples of the planar demonstrations."""
    return joint_samples(planar_demos.stack())


@pytest.fixture
def two_component_mixture() -> GaussianMixture:
    """Hand-built two-component mixture over (t, x, y)."""
    return GaussianMixture(
        priors=np.array([0.4, 0.6]),
        means=np.array([[0.2, 1.0, -1.0], [0.7, 3.0, 2.0]]),
        covariances=np.array(
            [
                [[0.02, 0.01, 0.0], [0.01, 0.3, 0.05], [0.0, 0.05, 0.2]],
                [[0.05, -0.02, 0.01], [-0.02, 0.4, 0.0], [0.01, 0.0, 0.1]],
            ]
        ),
    )


class TestJointSamples:
    """Tests for building (t, value) training pairs."""

    def test_time_grid_is_normalised(self) -> None:
        """Verify time stamps run from 0 to 1 in T steps."""
        np.testing.assert_allclose(time_grid(5), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_stacks_demonstrations(self) -> None:
        """Verify N x T x n data becomes (N·T) x (1 + n) pairs."""
        data = np.arange(12.0).reshape(2, 3, 2)

        joint = joint_samples(data)

        assert joint.shape == (6, 3)
        np.testing.assert_allclose(joint[:, 0], [0.0, 0.5, 1.0] * 2)
        np.testing.assert_array_equal(joint[:, 1:], data.reshape(6, 2))


class TestGaussianMixture:
    """Tests for mixture validation and persistence."""

    def test_priors_must_sum_to_one(self) -> None:
        """Verify priors that do not sum to one are rejected."""
        with pytest.raises(ValueError, match="sum to 1"):
            GaussianMixture(
                priors=np.array([0.5, 0.6]),
                means=np.zeros((2, 2)),
                covariances=np.stack([np.eye(2)] * 2),
            )

    def test_covariance_must_be_positive_definite(self) -> None:
        """Verify an indefinite covariance is rejected."""
        with pytest.raises(DegenerateComponentError, match="positive definite"):
            GaussianMixture(
                priors=np.array([1.0]),
                means=np.zeros((1, 2)),
                covariances=np.array([[[1.0, 2.0], [2.0, 1.0]]]),
            )

    def test_shape_mismatch_raises(self) -> None:
        """Verify covariances must match the means' joint dimension."""
        with pytest.raises(ValueError, match="covariances must be"):
            GaussianMixture(
                priors=np.array([1.0]),
                means=np.zeros((1, 3)),
                covariances=np.array([np.eye(2)]),
            )

    def test_document_round_trip(self, two_component_mixture: GaussianMixture) -> None:
        """Verify a mixture survives conversion to and from its JSON document."""
        document = two_component_mixture.to_document()
        restored = GaussianMixture.from_document(
            type(document).model_validate_json(document.model_dump_json())
        )

        np.testing.assert_array_equal(restored.priors, two_component_mixture.priors)
        np.testing.assert_array_equal(restored.means, two_component_mixture.means)
        np.testing.assert_array_equal(
            restored.covariances, two_component_mixture.covariances
        )

    def test_document_component_count_mismatch_raises(
        self, two_component_mixture: GaussianMixture
    ) -> None:
        """Verify a document whose K disagrees with its priors is rejected."""
        document = two_component_mixture.to_document().model_copy(
            update={"n_components": 3}
        )

        with pytest.raises(ValueError, match="declares K = 3"):
            GaussianMixture.from_document(document)


class TestFitEm:
    """Tests for the EM fit."""

    def test_recovers_two_clusters(self, two_cluster_data: np.ndarray) -> None:
        """Verify the component value means land on the two clusters."""
        mixture = fit_em(two_cluster_data, 2)

        values = mixture.means[np.argsort(mixture.means[:, 0]), 1]
        np.testing.assert_allclose(values, [0.0, 5.0], atol=0.05)
        assert mixture.priors.sum() == pytest.approx(1.0, abs=1e-12)

    def test_log_likelihood_is_monotone_on_random_data(self) -> None:
        """Verify EM never lowers the objective across twenty random data sets."""
        rng = np.random.default_rng(2024)
        for _ in range(20):
            count = int(rng.integers(60, 160))
            t = np.sort(rng.uniform(0.0, 1.0, count))
            values = np.column_stack(
                [np.sin(2 * np.pi * t * rng.uniform(0.5, 2.0)), rng.normal(size=count)]
            )
            data = np.column_stack([t, values + 0.1 * rng.normal(size=values.shape)])
            mixture = fit_em(data, int(rng.integers(1, 6)), seed=int(rng.integers(99)))
            history = np.asarray(mixture.log_likelihoods)

            tolerance = 1e-9 * np.maximum(1.0, np.abs(history[:-1]))
            assert np.all(np.diff(history) >= -tolerance)

    def test_log_likelihood_is_non_decreasing(
        self, planar_demos_joint: np.ndarray
    ) -> None:
        """Verify the monitored objective never decreases across iterations."""
        mixture = fit_em(planar_demos_joint, 4)
        history = np.asarray(mixture.log_likelihoods)

        assert len(history) == mixture.n_iter + 1
        tolerance = 1e-9 * np.maximum(1.0, np.abs(history[:-1]))
        assert np.all(np.diff(history) >= -tolerance)

    def test_covariances_respect_regularization_floor(
        self, planar_demos_joint: np.ndarray
    ) -> None:
        """Verify every covariance eigenvalue stays at or above λ."""
        mixture = fit_em(planar_demos_joint, 5)

        assert mixture.regularization is not None
        floor = mixture.regularization
        for covariance in mixture.covariances:
            assert np.linalg.eigvalsh(covariance).min() >= floor * (1 - 1e-6)

    def test_fit_is_deterministic(self, planar_demos_joint: np.ndarray) -> None:
        """Verify two fits with the same seed are bit-identical."""
        first = fit_em(planar_demos_joint, 3, seed=11)
        second = fit_em(planar_demos_joint, 3, seed=11)

        np.testing.assert_array_equal(first.means, second.means)
        np.testing.assert_array_equal(first.covariances, second.covariances)
        assert first.log_likelihoods == second.log_likelihoods

    def test_too_few_samples_raise(self) -> None:
        """Verify K · (1 + n) samples are required."""
        with pytest.raises(ConfigurationError, match="cannot support K = 3"):
            fit_em(np.zeros((8, 3)), 3)

    def test_non_finite_data_raises(self, two_cluster_data: np.ndarray) -> None:
        """Verify NaN training data is rejected."""
        data = two_cluster_data.copy()
        data[5, 1] = np.nan

        with pytest.raises(NumericalError, match="non-finite"):
            fit_em(data, 2, coordinate="tangent")

    def test_iteration_cap_logs_warning(
        self, planar_demos_joint: np.ndarray, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Verify hitting max_iter is reported and recorded."""
        caplog.set_level(logging.WARNING)

        mixture = fit_em(
            planar_demos_joint, 4, settings=EMSettings(max_iter=1, tol=1e-300)
        )

        assert mixture.converged is False
        assert mixture.n_iter == 1
        assert "without meeting tol" in caplog.text

    def test_callbacks_are_invoked(
        self, two_cluster_data: np.ndarray, mocker: MockerFixture
    ) -> None:
        """Verify lifecycle callbacks see the fit start, every iteration and the end."""
        callbacks = mocker.Mock()

        mixture = fit_em(two_cluster_data, 2, callbacks=callbacks)

        callbacks.before_fit.assert_called_once_with("cartesian", 200, 2)
        assert callbacks.on_em_iteration.call_count == mixture.n_iter
        callbacks.after_fit.assert_called_once_with(mixture)


class TestConditioning:
    """Tests for Gaussian mixture regression."""

    def test_single_component_matches_gaussian_conditioning(self) -> None:
        """Verify GMR with one component is ordinary Gaussian conditioning."""
        mixture = GaussianMixture(
            priors=np.array([1.0]),
            means=np.array([[0.5, 1.0]]),
            covariances=np.array([[[0.1, 0.05], [0.05, 0.2]]]),
        )

        result = condition(mixture, 0.9)

        assert result.mean[0] == pytest.approx(1.0 + 0.5 * 0.4)
        assert result.covariance[0, 0] == pytest.approx(0.2 - 0.05**2 / 0.1)
        assert result.fallback is False

    def test_linear_data_is_regressed(self) -> None:
        """Verify one component fitted to x = 2t + 1 predicts the line."""
        t = np.linspace(0.0, 1.0, 50)
        mixture = fit_em(np.column_stack([t, 2.0 * t + 1.0]), 1)

        assert condition(mixture, 0.25).mean[0] == pytest.approx(1.5, abs=1e-3)

    def test_relabelled_mixture_is_bit_identical(
        self, two_component_mixture: GaussianMixture
    ) -> None:
        """Verify permuting components does not change any conditional bit."""
        order = [1, 0]
        permuted = GaussianMixture(
            priors=two_component_mixture.priors[order],
            means=two_component_mixture.means[order],
            covariances=two_component_mixture.covariances[order],
        )
        times = np.linspace(0.0, 1.0, 13)

        original_means, original_covs, _ = condition_many(two_component_mixture, times)
        permuted_means, permuted_covs, _ = condition_many(permuted, times)

        np.testing.assert_array_equal(original_means, permuted_means)
        np.testing.assert_array_equal(original_covs, permuted_covs)

    def test_conditional_covariances_are_symmetric_positive_definite(
        self, two_component_mixture: GaussianMixture
    ) -> None:
        """Verify every conditional covariance is SPD."""
        _, covariances, fallback = condition_many(
            two_component_mixture, np.linspace(0, 1, 21)
        )

        np.testing.assert_array_equal(covariances, covariances.transpose(0, 2, 1))
        assert np.all(np.linalg.eigvalsh(covariances) > 0)
        assert not fallback.any()

    def test_responsibilities_sum_to_one(
        self, two_component_mixture: GaussianMixture
    ) -> None:
        """Verify responsibilities form a distribution at any time."""
        responsibilities, fallback = responsibilities_at(
            two_component_mixture, [0.0, 0.45, 1.0]
        )

        np.testing.assert_allclose(responsibilities.sum(axis=1), 1.0)
        assert np.all(responsibilities >= 0)
        assert not fallback.any()

    def test_underflow_falls_back_to_nearest_component(
        self, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Verify all-zero responsibilities fall back to the nearest component."""
        caplog.set_level(logging.WARNING)
        mixture = GaussianMixture(
            priors=np.array([1.0]),
            means=np.array([[0.0, 7.0]]),
            covariances=np.array([[[1e-320, 0.0], [0.0, 1.0]]]),
        )

        result = condition(mixture, 1.0)

        assert result.fallback is True
        assert result.mean[0] == pytest.approx(7.0)
        assert "nearest component" in caplog.text


class TestClosedForms:
    """Tests of closed-form mixture results."""

    def test_unit_correlation_example(self) -> None:
        """Verify conditioning a correlated unit Gaussian at t = 2."""
        mixture = GaussianMixture(
            priors=np.array([1.0]),
            means=np.zeros((1, 2)),
            covariances=np.array([[[1.0, 0.5], [0.5, 1.0]]]),
        )

        result = condition(mixture, 2.0)

        assert result.mean[0] == pytest.approx(1.0)
        assert result.covariance[0, 0] == pytest.approx(0.75)

    def test_single_component_fit_is_sample_statistics(
        self, planar_demos_joint: np.ndarray
    ) -> None:
        """Verify K = 1 recovers the sample mean and the ridged sample covariance."""
        mixture = fit_em(planar_demos_joint, 1)
        sample = np.cov(planar_demos_joint, rowvar=False, bias=True)
        assert mixture.regularization is not None

        np.testing.assert_allclose(
            mixture.means[0], planar_demos_joint.mean(axis=0), atol=1e-12
        )
        np.testing.assert_allclose(
            mixture.covariances[0],
            sample + mixture.regularization * np.eye(sample.shape[0]),
            rtol=1e-9,
            atol=1e-14,
        )

    def test_single_component_on_uniform_time_grid(self) -> None:
        """Verify K = 1 on 30 evenly spaced times gives the population variance + λ."""
        t = np.linspace(0.0, 1.0, 30)
        data = np.column_stack([t, 2.0 * t])
        mixture = fit_em(data, 1)
        assert mixture.regularization is not None

        expected = float(np.mean(data.var(axis=0))) * EMSettings().reg_factor
        assert mixture.regularization == pytest.approx(expected)
        assert mixture.covariances[0, 0, 0] == pytest.approx(
            0.08908 + mixture.regularization, abs=1e-5
        )
        assert mixture.covariances[0, 1, 1] == pytest.approx(
            4 * t.var() + mixture.regularization, rel=1e-9
        )
        np.testing.assert_allclose(mixture.means[0], [0.5, 1.0], atol=1e-12)

    def test_more_components_fit_at_least_as_well(
        self, planar_demos_joint: np.ndarray
    ) -> None:
        """Verify five components reach a log-likelihood no lower than one."""
        single = fit_em(planar_demos_joint, 1)
        five = fit_em(planar_demos_joint, 5)

        assert five.log_likelihoods[-1] >= single.log_likelihoods[-1]
