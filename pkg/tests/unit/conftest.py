"""Shared pytest fixtures for unit tests.

``pytest_configure()`` mocks dotenv so unit collection never reads a developer's
``.env`` file.
"""

from __future__ import annotations

from collections.abc import Callable
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pytest
from pytest_mock import MockerFixture, MockType

if TYPE_CHECKING:
    from mccb.multicoord import ConditionalProfile, MultiCoordModel
    from mccb.reproduce import QuadraticCost
    from mccb.trajectory import DemonstrationSet

# Source root holding the single package (src/<package>/). Patch targets below build
# off PACKAGE_NAME rather than a literal.
SRC_DIR = Path(__file__).parents[2] / "src"

PACKAGE_NAME = next(SRC_DIR.glob("*/__init__.py")).parent.name


def pytest_configure(config: pytest.Config) -> None:
    """Pytest hook to set up environment before test collection.

    This hook runs BEFORE pytest's plugin system is fully initialized, including
    pytest-mock, so unittest.mock is the only tool available here. All other mocking
    (fixtures and tests) uses pytest-mock's mocker fixture.

    CONSEQUENCE: All src package imports in this file MUST be deferred to fixture
    or function bodies. A top-level ``from package.x import Y`` would execute
    during test collection, before these patches take effect.
    """
    from unittest.mock import patch

    # Patch load_dotenv to prevent loading a real .env file during module imports
    load_dotenv_patcher = patch("dotenv.load_dotenv")
    load_dotenv_patcher.start()


# Demonstration fixtures
@pytest.fixture(scope="session")
def planar_demos() -> DemonstrationSet:
    """Four aligned translated planar demonstrations with T = 40."""
    from mccb.synthetic import translated_family

    return translated_family(n_demos=4, horizon=40, seed=0)


@pytest.fixture
def create_demos() -> Callable[..., DemonstrationSet]:
    """Factory for aligned demonstration sets built from raw arrays."""
    from mccb.trajectory import DemonstrationSet, Trajectory

    def _factory(
        *curves: np.ndarray, labels: tuple[str, ...] = ()
    ) -> DemonstrationSet:
        return DemonstrationSet(tuple(Trajectory(c) for c in curves), labels)

    return _factory


@pytest.fixture
def csv_dataset(tmp_path: Path, planar_demos: DemonstrationSet) -> Path:
    """The planar demonstrations written as a ``csv-dir`` dataset."""
    from mccb.synthetic import write_csv_dir

    path = tmp_path / "demos"
    write_csv_dir(planar_demos, path)
    return path


# Model fixtures
@pytest.fixture(scope="session")
def trained_model(planar_demos: DemonstrationSet) -> MultiCoordModel:
    """Three-component model trained on the planar demonstrations."""
    from mccb.multicoord import train

    return train(planar_demos, n_components=3, seed=0)


@pytest.fixture(scope="session")
def trained_cost(trained_model: MultiCoordModel) -> QuadraticCost:
    """Quadratic cost assembled from the trained model."""
    from mccb.reproduce import QuadraticCost

    return QuadraticCost.from_model(trained_model)


@pytest.fixture
def create_profiles() -> Callable[..., dict[str, ConditionalProfile]]:
    """Factory for random profiles with SPD covariance blocks, keyed by coordinate.

    Profiles are built directly so reproduction tests can compare against a dense
    oracle without training a model.
    """
    from mccb.multicoord import COORDINATES, ConditionalProfile

    def _factory(
        horizon: int = 6, dims: int = 2, seed: int = 0
    ) -> dict[str, ConditionalProfile]:
        rng = np.random.default_rng(seed)
        profiles = {}
        for coordinate in COORDINATES:
            factors = rng.normal(size=(horizon, dims, dims))
            block_cov = factors @ factors.transpose(0, 2, 1) + 0.5 * np.eye(dims)
            profiles[coordinate] = ConditionalProfile(
                coordinate=coordinate,
                means=rng.normal(size=(horizon, dims)),
                block_cov=block_cov,
            )
        return profiles

    return _factory


# Observability fixtures
@pytest.fixture
def mock_span(mocker: MockerFixture) -> MockType:
    """Mock span returned by ``trace.get_current_span()`` in callbacks."""
    span = mocker.Mock()
    mocker.patch(f"{PACKAGE_NAME}.callbacks.trace.get_current_span", return_value=span)
    return span


@pytest.fixture
def mock_telemetry(mocker: MockerFixture) -> dict[str, MockType]:
    """Mock logging and tracing setup so CLI tests leave global state alone."""
    return {
        "setup_logging": mocker.patch(f"{PACKAGE_NAME}.cli.setup_logging"),
        "setup_tracing": mocker.patch(f"{PACKAGE_NAME}.cli.setup_tracing"),
    }


# Config testing fixtures
@pytest.fixture
def valid_runtime_env() -> dict[str, str]:
    """Valid environment variables for the RuntimeEnv model."""
    return {
        "MCCB_LOG_LEVEL": "DEBUG",
        "MCCB_WORKERS": "2",
        "OTEL_SERVICE_NAME": "mccb-test",
    }


@pytest.fixture
def mock_load_dotenv(mocker: MockerFixture) -> MockType:
    """Mock load_dotenv function for testing.

    Returns:
        Mock object for load_dotenv function.
    """
    return mocker.patch(f"{PACKAGE_NAME}.config.load_dotenv")


@pytest.fixture
def mock_print_config(mocker: MockerFixture) -> Callable[[type], MockType]:
    """Factory fixture for mocking print_config on any model class.

    Returns:
        Function that patches print_config on a given model class.
    """

    def _mock_print_config(model_class: type) -> MockType:
        return mocker.patch.object(model_class, "print_config", autospec=True)

    return _mock_print_config
