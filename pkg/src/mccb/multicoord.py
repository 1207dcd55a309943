"""Three independent coordinate mixtures trained from one aligned demonstration set.

Cartesian mixtures see the raw samples, tangent mixtures see ``G·X`` and Laplacian
mixtures see ``L·X`` for every demonstration ``X``. Profiles evaluate each mixture's
GMR conditional at every normalised time index of the training horizon.
"""

import logging
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, ValidationError

from .callbacks import LoggingCallbacks
from .config import EMSettings
from .diffops import OperatorKind, build_operator
from .errors import ArtifactMismatchError, ConfigurationError
from .gmm import (
    GaussianMixture,
    MixtureDocument,
    condition_many,
    fit_em,
    joint_samples,
    time_grid,
)
from .trajectory import DemonstrationSet

logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1


class Coordinate(StrEnum):
    """Coordinate systems a demonstration is encoded in."""

    CARTESIAN = "cartesian"
    TANGENT = "tangent"
    LAPLACIAN = "laplacian"

    @property
    def operator_kind(self) -> OperatorKind:
        """Differential operator mapping Cartesian samples into this coordinate."""
        if self is Coordinate.CARTESIAN:
            return OperatorKind.IDENTITY
        return OperatorKind(self.value)


COORDINATES: tuple[Coordinate, ...] = tuple(Coordinate)


@dataclass(frozen=True)
class ConditionalProfile:
    """Per-time GMR conditionals of one coordinate over a horizon.

    Attributes:
        coordinate: Coordinate the profile belongs to
        means: T x n stacked conditional means
        block_cov: T x n x n conditional covariances (the blocks of the
            block-diagonal covariance of the vectorised coordinate)
        fallback: Time indices where GMR fell back to the nearest component
    """

    coordinate: Coordinate
    means: NDArray[np.float64]
    block_cov: NDArray[np.float64]
    fallback: NDArray[np.bool_] = field(default_factory=lambda: np.zeros(0, bool))

    def __post_init__(self) -> None:
        means = np.array(self.means, dtype=np.float64)
        block_cov = np.array(self.block_cov, dtype=np.float64)
        if means.ndim != 2:
            msg = f"profile means must be (T, n), got shape {means.shape}"
            raise ValueError(msg)
        horizon, dims = means.shape
        if block_cov.shape != (horizon, dims, dims):
            msg = (
                f"profile covariances must be {(horizon, dims, dims)}, "
                f"got {block_cov.shape}"
            )
            raise ValueError(msg)
        fallback = np.array(self.fallback, dtype=bool)
        if fallback.size == 0:
            fallback = np.zeros(horizon, dtype=bool)
        for array in (means, block_cov, fallback):
            array.setflags(write=False)
        object.__setattr__(self, "coordinate", Coordinate(self.coordinate))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "block_cov", block_cov)
        object.__setattr__(self, "fallback", fallback)

    @property
    def horizon(self) -> int:
        """Number of time steps T."""
        return int(self.means.shape[0])

    @property
    def dims(self) -> int:
        """Number of value dimensions n."""
        return int(self.means.shape[1])


@dataclass(frozen=True)
class MultiCoordModel:
    """Cartesian, tangent and Laplacian mixtures of one skill.

    Attributes:
        cartesian: Mixture over (t, x)
        tangent: Mixture over (t, G·x)
        laplacian: Mixture over (t, L·x)
        horizon: Aligned horizon T of the training set
        dims: Value dimensions n
        reference_index: Alignment reference of the training set, when known
        labels: Training demonstration ids
    """

    cartesian: GaussianMixture
    tangent: GaussianMixture
    laplacian: GaussianMixture
    horizon: int
    dims: int
    reference_index: int | None = None
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for coordinate in COORDINATES:
            mixture = self.mixture(coordinate)
            if mixture.value_dims != self.dims:
                msg = (
                    f"{coordinate} mixture has {mixture.value_dims} value dimensions, "
                    f"model declares {self.dims}"
                )
                raise ArtifactMismatchError(msg)
        object.__setattr__(self, "labels", tuple(self.labels))

    def mixture(self, coordinate: Coordinate | str) -> GaussianMixture:
        """Mixture of one coordinate."""
        mixture: GaussianMixture = getattr(self, Coordinate(coordinate).value)
        return mixture

    def profile(self, coordinate: Coordinate | str) -> ConditionalProfile:
        """Conditional profile of one coordinate over the training horizon."""
        return profile(self, coordinate)

    def profiles(self) -> dict[Coordinate, ConditionalProfile]:
        """Profiles of all three coordinates."""
        return {coordinate: profile(self, coordinate) for coordinate in COORDINATES}


def transform(
    demos: DemonstrationSet, coordinate: Coordinate | str
) -> NDArray[np.float64]:
    """Return the N x T x n demonstration data in ``coordinate``."""
    coordinate = Coordinate(coordinate)
    stacked = demos.stack()
    if coordinate is Coordinate.CARTESIAN:
        return stacked
    op = build_operator(coordinate.operator_kind, demos.horizon)
    return np.stack([op.apply(samples) for samples in stacked])


def train(
    demos: DemonstrationSet,
    n_components: int = 5,
    seed: int = 0,
    settings: EMSettings | None = None,
    components: Mapping[str, int] | None = None,
    callbacks: LoggingCallbacks | None = None,
    workers: int | None = None,
    reference_index: int | None = None,
) -> MultiCoordModel:
    """Fit the three coordinate mixtures on an aligned demonstration set.

    Args:
        demos: Aligned demonstrations
        n_components: Components per mixture (K)
        seed: EM seed shared by the three fits
        settings: EM settings
        components: Per-coordinate K overrides, e.g. ``{"laplacian": 7}``
        callbacks: Optional lifecycle callbacks
        workers: Thread pool width for the concurrent fits (default 3)
        reference_index: Alignment reference recorded with the model

    Returns:
        Trained model

    Raises:
        DemonstrationFormatError: If the set is not aligned.
        ConfigurationError: On an unknown coordinate in ``components``.
    """
    horizon = demos.horizon
    overrides = dict(components or {})
    unknown = set(overrides) - {c.value for c in COORDINATES}
    if unknown:
        msg = f"unknown coordinates in component overrides: {sorted(unknown)}"
        raise ConfigurationError(msg)

    def fit(coordinate: Coordinate) -> GaussianMixture:
        data = joint_samples(transform(demos, coordinate))
        return fit_em(
            data,
            overrides.get(coordinate.value, n_components),
            seed=seed,
            settings=settings,
            coordinate=coordinate.value,
            callbacks=callbacks,
        )

    logger.info(
        f"Training {len(COORDINATES)} coordinate mixtures on {len(demos)} "
        f"demonstrations (T={horizon}, n={demos.dims})"
    )
    with ThreadPoolExecutor(max_workers=workers or len(COORDINATES)) as pool:
        cartesian, tangent, laplacian = pool.map(fit, COORDINATES)

    return MultiCoordModel(
        cartesian=cartesian,
        tangent=tangent,
        laplacian=laplacian,
        horizon=horizon,
        dims=demos.dims,
        reference_index=reference_index,
        labels=demos.labels,
    )


def profile(model: MultiCoordModel, coordinate: Coordinate | str) -> ConditionalProfile:
    """Evaluate a coordinate's GMR conditional at every training time index."""
    coordinate = Coordinate(coordinate)
    means, covariances, fallback = condition_many(
        model.mixture(coordinate), time_grid(model.horizon)
    )
    return ConditionalProfile(
        coordinate=coordinate, means=means, block_cov=covariances, fallback=fallback
    )


class ModelDocument(BaseModel):
    """JSON bundle of a trained model."""

    schema_version: Literal[1] = MODEL_SCHEMA_VERSION
    horizon: int
    dims: int
    reference_index: int | None = None
    labels: list[str] = []
    cartesian: MixtureDocument
    tangent: MixtureDocument
    laplacian: MixtureDocument

    model_config = ConfigDict(extra="forbid")


def save_model(model: MultiCoordModel, path: Path) -> None:
    """Write the model bundle as JSON."""
    document = ModelDocument(
        horizon=model.horizon,
        dims=model.dims,
        reference_index=model.reference_index,
        labels=list(model.labels),
        cartesian=model.cartesian.to_document(),
        tangent=model.tangent.to_document(),
        laplacian=model.laplacian.to_document(),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote model to {path}")


def load_model(path: Path) -> MultiCoordModel:
    """Read a model bundle written by ``save_model``.

    Raises:
        ArtifactMismatchError: If the file is missing or does not follow the schema.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        msg = f"Cannot read model artifact {path}: {e}"
        raise ArtifactMismatchError(msg) from e
    try:
        document = ModelDocument.model_validate_json(text)
        cartesian = GaussianMixture.from_document(document.cartesian)
        tangent = GaussianMixture.from_document(document.tangent)
        laplacian = GaussianMixture.from_document(document.laplacian)
    except (ValidationError, ValueError) as e:
        msg = f"Model artifact {path} is invalid: {e}"
        raise ArtifactMismatchError(msg) from e

    return MultiCoordModel(
        cartesian=cartesian,
        tangent=tangent,
        laplacian=laplacian,
        horizon=document.horizon,
        dims=document.dims,
        reference_index=document.reference_index,
        labels=tuple(document.labels),
    )
