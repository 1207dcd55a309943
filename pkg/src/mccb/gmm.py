"""Gaussian mixtures over joint (time, value) space and mixture regression.

Mixtures are fitted by Expectation-Maximization on ``(t, value)`` pairs with ``t``
normalised to ``[0, 1]``. Every M-step adds ``λ·I`` to the weighted sample
covariance, with ``λ = reg_factor · mean(diag(cov(data)))``::

    Σ_k = S_k / N_k + λ·I

so every covariance eigenvalue stays at or above ``λ``. The E-step weighs each
component by ``exp(-λ/2 · tr(Σ_k⁻¹))``, the per-sample penalty whose exact
maximiser is the update above; the monitored penalised log-likelihood is therefore
non-decreasing across iterations.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict
from scipy.special import logsumexp
from scipy.stats import norm

from .config import EMSettings
from .errors import ConfigurationError, DegenerateComponentError, NumericalError

if TYPE_CHECKING:
    from .callbacks import LoggingCallbacks

logger = logging.getLogger(__name__)

PRIOR_SUM_TOLERANCE = 1e-12
_EMPTY_COMPONENT_FRACTION = 1e-10


@dataclass(frozen=True)
class GaussianMixture:
    """K Gaussian components over (1 + n)-dimensional joint (time, value) space.

    The first coordinate of every mean and covariance is time.

    Attributes:
        priors: K mixing weights summing to one
        means: K x (1 + n) component means
        covariances: K x (1 + n) x (1 + n) symmetric positive-definite covariances
        coordinate: Coordinate system the mixture was fitted in
        seed: Seed of the fit (used to reseed empty components)
        regularization: Ridge λ added to every covariance during the fit
        converged: Whether EM met its tolerance before the iteration cap
        n_iter: EM iterations performed
        log_likelihoods: Penalised log-likelihood after initialisation and after
            every iteration
    """

    priors: NDArray[np.float64]
    means: NDArray[np.float64]
    covariances: NDArray[np.float64]
    coordinate: str = "cartesian"
    seed: int = 0
    regularization: float | None = None
    converged: bool = True
    n_iter: int = 0
    log_likelihoods: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        priors = np.array(self.priors, dtype=np.float64).reshape(-1)
        means = np.array(self.means, dtype=np.float64)
        covariances = np.array(self.covariances, dtype=np.float64)
        k = priors.shape[0]
        if k < 1 or means.ndim != 2 or means.shape[0] != k or means.shape[1] < 2:
            msg = f"means must be (K, 1 + n) with K = {k}, got {means.shape}"
            raise ValueError(msg)
        dims = means.shape[1]
        if covariances.shape != (k, dims, dims):
            msg = f"covariances must be {(k, dims, dims)}, got {covariances.shape}"
            raise ValueError(msg)
        if np.any(priors <= 0) or abs(priors.sum() - 1.0) > PRIOR_SUM_TOLERANCE:
            msg = f"priors must be positive and sum to 1, got {priors.tolist()}"
            raise ValueError(msg)
        asymmetry = np.abs(covariances - covariances.transpose(0, 2, 1)).max()
        if asymmetry > 1e-10 * max(1.0, float(np.abs(covariances).max())):
            msg = f"covariances must be symmetric (max asymmetry {asymmetry:.3e})"
            raise ValueError(msg)
        for index, covariance in enumerate(covariances):
            try:
                scipy.linalg.cholesky(covariance, lower=True)
            except np.linalg.LinAlgError as e:
                msg = f"component {index} covariance is not positive definite"
                raise DegenerateComponentError(msg) from e

        for array in (priors, means, covariances):
            array.setflags(write=False)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)
        object.__setattr__(self, "log_likelihoods", tuple(self.log_likelihoods))

    @property
    def n_components(self) -> int:
        """Number of components K."""
        return int(self.priors.shape[0])

    @property
    def value_dims(self) -> int:
        """Number of value dimensions n (joint dimension minus time)."""
        return int(self.means.shape[1] - 1)

    @cached_property
    def canonical_order(self) -> NDArray[np.intp]:
        """Component order by time mean, then value means, then prior.

        Conditioning always sums components in this order, so relabelled mixtures
        yield bit-identical results.
        """
        keys = np.vstack([self.priors, self.means.T[::-1]])
        return np.lexsort(keys)

    def to_document(self) -> "MixtureDocument":
        """Serialisable JSON document."""
        return MixtureDocument(
            coordinate=self.coordinate,
            n_components=self.n_components,
            seed=self.seed,
            priors=self.priors.tolist(),
            means=self.means.tolist(),
            covariances=self.covariances.tolist(),
            regularization=self.regularization,
            converged=self.converged,
            n_iter=self.n_iter,
            log_likelihoods=list(self.log_likelihoods),
        )

    @classmethod
    def from_document(cls, document: "MixtureDocument") -> "GaussianMixture":
        """Rebuild a mixture from its JSON document."""
        if len(document.priors) != document.n_components:
            msg = (
                f"mixture document declares K = {document.n_components} "
                f"but holds {len(document.priors)} priors"
            )
            raise ValueError(msg)
        return cls(
            priors=np.asarray(document.priors),
            means=np.asarray(document.means),
            covariances=np.asarray(document.covariances),
            coordinate=document.coordinate,
            seed=document.seed,
            regularization=document.regularization,
            converged=document.converged,
            n_iter=document.n_iter,
            log_likelihoods=tuple(document.log_likelihoods),
        )


class MixtureDocument(BaseModel):
    """JSON schema of a persisted mixture."""

    coordinate: str
    n_components: int
    seed: int
    priors: list[float]
    means: list[list[float]]
    covariances: list[list[list[float]]]
    regularization: float | None = None
    converged: bool = True
    n_iter: int = 0
    log_likelihoods: list[float] = []

    model_config = ConfigDict(extra="forbid")


@dataclass(frozen=True)
class Conditional:
    """GMR estimate of the value at one time.

    Attributes:
        mean: Conditional mean (n,)
        covariance: Conditional covariance (n, n)
        fallback: True when every responsibility underflowed and the nearest
            component was used alone
    """

    mean: NDArray[np.float64]
    covariance: NDArray[np.float64]
    fallback: bool = False


def time_grid(horizon: int) -> NDArray[np.float64]:
    """Normalised time stamps ``0, 1/(T-1), ..., 1`` of a horizon."""
    return np.linspace(0.0, 1.0, horizon)


def joint_samples(values: ArrayLike) -> NDArray[np.float64]:
    """Stack N x T x n coordinate data into (N·T) x (1 + n) ``(t, value)`` pairs."""
    data = np.asarray(values, dtype=np.float64)
    if data.ndim == 2:
        data = data[np.newaxis]
    count, horizon, dims = data.shape
    times = np.tile(time_grid(horizon), count)
    return np.column_stack([times, data.reshape(count * horizon, dims)])


def _regularization(data: NDArray[np.float64], reg_factor: float) -> float:
    # population covariance; a constant data set falls back to reg_factor itself
    scale = float(np.mean(data.var(axis=0)))
    return reg_factor * scale if scale > 0 else reg_factor


def _regularized_covariance(
    centered: NDArray[np.float64],
    weights: NDArray[np.float64],
    regularization: float,
) -> NDArray[np.float64]:
    scatter = (weights[:, np.newaxis] * centered).T @ centered
    covariance = scatter / weights.sum() + regularization * np.eye(scatter.shape[0])
    return 0.5 * (covariance + covariance.T)


def _initialize(
    data: NDArray[np.float64],
    n_components: int,
    regularization: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    # Contiguous equal-count bins along the time axis
    order = np.argsort(data[:, 0], kind="stable")
    bins = np.array_split(order, n_components)
    priors = np.array([len(b) for b in bins], dtype=np.float64) / data.shape[0]
    means = np.stack([data[b].mean(axis=0) for b in bins])
    covariances = np.stack(
        [
            _regularized_covariance(
                data[b] - means[k], np.ones(len(b)), regularization
            )
            for k, b in enumerate(bins)
        ]
    )
    return priors, means, covariances


def _log_densities(
    data: NDArray[np.float64],
    means: NDArray[np.float64],
    covariances: NDArray[np.float64],
    regularization: float = 0.0,
) -> NDArray[np.float64]:
    """Per-sample, per-component Gaussian log densities, shape (M, K).

    A positive ``regularization`` subtracts ``λ/2 · tr(Σ_k⁻¹)`` from every column.
    """
    count, dims = data.shape
    out = np.empty((count, means.shape[0]))
    for k, (mean, covariance) in enumerate(zip(means, covariances, strict=True)):
        try:
            chol = scipy.linalg.cholesky(covariance, lower=True)
        except (np.linalg.LinAlgError, ValueError) as e:
            msg = f"component {k} collapsed: covariance lost positive definiteness"
            raise DegenerateComponentError(msg) from e
        solved = scipy.linalg.solve_triangular(chol, (data - mean).T, lower=True)
        out[:, k] = (
            -0.5 * dims * np.log(2.0 * np.pi)
            - np.sum(np.log(np.diag(chol)))
            - 0.5 * np.sum(solved**2, axis=0)
        )
        if regularization > 0:
            inverse_chol = scipy.linalg.solve_triangular(
                chol, np.eye(dims), lower=True
            )
            out[:, k] -= 0.5 * regularization * float(np.sum(inverse_chol**2))
    return out


def _maximize(
    data: NDArray[np.float64],
    responsibilities: NDArray[np.float64],
    regularization: float,
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    count = data.shape[0]
    weights = responsibilities.sum(axis=0)
    empty = weights < _EMPTY_COMPONENT_FRACTION * count
    if np.any(empty):
        for k in np.flatnonzero(empty):
            anchor = int(rng.integers(count))
            logger.warning(f"Reseeding empty component {k} at sample {anchor}")
            responsibilities[:, k] = 0.0
            responsibilities[anchor, k] = 1.0
        weights = responsibilities.sum(axis=0)

    priors = weights / weights.sum()
    means = (responsibilities.T @ data) / weights[:, np.newaxis]
    covariances = np.stack(
        [
            _regularized_covariance(
                data - means[k], responsibilities[:, k], regularization
            )
            for k in range(means.shape[0])
        ]
    )
    return priors, means, covariances


def fit_em(
    data: ArrayLike,
    n_components: int,
    seed: int = 0,
    settings: EMSettings | None = None,
    coordinate: str = "cartesian",
    callbacks: "LoggingCallbacks | None" = None,
) -> GaussianMixture:
    """Fit a K-component mixture to joint ``(t, value)`` samples by EM.

    Args:
        data: M x (1 + n) samples, time in the first column
        n_components: Number of components K
        seed: Seed for reseeding components that lose all responsibility
        settings: EM tolerance, iteration cap and regularization factor
        coordinate: Coordinate tag stored with the mixture
        callbacks: Optional lifecycle callbacks

    Returns:
        Fitted mixture

    Raises:
        ConfigurationError: If there are fewer than K · (1 + n) samples.
        NumericalError: If the data contains non-finite values.
        DegenerateComponentError: If a covariance collapses despite regularization.
    """
    settings = settings or EMSettings()
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        msg = f"expected (M, 1 + n) joint samples, got shape {X.shape}"
        raise ConfigurationError(msg)
    count, dims = X.shape
    if n_components < 1:
        msg = f"K must be at least 1, got {n_components}"
        raise ConfigurationError(msg)
    if count < n_components * dims:
        msg = (
            f"{count} samples cannot support K = {n_components} components in "
            f"{dims} joint dimensions (need at least {n_components * dims})"
        )
        raise ConfigurationError(msg)
    if not np.all(np.isfinite(X)):
        msg = f"non-finite training data for the {coordinate} mixture"
        raise NumericalError(msg)

    if callbacks is not None:
        callbacks.before_fit(coordinate, count, n_components)

    rng = np.random.default_rng(seed)
    regularization = _regularization(X, settings.reg_factor)
    priors, means, covariances = _initialize(X, n_components, regularization)

    def expectation() -> tuple[float, NDArray[np.float64]]:
        log_densities = _log_densities(X, means, covariances, regularization)
        log_weighted = log_densities + np.log(priors)
        log_norm = logsumexp(log_weighted, axis=1)
        objective = float(log_norm.sum())
        return objective, np.exp(log_weighted - log_norm[:, np.newaxis])

    objective, responsibilities = expectation()
    history = [objective]
    converged = False
    iteration = 0
    for iteration in range(1, settings.max_iter + 1):
        priors, means, covariances = _maximize(X, responsibilities, regularization, rng)
        objective, responsibilities = expectation()
        history.append(objective)
        if callbacks is not None:
            callbacks.on_em_iteration(coordinate, iteration, objective)
        previous = history[-2]
        if abs(objective - previous) < settings.tol * max(abs(previous), 1e-300):
            converged = True
            break

    if not converged:
        logger.warning(
            f"EM for the {coordinate} mixture stopped at max_iter="
            f"{settings.max_iter} without meeting tol={settings.tol}"
        )

    floor = regularization
    smallest = float(min(np.linalg.eigvalsh(c).min() for c in covariances))
    if smallest < floor * (1.0 - 1e-6):
        msg = (
            f"{coordinate} mixture degenerate: smallest covariance eigenvalue "
            f"{smallest:.3e} below the regularization floor {floor:.3e}"
        )
        raise DegenerateComponentError(msg)

    mixture = GaussianMixture(
        priors=priors,
        means=means,
        covariances=covariances,
        coordinate=coordinate,
        seed=seed,
        regularization=regularization,
        converged=converged,
        n_iter=iteration,
        log_likelihoods=tuple(history),
    )
    if callbacks is not None:
        callbacks.after_fit(mixture)
    return mixture


def responsibilities_at(
    model: GaussianMixture, times: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Normalised responsibilities h^k(t) at several times, canonical order.

    Rows whose time-marginal densities all underflow put their whole weight on the
    component nearest in standardised distance and are flagged in the mask.

    Returns:
        Tuple of responsibilities (Q, K) and a fallback mask (Q,)
    """
    ts = np.atleast_1d(np.asarray(times, dtype=np.float64))
    order = model.canonical_order
    mu_t = model.means[order, 0]
    sd_t = np.sqrt(model.covariances[order, 0, 0])
    log_weighted = np.log(model.priors[order]) + norm.logpdf(
        ts[:, np.newaxis], loc=mu_t, scale=sd_t
    )
    log_norm = logsumexp(log_weighted, axis=1)
    fallback = ~np.isfinite(log_norm)
    responsibilities = np.zeros_like(log_weighted)
    ok = ~fallback
    responsibilities[ok] = np.exp(log_weighted[ok] - log_norm[ok, np.newaxis])
    responsibilities[ok] /= responsibilities[ok].sum(axis=1, keepdims=True)
    if np.any(fallback):
        nearest = np.argmin(np.abs(ts[fallback, np.newaxis] - mu_t) / sd_t, axis=1)
        responsibilities[np.flatnonzero(fallback), nearest] = 1.0
        logger.warning(
            f"Responsibilities underflowed at {int(fallback.sum())} query times; "
            "using the nearest component"
        )
    return responsibilities, fallback


def condition_many(
    model: GaussianMixture, times: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """GMR conditional means and covariances at several times.

    Returns:
        Tuple of means (Q, n), covariances (Q, n, n) and a fallback mask (Q,)
    """
    ts = np.atleast_1d(np.asarray(times, dtype=np.float64))
    order = model.canonical_order
    means = model.means[order]
    covariances = model.covariances[order]

    mu_t = means[:, 0]
    var_t = covariances[:, 0, 0]
    mu_x = means[:, 1:]
    cov_xt = covariances[:, 1:, 0]
    cov_x = covariances[:, 1:, 1:]
    gains = cov_xt / var_t[:, np.newaxis]
    responsibilities, fallback = responsibilities_at(model, ts)

    component_means = mu_x[np.newaxis] + gains[np.newaxis] * (
        ts[:, np.newaxis, np.newaxis] - mu_t[np.newaxis, :, np.newaxis]
    )
    component_covariances = cov_x - gains[:, :, np.newaxis] * cov_xt[:, np.newaxis, :]
    cond_means = np.einsum("qk,qkn->qn", responsibilities, component_means)
    cond_covariances = np.einsum(
        "qk,kij->qij", responsibilities**2, component_covariances
    )
    cond_covariances = 0.5 * (cond_covariances + cond_covariances.transpose(0, 2, 1))
    return cond_means, cond_covariances, fallback


def condition(model: GaussianMixture, t: float) -> Conditional:
    """GMR conditional mean and covariance of the value at time ``t``.

    ``mean = Σ_k h_k (μ_x + Σ_xt Σ_t⁻¹ (t − μ_t))`` and
    ``covariance = Σ_k h_k² (Σ_x − Σ_xt Σ_t⁻¹ Σ_tx)``.
    """
    means, covariances, fallback = condition_many(model, [t])
    return Conditional(
        mean=means[0], covariance=covariances[0], fallback=bool(fallback[0])
    )
