"""Configuration models for the runtime environment and for experiment runs.

This module provides Pydantic models for type-safe environment variable validation
(``RuntimeEnv``), numerical settings (``EMSettings``) and the experiment description
consumed by the command-line interface (``RunConfig``).
"""

import logging
import math
import os
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
)

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

DatasetFormat = Literal["csv-dir", "jsonl"]
EndpointMode = Literal["both", "initial", "target"]
MethodName = Literal["cartesian", "tangent", "laplacian", "uniform", "mccb"]

ALL_METHODS: tuple[MethodName, ...] = (
    "cartesian",
    "tangent",
    "laplacian",
    "uniform",
    "mccb",
)


def initialize_environment[T: BaseModel](
    model_class: type[T],
    override_dotenv: bool = True,
    print_config: bool = True,
) -> T:
    """Initialize and validate environment configuration.

    Factory function that handles the common initialization pattern: load environment
    variables, validate with Pydantic model, handle errors, and optionally log the
    configuration.

    Args:
        model_class: Pydantic model class to validate environment with
        override_dotenv: Whether to override existing environment variables
            (default True)
        print_config: Whether to call print_config() method if it exists (default True)

    Returns:
        Validated environment configuration instance

    Raises:
        ConfigurationError: If Pydantic validation fails.

    Examples:
        >>> env = initialize_environment(RuntimeEnv)
        >>> env = initialize_environment(RuntimeEnv, print_config=False)
    """
    load_dotenv(override=override_dotenv)

    try:
        env = model_class.model_validate(os.environ)
    except ValidationError as e:
        msg = f"Environment validation failed:\n{e}"
        raise ConfigurationError(msg) from e

    if print_config and hasattr(env, "print_config"):
        env.print_config()

    return env


class RuntimeEnv(BaseModel):
    """Process-level settings read from the environment (and ``.env``).

    Attributes:
        log_level: Logging verbosity level
        workers: Thread pool width for mixture fits and candidate evaluation
        service_name: OpenTelemetry service name
        otlp_endpoint: OTLP gRPC endpoint; spans are only exported when set
        telemetry_namespace: Namespace used to group traces of one user or machine
    """

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        alias="MCCB_LOG_LEVEL",
        description="Logging verbosity level",
    )

    workers: int | None = Field(
        default=None,
        alias="MCCB_WORKERS",
        gt=0,
        description="Thread pool width (default: one worker per task up to CPU count)",
    )

    service_name: str = Field(
        default="mccb",
        alias="OTEL_SERVICE_NAME",
        description="OpenTelemetry service name",
    )

    otlp_endpoint: str | None = Field(
        default=None,
        alias="OTEL_EXPORTER_OTLP_ENDPOINT",
        description="OTLP gRPC endpoint for span export (e.g., http://localhost:4317)",
    )

    telemetry_namespace: str = Field(
        default="local",
        alias="TELEMETRY_NAMESPACE",
        description="Trace grouping namespace",
    )

    model_config = ConfigDict(
        populate_by_name=True,  # Allow both field names and aliases
        extra="ignore",  # Ignore extra env vars (system vars, etc.)
    )

    def print_config(self) -> None:
        """Log the runtime configuration for user verification."""
        logger.info(f"MCCB_LOG_LEVEL:              {self.log_level}")
        logger.info(f"MCCB_WORKERS:                {self.workers}")
        logger.info(f"OTEL_SERVICE_NAME:           {self.service_name}")
        logger.info(f"OTEL_EXPORTER_OTLP_ENDPOINT: {self.otlp_endpoint}")
        logger.info(f"TELEMETRY_NAMESPACE:         {self.telemetry_namespace}")


class EMSettings(BaseModel):
    """Expectation-Maximization settings shared by the three coordinate mixtures.

    Attributes:
        tol: Relative change of the regularized log-likelihood that stops EM
        max_iter: Iteration cap
        reg_factor: Ridge λ added to every covariance, as a fraction of the mean
            diagonal of the data covariance
    """

    tol: float = Field(default=1e-8, gt=0.0)
    max_iter: int = Field(default=300, gt=0)
    reg_factor: float = Field(default=1e-6, gt=0.0)

    model_config = ConfigDict(frozen=True, extra="forbid")


class ViaPoint(BaseModel):
    """One via-point constraint: the reproduction passes through ``value`` at ``t``."""

    t: int = Field(..., ge=0, description="Zero-based index on the aligned horizon")
    value: list[float] = Field(..., min_length=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("value")
    @classmethod
    def validate_finite(cls, v: list[float]) -> list[float]:
        """Reject NaN and infinite coordinates."""
        if not all(math.isfinite(x) for x in v):
            msg = "via point values must be finite"
            raise ValueError(msg)
        return v


class RunConfig(BaseModel):
    """Experiment description for the ``train``, ``compare`` and ``reproduce`` commands.

    Every field can come from the JSON config file and be overridden on the command
    line by a flag of the same name. The fully defaulted model is echoed into the
    run manifest so an output directory is enough to re-run the experiment.

    Attributes:
        dataset: Demonstration file or directory
        format: Dataset layout (``csv-dir`` or ``jsonl``)
        target_horizon: Aligned horizon T (default: the alignment reference's length)
        reference_index: Alignment reference (default: the DTW medoid)
        n_components: Gaussian components per coordinate (K)
        seed: EM seed recorded with every mixture
        grid_step: Simplex lattice spacing for the weight search
        endpoint_mode: Which endpoints each demonstration's constraints pin
        via_points: Extra per-demonstration via points keyed by demonstration id
        output_dir: Directory receiving every artifact
        baselines: Weight settings evaluated by ``compare``
        em: EM settings
        dense_threshold: Horizons up to this value use the dense KKT solver
    """

    dataset: Path = Field(..., description="Demonstration file or directory")
    format: DatasetFormat = Field(default="csv-dir")
    target_horizon: int | None = Field(default=None, alias="target_T", ge=3)
    reference_index: int | None = Field(default=None, ge=0)
    n_components: int = Field(default=5, alias="K", ge=1)
    seed: int = Field(default=0)
    grid_step: float = Field(default=0.05, gt=0.0, le=0.5)
    endpoint_mode: EndpointMode = Field(default="both")
    via_points: dict[str, list[ViaPoint]] = Field(default_factory=dict)
    output_dir: Path = Field(default=Path("mccb-output"))
    baselines: list[MethodName] = Field(default_factory=lambda: list(ALL_METHODS))
    em: EMSettings = Field(default_factory=EMSettings)
    dense_threshold: int = Field(default=200, ge=3)

    model_config = ConfigDict(
        populate_by_name=True,
        extra="forbid",
    )

    @field_validator("baselines")
    @classmethod
    def validate_baselines(cls, v: list[MethodName]) -> list[MethodName]:
        """Require a non-empty list without duplicates."""
        if not v:
            msg = "baselines must contain at least one method"
            raise ValueError(msg)
        if len(set(v)) != len(v):
            msg = "baselines must not contain duplicates"
            raise ValueError(msg)
        return v

    def print_config(self) -> None:
        """Log the run configuration for user verification."""
        logger.info(f"dataset:        {self.dataset} ({self.format})")
        logger.info(f"target_T:       {self.target_horizon}")
        logger.info(f"K:              {self.n_components}")
        logger.info(f"seed:           {self.seed}")
        logger.info(f"grid_step:      {self.grid_step}")
        logger.info(f"endpoint_mode:  {self.endpoint_mode}")
        logger.info(f"output_dir:     {self.output_dir}")
        logger.info(f"baselines:      {', '.join(self.baselines)}")


def load_run_config(
    config_path: Path | None,
    overrides: dict[str, object],
) -> RunConfig:
    """Build a ``RunConfig`` from an optional JSON file plus flag overrides.

    Args:
        config_path: JSON file following the ``RunConfig`` schema, or None
        overrides: Field values given on the command line (aliases accepted);
            mapping values such as ``em`` are merged key by key into the file

    Returns:
        Validated run configuration

    Raises:
        ConfigurationError: If the file is unreadable or validation fails.
    """
    data: dict[str, object] = {}
    if config_path is not None:
        try:
            text = config_path.read_text(encoding="utf-8")
        except OSError as e:
            msg = f"Cannot read config file {config_path}: {e}"
            raise ConfigurationError(msg) from e
        try:
            base = RunConfig.model_validate_json(text)
        except ValidationError as e:
            msg = f"Config file {config_path} failed validation:\n{e}"
            raise ConfigurationError(msg) from e
        data = base.model_dump(by_alias=True)

    for key, value in overrides.items():
        current = data.get(key)
        if isinstance(value, dict) and isinstance(current, dict):
            data[key] = {**current, **value}
        else:
            data[key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        msg = f"Run configuration failed validation:\n{e}"
        raise ConfigurationError(msg) from e
