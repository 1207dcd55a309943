"""OpenTelemetry and logging setup for command-line runs.

Spans are always recorded by an SDK tracer provider so the lifecycle callbacks can
enrich them; they are only exported when an OTLP endpoint is configured. Log records
carry the active trace and span ids through the logging instrumentation.
"""

import logging
import os
import uuid

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import (
    OTLPSpanExporter,
)
from opentelemetry.instrumentation.logging import LoggingInstrumentor
from opentelemetry.sdk.resources import (
    SERVICE_INSTANCE_ID,
    SERVICE_NAME,
    SERVICE_NAMESPACE,
    SERVICE_VERSION,
    Resource,
)
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor

from . import __version__

LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(name)s - %(message)s"
_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


def setup_logging(log_level: str) -> None:
    """Configure the root logger.

    Args:
        log_level: Logging verbosity level as string
    """
    if log_level not in _LOG_LEVELS:
        logging.getLogger(__name__).warning(
            f"Received log_level: '{log_level}'. Defaulting to 'INFO'"
        )
        log_level = "INFO"

    logging.basicConfig(format=LOG_FORMAT, force=True)
    logging.getLogger().setLevel(log_level)
    return


def setup_tracing(
    service_name: str,
    otlp_endpoint: str | None,
    namespace: str,
) -> None:
    """Set up the tracer provider and trace-correlated logging.

    Args:
        service_name: OpenTelemetry service name
        otlp_endpoint: OTLP gRPC endpoint, or None to keep spans in-process
        namespace: Service namespace used to group traces

    Returns:
        None
    """
    resource = Resource.create(
        {
            SERVICE_INSTANCE_ID: f"cli-{os.getpid()}-{uuid.uuid4().hex}",
            SERVICE_NAME: service_name,
            SERVICE_NAMESPACE: namespace,
            SERVICE_VERSION: __version__,
        }
    )

    # Reuse a provider installed by the host application
    existing_tracer_provider = trace.get_tracer_provider()
    if isinstance(existing_tracer_provider, TracerProvider):
        tracer_provider = existing_tracer_provider
    else:
        tracer_provider = TracerProvider(resource=resource)
        trace.set_tracer_provider(tracer_provider)

    if otlp_endpoint:
        tracer_provider.add_span_processor(
            BatchSpanProcessor(OTLPSpanExporter(endpoint=otlp_endpoint))
        )
        logging.getLogger(__name__).info(f"Exporting spans to {otlp_endpoint}")

    # Inject trace ids into LogRecords without replacing the configured format
    LoggingInstrumentor().instrument(set_logging_format=False)
    return
