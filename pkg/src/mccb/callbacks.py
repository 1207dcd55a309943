"""Pipeline lifecycle callbacks for monitoring.

This module provides callbacks that execute at various stages of a training or
balancing run: mixture fits, EM iterations, weight candidates and reproduction
solves. They log progress and enrich the active OpenTelemetry span.
"""

import logging
from typing import TYPE_CHECKING

from opentelemetry import trace

if TYPE_CHECKING:
    from .balance import BalanceResult, Candidate
    from .gmm import GaussianMixture
    from .reproduce import Reproduction


class LoggingCallbacks:
    """Provides observability callbacks for pipeline lifecycle events.

    This class groups all lifecycle callback methods together and supports logger
    injection following the strategy pattern. Covers both logging and trace
    enrichment (span attributes for EM and balancing progress). All callbacks are
    non-intrusive and return None.

    Attributes:
        logger: Logger instance for recording pipeline lifecycle events
    """

    def __init__(self, logger: logging.Logger | None = None) -> None:
        """Initialize logging callbacks with optional logger.

        Args:
            logger: Optional logger instance. If not provided, creates one
                   using the module name
        """
        if logger is None:
            logger = logging.getLogger(self.__class__.__module__)
        self.logger = logger

    def before_fit(self, coordinate: str, n_samples: int, n_components: int) -> None:
        """Callback executed before a coordinate mixture is fitted.

        Args:
            coordinate: Coordinate system of the training data
            n_samples: Number of joint (t, value) samples
            n_components: Number of mixture components K
        """
        self.logger.info(
            f"*** Fitting {coordinate} mixture: K={n_components} "
            f"on {n_samples} samples ***"
        )
        return

    def on_em_iteration(
        self, coordinate: str, iteration: int, log_likelihood: float
    ) -> None:
        """Callback executed after every EM iteration.

        Args:
            coordinate: Coordinate system being fitted
            iteration: One-based iteration number
            log_likelihood: Regularised log-likelihood after the iteration
        """
        self.logger.debug(
            f"{coordinate} EM iteration {iteration}: "
            f"log-likelihood {log_likelihood:.6f}"
        )
        return

    def after_fit(self, mixture: "GaussianMixture") -> None:
        """Callback executed after a mixture fit completes.

        Args:
            mixture: The fitted mixture
        """
        final = mixture.log_likelihoods[-1] if mixture.log_likelihoods else float("nan")
        status = "converged" if mixture.converged else "hit max_iter"
        self.logger.info(
            f"*** {mixture.coordinate} mixture {status} after {mixture.n_iter} "
            f"iterations (log-likelihood {final:.6f}) ***"
        )

        span = trace.get_current_span()
        span.set_attribute(f"mccb.em.{mixture.coordinate}.iterations", mixture.n_iter)
        span.set_attribute(f"mccb.em.{mixture.coordinate}.log_likelihood", final)
        span.set_attribute(f"mccb.em.{mixture.coordinate}.converged", mixture.converged)
        return

    def after_candidate(self, candidate: "Candidate") -> None:
        """Callback executed after one weight candidate is scored.

        Args:
            candidate: The evaluated candidate
        """
        alpha = ", ".join(f"{a:.4f}" for a in candidate.alpha)
        if candidate.feasible:
            self.logger.debug(f"alpha=({alpha}) SSE={candidate.objective:.6e}")
        else:
            self.logger.debug(f"alpha=({alpha}) skipped: {candidate.reason}")
        return

    def after_balance(self, result: "BalanceResult") -> None:
        """Callback executed after the weight search completes.

        Args:
            result: The balancing result
        """
        alpha = tuple(round(a, 6) for a in result.alpha)
        beta = tuple(round(b, 6) for b in result.beta)
        self.logger.info(
            f"*** Balanced weights: alpha={alpha} beta={beta} "
            f"training SSE={result.total_sse:.6e} "
            f"({len(result.grid_log)} candidates) ***"
        )

        span = trace.get_current_span()
        span.set_attribute("mccb.balance.objective", result.total_sse)
        span.set_attribute("mccb.balance.candidates", len(result.grid_log))
        span.set_attribute("mccb.balance.alpha", list(result.alpha))
        span.set_attribute("mccb.balance.beta", list(result.beta))
        return

    def after_solve(self, reproduction: "Reproduction") -> None:
        """Callback executed after a reproduction solve.

        Args:
            reproduction: The solved reproduction
        """
        self.logger.debug(
            f"Reproduction solved: KKT residual {reproduction.kkt_residual:.3e}, "
            f"constraint residual {reproduction.constraint_residual:.3e}"
        )

        span = trace.get_current_span()
        span.set_attribute("mccb.kkt.residual", reproduction.kkt_residual)
        span.set_attribute(
            "mccb.kkt.constraint_residual", reproduction.constraint_residual
        )
        return
