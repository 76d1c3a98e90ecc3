import logging
import math
from collections.abc import Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..core import ModelParams
from ..errors import ConfigurationError, ConvergenceError
from ..mechanisms import Mechanism
from .chain import DEFAULT_TRUNCATION, MAX_ITERATIONS, VALUE_TOLERANCE, build_chain, coordinator_revenue

logger = logging.getLogger(__name__)

EXACT_TOLERANCE = 1e-9


class WelfareReport(BaseModel):
    """Discounted gross/net social welfare and coordinator revenue, exact or estimated."""

    model_config = ConfigDict(frozen=True)

    mechanism: str
    mode: str = "analytic"
    delta: float
    gsw: float
    nsw: float
    revenue: float
    normalized: bool = False
    gsw_stderr: float | None = None
    nsw_stderr: float | None = None
    revenue_stderr: float | None = None
    episodes: int | None = None
    truncation_bound: float = 0.0

    @model_validator(mode="after")
    def _check_accounting(self) -> "WelfareReport":
        if self.gsw_stderr is None:
            slack = EXACT_TOLERANCE
        else:
            slack = 3.0 * math.hypot(self.gsw_stderr, self.revenue_stderr or 0.0) + EXACT_TOLERANCE
        if abs(self.nsw - (self.gsw - self.revenue)) > slack:
            raise ValueError(f"nsw={self.nsw} does not equal gsw - revenue = {self.gsw - self.revenue}")
        return self

    @property
    def estimated(self) -> bool:
        return self.gsw_stderr is not None

    def normalize(self) -> "WelfareReport":
        """Scale every welfare and revenue figure (and its standard error) by ``1 - delta``."""
        if self.normalized:
            return self
        scale = 1.0 - self.delta

        def scaled(x: float | None) -> float | None:
            return None if x is None else x * scale

        return self.model_copy(
            update={
                "gsw": self.gsw * scale,
                "nsw": self.nsw * scale,
                "revenue": self.revenue * scale,
                "gsw_stderr": scaled(self.gsw_stderr),
                "nsw_stderr": scaled(self.nsw_stderr),
                "revenue_stderr": scaled(self.revenue_stderr),
                "truncation_bound": self.truncation_bound * scale,
                "normalized": True,
            }
        )


def nsii_gsw_closed_form(params: ModelParams) -> float:
    """Expected discounted gross social welfare under NSII."""
    p, pbar, d = params.p, params.pbar, params.delta
    root = math.sqrt(1.0 - 4.0 * d**2 * p * pbar)
    return pbar / ((1.0 - d) * (1.0 + root)) * (1.0 + (1.0 - 2.0 * d**2 * p) / root)


def bhw_gsw_closed_form(params: ModelParams) -> float:
    """Expected discounted gross social welfare of sequential learning without a coordinator."""
    p, pbar, d = params.p, params.pbar, params.delta
    return pbar * (1.0 - p * d**2) / ((1.0 - d) * (1.0 - 2.0 * p * pbar * d**2))


def social_recursion_value(
    params: ModelParams,
    truncation: int = DEFAULT_TRUNCATION,
    tol: float = VALUE_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> float:
    """
    Gross social welfare under NSII from the random walk of the true summary given ``W = +1``.

    Agents earn 1 while the summary is positive, ``pbar`` at 0 (the action follows the signal)
    and nothing while it is negative. The walk is cut at ``+-K`` with ``R_{-K} = 0`` and
    ``R_{+K} = 1 / (1 - delta)``.
    """
    if truncation < 10:
        raise ConfigurationError(f"social recursion needs K >= 10, got {truncation}")

    p, pbar, d = params.p, params.pbar, params.delta
    k = np.arange(-truncation, truncation + 1)
    reward = np.where(k > 0, 1.0, np.where(k == 0, pbar, 0.0))

    values = np.zeros(k.size)
    values[-1] = 1.0 / (1.0 - d)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        interior = reward[1:-1] + d * (pbar * values[2:] + p * values[:-2])
        residual = float(np.max(np.abs(interior - values[1:-1])))
        values[1:-1] = interior
        if residual < tol:
            logger.info(f"Social recursion converged after {iteration} sweeps (residual={residual:.2e})")
            return float(values[truncation])
    raise ConvergenceError("social recursion did not converge", iterations=max_iter, residual=residual)


def welfare_report(
    params: ModelParams,
    mechanism: Mechanism | str,
    normalize: bool = False,
    truncation: int = DEFAULT_TRUNCATION,
) -> WelfareReport:
    """Exact welfare figures for BHW or NSII."""
    mechanism = Mechanism(mechanism)
    if mechanism is Mechanism.BHW:
        gsw = bhw_gsw_closed_form(params)
        report = WelfareReport(mechanism=mechanism.value, delta=params.delta, gsw=gsw, nsw=gsw, revenue=0.0)
    else:
        chain = build_chain(params, truncation)
        gsw = nsii_gsw_closed_form(params)
        revenue = coordinator_revenue(chain, params.delta)
        report = WelfareReport(
            mechanism=mechanism.value,
            delta=params.delta,
            gsw=gsw,
            nsw=gsw - revenue,
            revenue=revenue,
            truncation_bound=chain.truncation_bound(params.delta),
        )
    return report.normalize() if normalize else report


def improvement_percentages(nsii: WelfareReport, bhw: WelfareReport) -> dict[str, float]:
    """Gross and net welfare improvement and coordinator profit, in percent of the BHW welfare."""
    if nsii.normalized != bhw.normalized:
        raise ConfigurationError("cannot compare a normalized report with an unnormalized one")
    base = bhw.gsw
    return {
        "gross_impr_pct": 100.0 * (nsii.gsw - base) / base,
        "net_impr_pct": 100.0 * (nsii.nsw - base) / base,
        "profit_pct": 100.0 * nsii.revenue / base,
    }


def sweep(
    grid: Iterable[float], delta: float, normalize: bool = False, truncation: int = DEFAULT_TRUNCATION
) -> list[tuple[float, WelfareReport, WelfareReport]]:
    """Exact ``(p, bhw, nsii)`` reports for every crossover probability in ``grid``."""
    rows = []
    for p in grid:
        params = ModelParams(p=p, delta=delta)
        rows.append(
            (
                p,
                welfare_report(params, Mechanism.BHW, normalize=normalize, truncation=truncation),
                welfare_report(params, Mechanism.NSII, normalize=normalize, truncation=truncation),
            )
        )
    logger.info(f"Analytic sweep finished over {len(rows)} grid points")
    return rows
