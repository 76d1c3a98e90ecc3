from collections.abc import Mapping

import numpy as np
from scipy.special import expit, logsumexp

# Masses are rounded to this many decimals before hashing a belief.
KEY_DECIMALS = 12


def sign(x: int) -> int:
    """Return the sign of a nonzero integer as +1 or -1."""
    return 1 if x > 0 else -1


def summary_posterior(log_ratio: float, n: int, w: int) -> float:
    """Posterior of state ``w`` given summary ``n``, with ``log_ratio = log(pbar / p)``."""
    return float(expit(w * n * log_ratio))


def log_weighted_posterior(log_ratio: float, mass: Mapping[int, float], w: int) -> float:
    """
    Compute ``log sum_n mass(n) q(w|n)`` without leaving log space.

    Args:
    ----
        log_ratio: ``log(pbar / p)``
        mass: Sparse distribution over summaries
        w: The state of interest, +1 or -1

    Returns:
    -------
        The log of the public posterior of ``w`` (``-inf`` if it is zero)

    """
    support = np.fromiter(mass.keys(), dtype=float, count=len(mass))
    weights = np.fromiter(mass.values(), dtype=float, count=len(mass))
    log_q = -np.logaddexp(0.0, -w * support * log_ratio)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return float(logsumexp(log_w + log_q))


def canonical_key(mass: Mapping[int, float], decimals: int = KEY_DECIMALS) -> tuple[tuple[int, float], ...]:
    """Sorted, rounded representation of a sparse distribution suitable for hashing."""
    return tuple((n, round(mass[n], decimals)) for n in sorted(mass))


def prune_and_normalize(mass: Mapping[int, float], threshold: float) -> dict[int, float]:
    """Drop entries at or below ``threshold`` (relative to the total) and renormalize."""
    total = sum(mass.values())
    kept = {n: v / total for n, v in mass.items() if v / total > threshold}
    kept_total = sum(kept.values())
    return {n: v / kept_total for n, v in sorted(kept.items())}
