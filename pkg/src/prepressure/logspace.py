"""Fixed-order log-space reductions used by the pressure and measure code."""

import math

import numpy as np


def logsumexp(values) -> float:
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        return -math.inf
    top = a.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + math.log(np.exp(a - top).sum()))


def xlogx_entropy(p) -> float:
    """Shannon entropy in nats with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
