"""Dimension bounds ``N`` and ``N'``: finite reals >= 1 or ``math.inf``.

Plain floats are used throughout; ``inf`` compares above every finite
value, and ``1/inf == 0`` gives the limit semantics the formulas need.
"""

from __future__ import annotations

import math

INF = math.inf


def check_dimension(N: float, name: str = "N", minimum: float = 1.0) -> float:
    N = float(N)
    if math.isnan(N) or N < minimum:
        raise ValueError(f"{name} must be >= {minimum} or inf, got {N}")
    return N


def reciprocal(N: float) -> float:
    """``1/N`` with ``1/inf = 0``."""
    return 0.0 if math.isinf(N) else 1.0 / N


def excess_reciprocal(N: float, n: int) -> float:
    """``1/(N - n)``; zero for ``N = inf`` and, by convention, for ``N = n``."""
    if math.isinf(N) or N == n:
        return 0.0
    if N < n:
        raise ValueError(f"dimension bound {N} is below the space dimension {n}")
    return 1.0 / (N - n)


def format_dimension(N: float) -> str:
    return "inf" if math.isinf(N) else f"{N:g}"


def parse_dimension(text: str) -> float:
    text = str(text).strip().lower()
    if text in ("inf", "infinity", "oo"):
        return INF
    return float(text)
