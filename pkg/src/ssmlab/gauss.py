"""Small Gaussian utilities shared by the samplers."""
from __future__ import annotations

import math
from typing import Sequence, Tuple

_LOG_2PI = math.log(2.0 * math.pi)


def gaussian_product(components: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Mean and variance of a (renormalized) product of Gaussian densities.

    Each component is a (mean, variance) pair. A zero-variance component acts
    as a hard constraint: the product collapses to a point mass at its mean.
    """
    if not components:
        raise ValueError("need at least one Gaussian component")
    for mean, var in components:
        if var == 0.0:
            return mean, 0.0
    precision = sum(1.0 / var for _, var in components)
    mean = sum(m / var for m, var in components) / precision
    return mean, 1.0 / precision


def normal_logpdf(x, mean, var):
    """Log density of N(mean, var); requires var > 0. Vectorizes over x and mean."""
    return -0.5 * (_LOG_2PI + math.log(var)) - 0.5 * (x - mean) ** 2 / var
