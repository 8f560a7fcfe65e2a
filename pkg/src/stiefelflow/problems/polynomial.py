"""Spherically constrained homogeneous sextic with chained cross terms.

F(x) = sum_i x_i^6 + sum_{i<n} x_i^3 x_{i+1}^3 on the unit sphere; a
standard many-local-minima benchmark that plain local solvers rarely
minimize globally.
"""

import numpy as np

from .base import Problem


def hp1_problem(n: int) -> Problem:
    """Single-block (n, 1) problem with analytic gradient."""
    if n < 2:
        raise ValueError("need n >= 2")

    def value(blocks):
        x = blocks[0].ravel()
        x3 = x * x * x
        return float(np.sum(x3 * x3) + np.sum(x3[:-1] * x3[1:]))

    def gradient(blocks):
        x = blocks[0].ravel()
        x2 = x * x
        x3 = x2 * x
        g = 6.0 * x3 * x2
        g[:-1] += 3.0 * x2[:-1] * x3[1:]
        g[1:] += 3.0 * x3[:-1] * x2[1:]
        return [g.reshape(n, 1)]

    return Problem(
        name=f"hp1(n={n})",
        block_dims=[(n, 1)],
        value=value,
        euclidean_gradient=gradient,
    )
