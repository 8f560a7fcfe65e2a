"""Objective interface over a product of Stiefel blocks."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import DimensionError
from ..manifold import ProductPoint, StiefelPoint


def blocks_of(point) -> list:
    """Normalize a point (ProductPoint / StiefelPoint / array / list) to a
    list of raw float64 block arrays."""
    if isinstance(point, ProductPoint):
        return point.arrays()
    if isinstance(point, StiefelPoint):
        return [point.value]
    if isinstance(point, np.ndarray):
        return [point]
    return [b.value if isinstance(b, StiefelPoint) else np.asarray(b) for b in point]


@dataclass
class Problem:
    """Smooth objective with analytic Euclidean gradient.

    ``value`` and ``euclidean_gradient`` act on lists of raw block arrays
    (one array per orthogonality constraint); ``value_at``/``gradient_at``
    accept any point-like argument.  ``const_euclidean_gradient`` is set
    when the gradient does not depend on the point (zero and linear
    objectives), which lets integrators use the fused chain kernels.
    """

    name: str
    block_dims: list
    value: Callable
    euclidean_gradient: Callable
    const_euclidean_gradient: Optional[list] = None

    def check_dims(self, blocks) -> None:
        dims = [tuple(b.shape) for b in blocks]
        if dims != [tuple(d) for d in self.block_dims]:
            raise DimensionError(
                f"problem '{self.name}' expects blocks {self.block_dims}, got {dims}"
            )

    def value_at(self, point) -> float:
        return float(self.value(blocks_of(point)))

    def gradient_at(self, point) -> list:
        return self.euclidean_gradient(blocks_of(point))


def zero_problem(n: int, p: int) -> Problem:
    """Objective identically 0 (pure diffusion)."""
    Gz = [np.zeros((n, p))]
    return Problem(
        name="zero",
        block_dims=[(n, p)],
        value=lambda blocks: 0.0,
        euclidean_gradient=lambda blocks: [np.zeros((n, p))],
        const_euclidean_gradient=Gz,
    )


def linear_trace_problem(C: np.ndarray, name: str = "linear-trace") -> Problem:
    """F(X) = tr(C^T X); the Euclidean gradient is the constant C."""
    C = np.ascontiguousarray(C, dtype=np.float64)
    return Problem(
        name=name,
        block_dims=[C.shape],
        value=lambda blocks: float(np.sum(C * blocks[0])),
        euclidean_gradient=lambda blocks: [C.copy()],
        const_euclidean_gradient=[C],
    )
