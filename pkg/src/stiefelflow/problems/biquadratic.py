"""Biquadratic optimization over two unit spheres.

b(x, y) = sum_{ijkl} b_ijkl x_i y_j x_k y_l with the symmetry
b_ijkl = b_kjil = b_ilkj imposed exactly by orbit averaging.
"""

from dataclasses import dataclass

import numpy as np

from ..rng import RngStream
from .base import Problem


@dataclass
class BiquadTensor:
    n: int
    coefficients: np.ndarray  # shape (n, n, n, n)

    def __post_init__(self):
        self.coefficients = np.ascontiguousarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape != (self.n,) * 4:
            raise ValueError("coefficient tensor must be n^4")


def _symmetrize(B: np.ndarray) -> np.ndarray:
    """Average over the orbit {(i,j,k,l), (k,j,i,l), (i,l,k,j), (k,l,i,j)}.

    The two inner sums pair each entry with its double-swap image, so the
    required symmetries hold bit-exactly (float addition is commutative).
    """
    return 0.25 * (
        (B + B.transpose(2, 3, 0, 1))
        + (B.transpose(2, 1, 0, 3) + B.transpose(0, 3, 2, 1))
    )


def biquad_make(n: int, case: str, eta: float = 0.5, rng: RngStream = None) -> BiquadTensor:
    """Draw coefficients per the benchmark rule, then symmetrize exactly.

    Case "I": b_ijkl = (-1)^(i+j+k+l) |c| with Gaussian c (1-based parity).
    Case "II": b_ijkl = |c1| 1_{c2 > eta} with Gaussian c1, uniform c2.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    gen = rng.generator() if hasattr(rng, "generator") else (rng or np.random.default_rng())
    case = str(case).upper()
    if case == "I":
        mags = np.abs(gen.standard_normal((n,) * 4))
        idx = np.arange(1, n + 1)
        parity = idx[:, None, None, None] + idx[None, :, None, None] \
            + idx[None, None, :, None] + idx[None, None, None, :]
        B = np.where(parity % 2 == 0, mags, -mags)
    elif case == "II":
        if not 0.0 < eta < 1.0:
            raise ValueError("case II needs eta in (0, 1)")
        c1 = np.abs(gen.standard_normal((n,) * 4))
        c2 = gen.uniform(size=(n,) * 4)
        B = c1 * (c2 > eta)
    else:
        raise ValueError(f"unknown case {case!r}; expected 'I' or 'II'")
    return BiquadTensor(n, _symmetrize(B))


def biquad_problem(B: BiquadTensor) -> Problem:
    """Two-block ((n,1), (n,1)) problem; the gradient formulas rely on the
    imposed symmetry."""
    T = B.coefficients
    n = B.n

    def value(blocks):
        x = blocks[0].ravel()
        y = blocks[1].ravel()
        return float(np.einsum("ijkl,i,j,k,l->", T, x, y, x, y, optimize=True))

    def gradient(blocks):
        x = blocks[0].ravel()
        y = blocks[1].ravel()
        gx = 2.0 * np.einsum("ijkl,j,k,l->i", T, y, x, y, optimize=True)
        gy = 2.0 * np.einsum("ijkl,i,k,l->j", T, x, x, y, optimize=True)
        return [gx.reshape(n, 1), gy.reshape(n, 1)]

    return Problem(
        name=f"biquad(n={n})",
        block_dims=[(n, 1), (n, 1)],
        value=value,
        euclidean_gradient=gradient,
    )
