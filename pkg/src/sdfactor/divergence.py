"""Kullback-Leibler and Jensen-Shannon divergences between binned spectra.

Empty bins are filled with a small ``epsilon`` and the occupied bins are
scaled by ``alpha = 1 - (#empty) * epsilon`` so the total mass stays one.
Natural logarithms throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .spectra import SpectralDensity

__all__ = [
    "DEFAULT_REGULARIZATION",
    "GridMismatchError",
    "RegularizedDensity",
    "js",
    "js_masses",
    "kl",
    "regularize",
    "regularize_masses",
]

DEFAULT_REGULARIZATION = 1e-8
_MAX_FILL = 0.01


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RegularizedDensity:
    masses: NDArray[np.float64]
    epsilon_used: float
    alpha: float
    bin_edges: NDArray[np.float64] | None = None


def regularize_masses(masses: ArrayLike, epsilon: float = DEFAULT_REGULARIZATION) -> NDArray[np.float64]:
    """Regularize each row of ``masses`` (last axis is the bin axis)."""
    p = np.asarray(masses, dtype=np.float64)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    zeros = p <= 0
    n_zero = zeros.sum(axis=-1, keepdims=True)
    if np.any(n_zero == p.shape[-1]):
        raise ValueError("cannot regularize a density with no mass")
    if np.any(n_zero * epsilon >= _MAX_FILL):
        raise ValueError(f"epsilon={epsilon} too large for {int(n_zero.max())} empty bins")
    alpha = 1.0 - n_zero * epsilon
    return np.where(zeros, epsilon, alpha * p)


def regularize(density: SpectralDensity, epsilon: float = DEFAULT_REGULARIZATION) -> RegularizedDensity:
    masses = regularize_masses(density.masses, epsilon)
    alpha = 1.0 - int((density.masses <= 0).sum()) * epsilon
    return RegularizedDensity(masses, epsilon, alpha, density.bin_edges)


def _check_grids(p: RegularizedDensity | SpectralDensity, q: RegularizedDensity | SpectralDensity) -> None:
    if p.masses.shape != q.masses.shape:
        raise GridMismatchError(f"bin counts differ: {p.masses.size} vs {q.masses.size}")
    if p.bin_edges is not None and q.bin_edges is not None and not np.array_equal(p.bin_edges, q.bin_edges):
        raise GridMismatchError("densities are binned on different grids")


def _kl(p: NDArray[np.float64], q: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.sum(p * np.log(p / q), axis=-1)


def kl(p: RegularizedDensity, q: RegularizedDensity) -> float:
    """``sum p_i log(p_i / q_i)``."""
    _check_grids(p, q)
    return max(float(_kl(p.masses, q.masses)), 0.0)


def js_masses(p: ArrayLike, q: ArrayLike, epsilon: float = DEFAULT_REGULARIZATION) -> NDArray[np.float64]:
    """Jensen-Shannon divergence over the last axis; broadcasts over rows.

    Both inputs are regularized before the mixture is formed.
    """
    pr = regularize_masses(p, epsilon)
    qr = regularize_masses(q, epsilon)
    pr, qr = np.broadcast_arrays(pr, qr)
    mix = 0.5 * (pr + qr)
    # symmetric in p and q by construction: summands are added in a fixed order
    a = _kl(pr, mix)
    b = _kl(qr, mix)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return np.clip(0.5 * lo + 0.5 * hi, 0.0, np.log(2.0))


def js(p: SpectralDensity, q: SpectralDensity, epsilon: float = DEFAULT_REGULARIZATION) -> float:
    _check_grids(p, q)
    return float(js_masses(p.masses, q.masses, epsilon))
