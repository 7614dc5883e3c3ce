"""Synthetic factor panels with auto- and cross-correlated noise.

``X = L F + sqrt(theta) U`` where ``U`` is a unit-variance rescaling of

    e_it = rho e_i,t-1 + v_it + beta * sum_{0 < |h - i| <= J} v_ht

and ``theta = (1/SNR) * p``.  Gaussian draws come from a Philox generator
keyed by the integer seed, in the order: loadings, factors, noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .spectra import ReturnPanel

__all__ = [
    "GroundTruth",
    "SyntheticConfig",
    "ar1_rows",
    "generate",
    "generate_meanfield_pair",
    "generate_spliced",
    "make_rng",
    "table1_config",
]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    t: int
    p_true: int = 4
    inv_snr: float = 0.25
    rho: float = 0.0
    beta: float = 0.0
    j: int = 0
    sigma_weak: float = 1.0
    weak_count: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2 or self.t < 2:
            raise ValueError("need n >= 2 and t >= 2")
        if self.p_true < 0:
            raise ValueError("p_true must be nonnegative")
        if self.inv_snr <= 0:
            raise ValueError("inv_snr must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if not abs(self.beta) <= 1:
            raise ValueError("|beta| must be <= 1")
        if not 0 <= self.j < self.n:
            raise ValueError("need 0 <= j < n")
        if self.sigma_weak <= 0:
            raise ValueError("sigma_weak must be positive")
        if not 0 <= self.weak_count <= self.p_true:
            raise ValueError("weak_count must be between 0 and p_true")

    @property
    def theta(self) -> float:
        """Noise variance; a noise-only panel uses ``p = 1`` in the scale."""
        return self.inv_snr * max(self.p_true, 1)

    @property
    def burn_in(self) -> int:
        return 10 * math.ceil(1.0 / (1.0 - abs(self.rho)))

    def with_seed(self, seed: int) -> "SyntheticConfig":
        return replace(self, seed=seed)


def table1_config(n: int, p_true: int, inv_snr: float, rho: float, beta: float, **kw) -> SyntheticConfig:
    """Square panel (``T = N``) with neighbour range ``J = N // 10``."""
    return SyntheticConfig(n=n, t=n, p_true=p_true, inv_snr=inv_snr, rho=rho, beta=beta, j=n // 10, **kw)


@dataclass(frozen=True)
class GroundTruth:
    p_true: int
    loadings: NDArray[np.float64]
    factors: NDArray[np.float64]
    noise: NDArray[np.float64]
    theta: float
    has_factors: bool = field(default=True)


def _neighbour_sum(v: NDArray[np.float64], j: int) -> NDArray[np.float64]:
    """``sum_{h != i, |h - i| <= j} v_h`` along axis 0, clamped at the ends."""
    n = v.shape[0]
    csum = np.zeros((n + 1,) + v.shape[1:])
    np.cumsum(v, axis=0, out=csum[1:])
    idx = np.arange(n)
    lo = np.maximum(idx - j, 0)
    hi = np.minimum(idx + j, n - 1) + 1
    return csum[hi] - csum[lo] - v


def generate(config: SyntheticConfig) -> tuple[ReturnPanel, GroundTruth]:
    n, t, p = config.n, config.t, config.p_true
    rng = make_rng(config.seed)
    loadings = rng.standard_normal((n, p))
    factors = rng.standard_normal((p, t))
    if config.weak_count:
        factors[: config.weak_count] *= config.sigma_weak

    burn = config.burn_in
    v = rng.standard_normal((n, t + burn))
    shock = v + config.beta * _neighbour_sum(v, config.j) if config.beta and config.j else v
    e = np.empty_like(shock)
    e[:, 0] = shock[:, 0]
    for s in range(1, t + burn):
        e[:, s] = config.rho * e[:, s - 1] + shock[:, s]
    scale = math.sqrt((1.0 - config.rho**2) / (1.0 + 2.0 * config.j * config.beta**2))
    noise = scale * e[:, burn:]

    x = loadings @ factors + math.sqrt(config.theta) * noise
    truth = GroundTruth(p, loadings, factors, noise, config.theta, has_factors=p > 0)
    return ReturnPanel(x), truth


def ar1_rows(rng: np.random.Generator, coefficients: ArrayLike, t: int) -> NDArray[np.float64]:
    """Stationary unit-variance AR(1) rows, one coefficient per row."""
    b = np.asarray(coefficients, dtype=np.float64)
    sd = np.sqrt(1.0 - b * b)
    shocks = rng.standard_normal((b.size, t))
    out = np.empty_like(shocks)
    out[:, 0] = shocks[:, 0]
    for s in range(1, t):
        out[:, s] = b * out[:, s - 1] + sd * shocks[:, s]
    return out


def generate_meanfield_pair(
    n: int,
    t: int,
    b_dist_low: float,
    b_dist_high: float,
    b_bar: float,
    seed: int,
) -> tuple[ReturnPanel, ReturnPanel]:
    """Heterogeneous AR(1) panel ``Y`` and homogeneous panel ``Z``.

    ``Y`` row ``i`` has coefficient ``b_i ~ U[low, high]``; every row of ``Z``
    uses ``b_bar``.  Innovations are scaled so both have unit variance.
    """
    if not (0 <= b_dist_low <= b_dist_high < 1):
        raise ValueError("need 0 <= low <= high < 1")
    if not abs(b_bar) < 1:
        raise ValueError("|b_bar| must be < 1")
    rng = make_rng(seed)
    b_i = rng.uniform(b_dist_low, b_dist_high, size=n) if b_dist_high > b_dist_low else np.full(n, b_dist_low)
    y = ar1_rows(rng, b_i, t)
    z = ar1_rows(rng, np.full(n, b_bar), t)
    return ReturnPanel(y), ReturnPanel(z)


def generate_spliced(configs: Sequence[SyntheticConfig]) -> tuple[ReturnPanel, tuple[int, ...]]:
    """Concatenate panels drawn from ``configs`` along time.

    All configs must share ``n``.  Returns the panel and the start index of
    every regime after the first.
    """
    if not configs:
        raise ValueError("need at least one regime")
    if len({c.n for c in configs}) != 1:
        raise ValueError("all regimes must have the same n")
    parts = [generate(c)[0].values for c in configs]
    starts = tuple(int(s) for s in np.cumsum([p.shape[1] for p in parts])[:-1])
    return ReturnPanel(np.concatenate(parts, axis=1)), starts
