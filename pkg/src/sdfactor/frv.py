"""Limiting eigenvalue density of AR(1) residual covariances.

For residuals ``U_it = b U_i,t-1 + xi_it`` with ``var(xi) = 1 - b^2`` and no
cross-sectional correlation, the moment generating function
``M(z) = z G(z) - 1`` of ``C = U U^T / T`` solves a quartic in ``M`` whose
coefficients depend on ``b^2``, ``c = N / T`` and ``z``.  The density is
``-Im G(lambda + i eps) / pi`` for a small ``eps > 0``.

Only one of the four roots is the Stieltjes branch.  It is identified at
``z = lambda_0 + iY`` with ``Y`` large, where ``M ~ 1/z``, followed down to
``lambda_0 + i eps`` and then along the real grid.  Every step uses a tangent
predictor from implicit differentiation of the quartic and a few Newton
iterations, accepted only when the move is small against a lower bound on the
distance to the other roots.  Steps that fail detour through the upper
half-plane, away from the branch points on the real axis, and are bisected
there if needed.  The Stieltjes branch is analytic off the real axis, so the
detour lands on the same root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .spectra import SpectralDensity

__all__ = [
    "BranchSelectionError",
    "DEFAULT_EPSILON",
    "GreenEvaluation",
    "ModelParams",
    "model_densities",
    "model_density",
    "mp_density",
    "mp_edges",
    "mp_pdf",
    "quartic_coefficients",
    "quartic_residual",
    "solve_moment_equation",
]

DEFAULT_EPSILON = 1e-4
DENSITY_TOLERANCE = 1e-9
_SEED_HEIGHT = 1e4
_SEED_STEPS = 60
_AMBIGUITY_RATIO = 0.25
_MAX_BISECTIONS = 24
_NEWTON_ITERATIONS = 4
_DETOUR_LEGS = 5
GAUSS_NODES = 4
BINNING_RULES = ("gauss", "midpoint")


class BranchSelectionError(RuntimeError):
    """No quartic root yields a nonnegative density at ``z``."""

    def __init__(self, z: complex, roots: ArrayLike, b: float, c: float) -> None:
        self.z = complex(z)
        self.roots = np.asarray(roots, dtype=np.complex128)
        self.b = float(b)
        self.c = float(c)
        super().__init__(
            f"no physical root at lambda={self.z.real:.6g} (b={self.b}, c={self.c}); "
            f"roots={np.array2string(self.roots, precision=4)}"
        )


@dataclass(frozen=True)
class ModelParams:
    """AR(1) coefficient ``b`` and aspect ratio ``c = N / T``."""

    b: float
    c: float

    def __post_init__(self) -> None:
        if not abs(self.b) < 1:
            raise ValueError(f"|b| must be < 1, got {self.b}")
        if not 0 < self.c <= 1:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")

    @property
    def a_sq(self) -> float:
        return 1.0 - self.b * self.b


@dataclass(frozen=True)
class GreenEvaluation:
    z: complex
    roots: NDArray[np.complex128]
    selected: complex
    green: complex
    density: float


def _coefficients(b: ArrayLike, c: float, z: ArrayLike) -> NDArray[np.complex128]:
    b2 = np.asarray(b, dtype=np.float64) ** 2
    z = np.asarray(z, dtype=np.complex128)
    a2 = 1.0 - b2
    a4 = a2 * a2
    k = 2.0 * a2 * c * (1.0 + b2)
    shape = np.broadcast_shapes(b2.shape, z.shape)
    out = np.empty(shape + (5,), dtype=np.complex128)
    out[..., 0] = a4 * c * c
    out[..., 1] = 2.0 * a4 * c * c - k * z
    out[..., 2] = (a4 * z - k) * z + (c * c - 1.0) * a4
    out[..., 3] = -2.0 * a4
    out[..., 4] = -a4
    return out


def quartic_coefficients(params: ModelParams, z: complex) -> NDArray[np.complex128]:
    """Coefficients of the moment-generating quartic, highest degree first."""
    return _coefficients(params.b, params.c, z)


def _horner(coeffs: NDArray[np.complex128], m: NDArray[np.complex128]) -> NDArray[np.complex128]:
    acc = coeffs[..., 0] * m + coeffs[..., 1]
    for k in range(2, 5):
        acc = acc * m + coeffs[..., k]
    return acc


def _derivative(coeffs: NDArray[np.complex128], m: NDArray[np.complex128]) -> NDArray[np.complex128]:
    return ((4.0 * coeffs[..., 0] * m + 3.0 * coeffs[..., 1]) * m + 2.0 * coeffs[..., 2]) * m + coeffs[..., 3]


def quartic_residual(params: ModelParams, z: complex, m: complex) -> float:
    """``|P(m)|`` scaled by the leading coefficient."""
    co = quartic_coefficients(params, z)
    return float(abs(_horner(co, np.asarray(m, dtype=np.complex128))) / abs(co[0]))


def _roots(coeffs: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Companion-matrix roots, polished with one Newton step."""
    monic = coeffs[..., 1:] / coeffs[..., :1]
    companion = np.zeros(coeffs.shape[:-1] + (4, 4), dtype=np.complex128)
    companion[..., 0, :] = -monic
    companion[..., 1, 0] = companion[..., 2, 1] = companion[..., 3, 2] = 1.0
    r = np.linalg.eigvals(companion)
    co = coeffs[..., None, :]
    f = _horner(co, r)
    df = _derivative(co, r)
    safe = np.abs(df) > 1e-300
    step = np.where(safe, f / np.where(safe, df, 1.0), 0.0)
    polished = r - step
    better = np.abs(_horner(co, polished)) <= np.abs(f)
    return np.where(better, polished, r)


def _slope(b: ArrayLike, c: float, z: ArrayLike, m: ArrayLike) -> NDArray[np.complex128]:
    """dM/dz along the root ``m`` from implicit differentiation."""
    b2 = np.asarray(b, dtype=np.float64) ** 2
    a2 = 1.0 - b2
    z = np.asarray(z, dtype=np.complex128)
    m = np.asarray(m, dtype=np.complex128)
    co = _coefficients(np.sqrt(b2), c, z)
    dz3 = -2.0 * a2 * c * (1.0 + b2)
    dz2 = 2.0 * (1.0 - b2) ** 2 * z - 2.0 * a2 * c * (1.0 + b2)
    p_z = (dz3 * m + dz2) * m * m
    p_m = _derivative(co, m)
    return -p_z / p_m


def _density_of(m: ArrayLike, z: ArrayLike) -> NDArray[np.float64]:
    return -np.imag((np.asarray(m) + 1.0) / np.asarray(z)) / np.pi


def _pick(roots: NDArray[np.complex128], target: NDArray[np.complex128], z: ArrayLike):
    """Nearest admissible root to ``target`` plus an ambiguity flag, row-wise."""
    valid = _density_of(roots, np.asarray(z)[..., None]) >= -DENSITY_TOLERANCE
    dist = np.where(valid, np.abs(roots - target[..., None]), np.inf)
    order = np.argsort(dist, axis=-1)
    d1 = np.take_along_axis(dist, order[..., :1], axis=-1)[..., 0]
    d2 = np.take_along_axis(dist, order[..., 1:2], axis=-1)[..., 0]
    chosen = np.take_along_axis(roots, order[..., :1], axis=-1)[..., 0]
    ambiguous = ~np.isfinite(d1) | (d1 > _AMBIGUITY_RATIO * d2)
    return chosen, ambiguous, np.isfinite(d1)


def _separation(coeffs: NDArray[np.complex128], m: NDArray[np.complex128]) -> NDArray[np.float64]:
    """Lower bound on the distance from root ``m`` to every other root.

    Fujiwara's bound applied to ``P(m + w) / w``, whose Taylor coefficients
    are ``P^(k+1)(m) / (k+1)!``.
    """
    p0, p1, p2 = coeffs[..., 0], coeffs[..., 1], coeffs[..., 2]
    d1 = np.abs(_derivative(coeffs, m))
    t1 = np.abs((6.0 * p0 * m + 3.0 * p1) * m + p2)
    t2 = np.abs(4.0 * p0 * m + p1)
    t3 = np.abs(p0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.maximum.reduce([t1 / d1, np.sqrt(t2 / d1), np.cbrt(t3 / d1)])
        return np.where(d1 > 0, 0.5 / gamma, 0.0)


def _correct(b: NDArray[np.float64], c: float, pred: NDArray[np.complex128], z: complex):
    """Newton from ``pred``; flags steps not certified to stay on one branch."""
    co = _coefficients(b, c, z)
    m = pred.copy()
    for _ in range(_NEWTON_ITERATIONS):
        step = _horner(co, m) / _derivative(co, m)
        m = m - step
    converged = np.abs(step) <= 1e-12 * (1.0 + np.abs(m))
    certified = converged & (np.abs(m - pred) <= _AMBIGUITY_RATIO * _separation(co, m))
    admissible = _density_of(m, z) >= -DENSITY_TOLERANCE
    return m, certified & admissible


def _advance(
    b: NDArray[np.float64],
    c: float,
    m: NDArray[np.complex128],
    z0: complex,
    z1: complex,
    depth: int = 0,
    detour: bool = True,
) -> NDArray[np.complex128]:
    """Continue the branch ``m`` from ``z0`` to ``z1`` for every ``b``."""
    pred = m + _slope(b, c, z0, m) * (z1 - z0)
    out, ok = _correct(b, c, pred, z1)
    bad = np.flatnonzero(~(ok & np.isfinite(out)))
    if not bad.size:
        return out
    if depth >= _MAX_BISECTIONS:
        return _fallback(b, c, m, z1, out, bad)
    if detour and z0.real != z1.real:
        # up, across and back down, clear of the real-axis branch points
        h = abs(z1 - z0)
        up = z0.real + 1j * np.geomspace(z0.imag, z0.imag + h, _DETOUR_LEGS + 1)
        down = z1.real + 1j * np.geomspace(z1.imag + h, z1.imag, _DETOUR_LEGS + 1)
        path = np.concatenate([up, down])
        mb = m[bad]
        for za, zb in zip(path[:-1], path[1:]):
            mb = _advance(b[bad], c, mb, complex(za), complex(zb), depth + 1, False)
        out[bad] = mb
        return out
    zm = 0.5 * (z0 + z1)
    mid = _advance(b[bad], c, m[bad], z0, zm, depth + 1, detour)
    out[bad] = _advance(b[bad], c, mid, zm, z1, depth + 1, detour)
    return out


def _fallback(b, c, m, z1, out, bad):
    """Companion-matrix selection for steps that could not be certified."""
    roots = _roots(_coefficients(b[bad], c, z1))
    chosen, _, found = _pick(roots, m[bad], z1)
    if not np.all(found):
        i = int(np.flatnonzero(~found)[0])
        raise BranchSelectionError(z1, roots[i], b[bad][i], c)
    out[bad] = chosen
    return out


def _seed(b: NDArray[np.float64], c: float, z: complex) -> NDArray[np.complex128]:
    """Physical root at ``z`` reached from ``Re z + iY`` where ``M ~ 1/z``."""
    heights = np.geomspace(max(_SEED_HEIGHT, 100.0 * abs(z)), z.imag, _SEED_STEPS)
    path = z.real + 1j * heights
    m, _ = _correct(b, c, np.full(b.shape, 1.0 / path[0]), complex(path[0]))
    for z0, z1 in zip(path[:-1], path[1:]):
        m = _advance(b, c, m, complex(z0), complex(z1))
    return m


def _track(b_values: ArrayLike, c: float, lam: NDArray[np.float64], epsilon: float) -> NDArray[np.complex128]:
    """Physical ``M(lam + i eps)`` for every ``b``; shape ``(len(b), len(lam))``."""
    b = np.atleast_1d(np.asarray(b_values, dtype=np.float64))
    z = lam + 1j * epsilon
    out = np.empty((b.size, lam.size), dtype=np.complex128)
    out[:, 0] = _seed(b, c, complex(z[0]))
    for k in range(1, lam.size):
        out[:, k] = _advance(b, c, out[:, k - 1], complex(z[k - 1]), complex(z[k]))
    return out


def solve_moment_equation(params: ModelParams, z: complex, previous: complex | None = None) -> GreenEvaluation:
    """Physical root of the quartic at ``z`` and the resulting density.

    With ``previous`` the admissible root nearest to it is returned (for
    continuation along a grid); without it the branch is found by
    continuation from large imaginary ``z``.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("z must lie in the upper half-plane")
    roots = _roots(quartic_coefficients(params, z))
    if previous is None:
        seeded = complex(_seed(np.array([params.b]), params.c, z)[0])
        selected = complex(roots[np.argmin(np.abs(roots - seeded))])
    else:
        chosen, _, found = _pick(roots, np.asarray(complex(previous)), z)
        if not found:
            raise BranchSelectionError(z, roots, params.b, params.c)
        selected = complex(chosen)
    green = (selected + 1.0) / z
    return GreenEvaluation(z, roots, selected, green, float(-green.imag / np.pi))


def _bin_nodes(edges: NDArray[np.float64], rule: str) -> tuple[NDArray[np.float64], NDArray[np.float64], int]:
    """Quadrature nodes and weights for every bin, ``nodes_per_bin`` per bin in order.

    ``gauss`` uses Gauss-Legendre nodes; in the first bin the substitution
    ``lam = lo + h u^2`` absorbs an inverse square-root singularity at the
    left edge (the hard edge at zero when ``c = 1``).  ``midpoint`` is the
    one-node rule.
    """
    widths = np.diff(edges)
    if rule == "midpoint":
        return 0.5 * (edges[1:] + edges[:-1]), widths, 1
    if rule != "gauss":
        raise ValueError(f"binning must be one of {BINNING_RULES}")
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    u, w = 0.5 * (x + 1.0), 0.5 * w
    nodes = edges[:-1, None] + widths[:, None] * u
    weights = widths[:, None] * w * np.ones_like(u)
    nodes[0] = edges[0] + widths[0] * u * u
    weights[0] = widths[0] * 2.0 * u * w
    return nodes.ravel(), weights.ravel(), GAUSS_NODES


def _to_masses(density: NDArray[np.float64], weights: NDArray[np.float64], per_bin: int) -> NDArray[np.float64]:
    parts = density * weights
    masses = parts.reshape(parts.shape[:-1] + (-1, per_bin)).sum(axis=-1)
    widths = weights.reshape(-1, per_bin).sum(axis=-1)
    masses = np.where((masses < 0) & (masses >= -DENSITY_TOLERANCE * widths), 0.0, masses)
    return masses / masses.sum(axis=-1, keepdims=True)


def _check_edges(bin_edges: ArrayLike) -> NDArray[np.float64]:
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be strictly increasing with at least two entries")
    return edges


def model_densities(
    b_values: ArrayLike,
    c: float,
    bin_edges: ArrayLike,
    epsilon: float = DEFAULT_EPSILON,
    binning: str = "gauss",
) -> NDArray[np.float64]:
    """Binned model masses for several ``b`` on one grid, shape ``(len(b), K)``.

    Each bin's mass is a quadrature of the density over the bin (see
    ``binning``), and each row is renormalized to one.  Rows depend only on
    ``b^2`` and each row is computed independently of the others.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    b = np.abs(np.atleast_1d(np.asarray(b_values, dtype=np.float64)))
    ModelParams(float(b.max()), c)
    edges = _check_edges(bin_edges)
    nodes, weights, per_bin = _bin_nodes(edges, binning)
    m = _track(b, c, nodes, epsilon)
    return _to_masses(_density_of(m, nodes + 1j * epsilon), weights, per_bin)


def model_density(
    params: ModelParams,
    bin_edges: ArrayLike,
    epsilon: float = DEFAULT_EPSILON,
    binning: str = "gauss",
) -> SpectralDensity:
    masses = model_densities([params.b], params.c, bin_edges, epsilon, binning)[0]
    return SpectralDensity(np.asarray(bin_edges, dtype=np.float64), masses)


def mp_edges(c: float) -> tuple[float, float]:
    """Support ``[(1 - sqrt c)^2, (1 + sqrt c)^2]`` of the unit-variance MP law."""
    s = np.sqrt(c)
    return float((1.0 - s) ** 2), float((1.0 + s) ** 2)


def mp_pdf(lam: ArrayLike, c: float) -> NDArray[np.float64]:
    """Marchenko-Pastur density for variance 1 and ratio ``0 < c <= 1``."""
    lam = np.asarray(lam, dtype=np.float64)
    lo, hi = mp_edges(c)
    inside = (lam > lo) & (lam < hi)
    safe = np.where(inside, lam, 1.0)
    val = np.sqrt(np.clip((hi - safe) * (safe - lo), 0.0, None)) / (2.0 * np.pi * c * safe)
    return np.where(inside, val, 0.0)


def mp_density(c: float, bin_edges: ArrayLike, binning: str = "gauss") -> SpectralDensity:
    """MP law binned with the same quadrature as :func:`model_density`."""
    if not 0 < c <= 1:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    edges = _check_edges(bin_edges)
    nodes, weights, per_bin = _bin_nodes(edges, binning)
    return SpectralDensity(edges, _to_masses(mp_pdf(nodes, c), weights, per_bin))
