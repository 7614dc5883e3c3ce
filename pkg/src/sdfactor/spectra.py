"""Covariance spectra of data panels and of their PCA residuals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "ConstantSeriesError",
    "ReturnPanel",
    "ResidualSet",
    "SpectralDensity",
    "normalize_panel",
    "covariance",
    "principal_components",
    "pca_residuals",
    "standardize_rows",
    "residual_eigenvalues",
    "uniform_grid",
    "empirical_density",
    "ZERO_EIGENVALUE_CUTOFF",
]

ZERO_EIGENVALUE_CUTOFF = 1e-8
DEFAULT_BINS = 100
GRID_HEADROOM = 1.1


class ConstantSeriesError(ValueError):
    """A series has zero sample variance and cannot be standardized."""

    def __init__(self, series_id: str) -> None:
        super().__init__(f"series {series_id!r} has zero variance")
        self.series_id = series_id


@dataclass(frozen=True)
class ReturnPanel:
    """N x T panel of observations, one row per series."""

    values: NDArray[np.float64]
    series_ids: tuple[str, ...] = ()
    normalized: bool = False

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("panel values must be a 2-D array")
        n, t = values.shape
        if n < 2 or t < 2:
            raise ValueError(f"panel must be at least 2 x 2, got {n} x {t}")
        if not np.all(np.isfinite(values)):
            raise ValueError("panel contains non-finite values")
        ids = tuple(str(s) for s in self.series_ids) or tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise ValueError(f"expected {n} series ids, got {len(ids)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "series_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> int:
        return self.values.shape[1]

    @property
    def aspect_ratio(self) -> float:
        return self.n / self.t


@dataclass(frozen=True)
class ResidualSet:
    """Panel with its top-``p`` principal components removed.

    ``explained_variance`` holds the removed eigenvalues of the data
    covariance in descending order; ``loadings @ factors`` is the removed
    common component.
    """

    residuals: NDArray[np.float64]
    p: int
    loadings: NDArray[np.float64]
    factors: NDArray[np.float64]
    explained_variance: NDArray[np.float64]
    total_variance: float = field(default=float("nan"))


@dataclass(frozen=True)
class SpectralDensity:
    """Probability masses on a binned eigenvalue axis."""

    bin_edges: NDArray[np.float64]
    masses: NDArray[np.float64]

    def __post_init__(self) -> None:
        edges = np.array(self.bin_edges, dtype=np.float64)
        masses = np.array(self.masses, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("bin_edges needs at least two entries")
        if masses.shape != (edges.size - 1,):
            raise ValueError("masses must have one entry per bin")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        if abs(masses.sum() - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {masses.sum()!r}, expected 1")
        edges.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "masses", masses)

    @property
    def midpoints(self) -> NDArray[np.float64]:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> NDArray[np.float64]:
        return np.diff(self.bin_edges)

    def mean(self) -> float:
        return float(self.masses @ self.midpoints)


def _row_standardize(values: NDArray[np.float64], ids: Sequence[str]) -> NDArray[np.float64]:
    centered = values - values.mean(axis=1, keepdims=True)
    std = centered.std(axis=1)
    bad = np.flatnonzero(std <= 1e-12 * (1.0 + np.abs(values).max(axis=1)))
    if bad.size:
        raise ConstantSeriesError(ids[bad[0]])
    return centered / std[:, None]


def normalize_panel(panel: ReturnPanel) -> ReturnPanel:
    """Demean each series and scale it to unit (population) variance."""
    values = _row_standardize(panel.values, panel.series_ids)
    return ReturnPanel(values, panel.series_ids, normalized=True)


def standardize_rows(values: ArrayLike) -> NDArray[np.float64]:
    """Rescale rows to unit variance; rows with no variance are left at zero."""
    values = np.asarray(values, dtype=np.float64)
    centered = values - values.mean(axis=1, keepdims=True)
    std = centered.std(axis=1)
    scale = np.where(std > 1e-12, std, 1.0)
    return centered / scale[:, None]


def covariance(panel: ReturnPanel | NDArray[np.float64]) -> NDArray[np.float64]:
    """Sample covariance ``U U^T / T`` (no demeaning)."""
    u = panel.values if isinstance(panel, ReturnPanel) else np.asarray(panel, dtype=np.float64)
    cov = u @ u.T / u.shape[1]
    return 0.5 * (cov + cov.T)


def principal_components(panel: ReturnPanel) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigenvalues (descending) and eigenvectors of the N x N covariance."""
    evals, evecs = np.linalg.eigh(covariance(panel))
    return evals[::-1].copy(), evecs[:, ::-1].copy()


def pca_residuals(
    panel: ReturnPanel,
    p: int,
    components: tuple[NDArray[np.float64], NDArray[np.float64]] | None = None,
) -> ResidualSet:
    """Remove the ``p`` leading principal components from ``panel``.

    Loadings are ``sqrt(N)`` times the leading eigenvectors of the N x N
    covariance and factors are ``loadings^T R / N``, so the removed part is
    the projection of the panel on the top-``p`` eigenspace.

    Parameters
    ----------
    panel : ReturnPanel
    p : int
        Number of components, ``0 <= p < min(N, T)``.
    components : tuple, optional
        Output of :func:`principal_components` for ``panel``, to avoid
        recomputing the eigendecomposition when sweeping ``p``.
    """
    n, t = panel.values.shape
    if not 0 <= p < min(n, t):
        raise ValueError(f"p={p} outside [0, {min(n, t)})")
    evals, evecs = components if components is not None else principal_components(panel)
    r = panel.values
    total = float(np.trace(covariance(panel)))
    if p == 0:
        return ResidualSet(
            residuals=r.copy(),
            p=0,
            loadings=np.zeros((n, 0)),
            factors=np.zeros((0, t)),
            explained_variance=np.zeros(0),
            total_variance=total,
        )
    loadings = np.sqrt(n) * evecs[:, :p]
    factors = loadings.T @ r / n
    residuals = r - loadings @ factors
    return ResidualSet(
        residuals=residuals,
        p=p,
        loadings=loadings,
        factors=factors,
        explained_variance=np.clip(evals[:p], 0.0, None),
        total_variance=total,
    )


def residual_eigenvalues(residuals: ResidualSet, restandardize: bool = True) -> NDArray[np.float64]:
    """Ascending eigenvalues of the residual covariance, zero modes included."""
    u = standardize_rows(residuals.residuals) if restandardize else residuals.residuals
    return np.linalg.eigvalsh(covariance(u))


def uniform_grid(eigenvalues: ArrayLike, bins: int = DEFAULT_BINS, headroom: float = GRID_HEADROOM) -> NDArray[np.float64]:
    """``bins`` equal-width bins on ``[0, headroom * max(eigenvalues)]``."""
    top = float(np.max(eigenvalues))
    if not np.isfinite(top) or top <= 0:
        raise ValueError("need a positive largest eigenvalue to build a grid")
    return np.linspace(0.0, headroom * top, bins + 1)


def empirical_density(eigenvalues: ArrayLike, bin_edges: ArrayLike, drop_smallest: int = 0) -> SpectralDensity:
    """Histogram of eigenvalues normalized to unit mass.

    The ``drop_smallest`` smallest eigenvalues are discarded first; they are
    the numerically-zero modes left behind by removing that many components.
    Values past the last edge are counted in the final bin.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64).ravel())
    edges = np.asarray(bin_edges, dtype=np.float64)
    if lam.size and lam[0] < -1e-8:
        raise ValueError(f"eigenvalue {lam[0]!r} is negative")
    if drop_smallest < 0:
        raise ValueError("drop_smallest must be nonnegative")
    kept = lam[drop_smallest:]
    if kept.size == 0:
        raise ValueError("no eigenvalues left after dropping")
    clipped = np.clip(kept, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, bins=edges)
    return SpectralDensity(edges, counts / counts.sum())
