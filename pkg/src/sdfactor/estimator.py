"""Joint estimate of the factor count and residual AR(1) coefficient.

For every candidate ``p`` the panel's ``p``-level PCA residuals are
restandardized and their covariance spectrum (minus the ``p`` zero modes) is
histogrammed on one grid shared by all ``p``.  The model density for every
candidate ``b`` is integrated over the same bins and the Jensen-Shannon
divergence fills one row of the surface.

Removing a few extra noise components barely changes the histogram, so the
surface is flat beyond the true count.  ``p_hat`` is therefore the smallest
``p`` whose best fit is within one eigenvalue's worth of divergence
(``ln 2 / N``) of the overall minimum; ``b_hat`` is then re-fitted at
``p_hat`` on a finer grid of the same range.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import frv
from .divergence import DEFAULT_REGULARIZATION, js_masses
from .spectra import (
    GRID_HEADROOM,
    ReturnPanel,
    SpectralDensity,
    empirical_density,
    pca_residuals,
    principal_components,
    residual_eigenvalues,
    uniform_grid,
)

__all__ = [
    "EstimationError",
    "EstimationResult",
    "EstimatorConfig",
    "SearchGrid",
    "divergence_at",
    "estimate",
    "real_density",
    "select",
]

logger = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """Model density failed for one surface cell."""

    def __init__(self, p: int, b: float, cause: Exception) -> None:
        super().__init__(f"cell (p={p}, b={b:g}): {cause}")
        self.p = p
        self.b = b
        self.__cause__ = cause


@dataclass(frozen=True)
class SearchGrid:
    p_max: int = 20
    b_max: float = 0.95
    b_step: float = 0.01

    def __post_init__(self) -> None:
        if self.p_max < 0:
            raise ValueError("p_max must be nonnegative")
        if not 0 <= self.b_max < 1:
            raise ValueError("b_max must lie in [0, 1)")
        if self.b_step <= 0:
            raise ValueError("b_step must be positive")

    @property
    def p_values(self) -> NDArray[np.int64]:
        return np.arange(self.p_max + 1)

    @property
    def b_values(self) -> NDArray[np.float64]:
        count = int(np.floor(self.b_max / self.b_step + 1e-9)) + 1
        return np.round(np.arange(count) * self.b_step, 12)

    def check(self, panel: ReturnPanel) -> None:
        if self.p_max >= min(panel.n, panel.t):
            raise ValueError(f"p_max={self.p_max} needs min(N, T) > p_max, panel is {panel.n} x {panel.t}")


@dataclass(frozen=True)
class EstimatorConfig:
    """Discretization and selection settings shared by the surface and single-cell probes.

    ``bins`` is the number of histogram bins for the surface; ``None`` picks
    ``max(10, round(N / 10))`` so each bin holds about ten eigenvalues.
    ``fit_bins`` is the finer resolution used to re-fit ``b`` at ``p_hat``
    (``None``: ``max(bins, round(N / 4))``).  The grid is shared by every
    ``p`` and spans ``headroom`` times the largest residual eigenvalue at
    ``p_max``; ``grid_mode="per_p"`` builds one grid per ``p`` instead.

    ``tolerance`` is in units of ``ln 2 / N``, the most the divergence can
    move when one eigenvalue changes bins: ``p_hat`` is the smallest ``p``
    whose best divergence is within that of the surface minimum.  Zero gives
    the plain argmin (ties to the smallest ``p``, then ``b``).

    ``c_mode`` picks the model aspect ratio: ``"full"`` uses ``N / T`` and
    ``"reduced"`` uses ``(N - p) / T``.
    """

    bins: int | None = None
    fit_bins: int | None = None
    headroom: float = GRID_HEADROOM
    epsilon: float = frv.DEFAULT_EPSILON
    regularization: float = DEFAULT_REGULARIZATION
    restandardize: bool = True
    c_mode: str = "full"
    grid_mode: str = "shared"
    binning: str = "gauss"
    tolerance: float = 1.0
    refine_b: bool = False

    def __post_init__(self) -> None:
        if self.c_mode not in ("full", "reduced"):
            raise ValueError("c_mode must be 'full' or 'reduced'")
        if self.grid_mode not in ("shared", "per_p"):
            raise ValueError("grid_mode must be 'shared' or 'per_p'")
        if self.binning not in frv.BINNING_RULES:
            raise ValueError(f"binning must be one of {frv.BINNING_RULES}")
        for name in ("bins", "fit_bins"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be positive")
        if self.headroom < 1:
            raise ValueError("headroom must be at least 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")

    def aspect_ratio(self, panel: ReturnPanel, p: int) -> float:
        n = panel.n - p if self.c_mode == "reduced" else panel.n
        return n / panel.t

    def surface_bins(self, panel: ReturnPanel) -> int:
        return self.bins if self.bins is not None else max(10, round(panel.n / 10))

    def refit_bins(self, panel: ReturnPanel) -> int:
        base = self.surface_bins(panel)
        return self.fit_bins if self.fit_bins is not None else max(base, round(panel.n / 4))


@dataclass(frozen=True)
class EstimationResult:
    p_hat: int
    b_hat: float
    divergence_surface: NDArray[np.float64]
    p_values: NDArray[np.int64]
    b_values: NDArray[np.float64]
    min_divergence: float
    explained_variance_at_p_hat: float
    variance_per_factor: float
    eigenvalues: NDArray[np.float64] = field(repr=False, default_factory=lambda: np.zeros(0))
    bin_edges: NDArray[np.float64] = field(repr=False, default_factory=lambda: np.zeros(0))
    fit_divergence: float = float("nan")

    @property
    def profile(self) -> NDArray[np.float64]:
        """Best divergence over ``b`` for every ``p``."""
        return self.divergence_surface.min(axis=1)

    def to_dict(self, include_surface: bool = False) -> dict:
        out = {
            "p_hat": int(self.p_hat),
            "b_hat": float(self.b_hat),
            "min_divergence": float(self.min_divergence),
            "fit_divergence": float(self.fit_divergence),
            "explained_variance_at_p_hat": float(self.explained_variance_at_p_hat),
            "variance_per_factor": float(self.variance_per_factor),
        }
        if include_surface:
            out["p_values"] = [int(p) for p in self.p_values]
            out["b_values"] = [float(b) for b in self.b_values]
            out["bin_edges"] = [float(e) for e in self.bin_edges]
            out["divergence_surface"] = self.divergence_surface.tolist()
        return out


def _require_normalized(panel: ReturnPanel) -> None:
    if not panel.normalized:
        raise ValueError("panel must be normalized first (see normalize_panel)")


class _Spectra:
    """Residual eigenvalues per ``p``, computed once per panel."""

    def __init__(self, panel: ReturnPanel, config: EstimatorConfig) -> None:
        self.panel = panel
        self.config = config
        self.components = principal_components(panel)
        self._cache: dict[int, NDArray[np.float64]] = {}

    def eigenvalues(self, p: int) -> NDArray[np.float64]:
        if p not in self._cache:
            res = pca_residuals(self.panel, p, self.components)
            lam = residual_eigenvalues(res, restandardize=self.config.restandardize)
            self._cache[p] = np.clip(lam, 0.0, None)
        return self._cache[p]

    def edges(self, p: int, p_max: int, bins: int) -> NDArray[np.float64]:
        anchor = p_max if self.config.grid_mode == "shared" else p
        return uniform_grid(self.eigenvalues(anchor), bins, self.config.headroom)

    def density(self, p: int, edges: NDArray[np.float64]) -> SpectralDensity:
        return empirical_density(self.eigenvalues(p), edges, drop_smallest=p)


def real_density(
    panel: ReturnPanel,
    p: int,
    config: EstimatorConfig = EstimatorConfig(),
    grid: "SearchGrid | None" = None,
    bins: int | None = None,
) -> SpectralDensity:
    """Residual spectrum after removing ``p`` components, on the estimator's grid.

    The grid is the one :func:`estimate` uses for ``grid`` (default: a
    search up to ``p_max = max(p, SearchGrid().p_max)`` capped by the panel).
    """
    _require_normalized(panel)
    grid = grid if grid is not None else _default_grid(panel, p)
    spectra = _Spectra(panel, config)
    edges = spectra.edges(p, grid.p_max, bins if bins is not None else config.surface_bins(panel))
    return spectra.density(p, edges)


def _default_grid(panel: ReturnPanel, p: int) -> "SearchGrid":
    default = SearchGrid()
    return SearchGrid(p_max=max(p, min(default.p_max, min(panel.n, panel.t) - 1)))


def _models(b_values, c, edges, p, config) -> NDArray[np.float64]:
    try:
        return frv.model_densities(b_values, c, edges, config.epsilon, config.binning)
    except frv.BranchSelectionError as exc:
        raise EstimationError(p, exc.b, exc) from exc


def _rows(real: SpectralDensity, models: NDArray[np.float64], config: EstimatorConfig) -> NDArray[np.float64]:
    return js_masses(real.masses[None, :], models, config.regularization)


def divergence_at(
    panel: ReturnPanel,
    p: int,
    b: float,
    config: EstimatorConfig = EstimatorConfig(),
    grid: "SearchGrid | None" = None,
) -> float:
    """Objective value of a single ``(p, b)`` cell of :func:`estimate`'s surface.

    Pass the same ``grid`` as to :func:`estimate`: the shared bin grid
    depends on ``p_max``.
    """
    _require_normalized(panel)
    grid = grid if grid is not None else _default_grid(panel, p)
    spectra = _Spectra(panel, config)
    edges = spectra.edges(p, grid.p_max, config.surface_bins(panel))
    models = _models(np.array([float(b)]), config.aspect_ratio(panel, p), edges, p, config)
    return float(_rows(spectra.density(p, edges), models, config)[0])


def select(profile: NDArray[np.float64], n: int, tolerance: float) -> int:
    """Index of the smallest ``p`` whose best fit is within ``tolerance * ln2 / n`` of the best."""
    threshold = profile.min() + tolerance * np.log(2.0) / n
    return int(np.flatnonzero(profile <= threshold)[0])


def estimate(
    panel: ReturnPanel,
    grid: SearchGrid = SearchGrid(),
    config: EstimatorConfig = EstimatorConfig(),
) -> EstimationResult:
    _require_normalized(panel)
    grid.check(panel)
    spectra = _Spectra(panel, config)
    p_values, b_values = grid.p_values, grid.b_values
    bins = config.surface_bins(panel)
    surface = np.empty((p_values.size, b_values.size))
    shared = None
    for i, p in enumerate(p_values):
        p = int(p)
        edges = spectra.edges(p, grid.p_max, bins)
        c = config.aspect_ratio(panel, p)
        if config.grid_mode == "shared" and config.c_mode == "full":
            if shared is None:
                shared = _models(b_values, c, edges, p, config)
            models = shared
        else:
            models = _models(b_values, c, edges, p, config)
        surface[i] = _rows(spectra.density(p, edges), models, config)

    ip = select(surface.min(axis=1), panel.n, config.tolerance)
    ib = int(np.argmin(surface[ip]))
    p_hat = int(p_values[ip])
    b_hat = float(b_values[ib])
    best = float(surface[ip, ib])
    fit_edges = spectra.edges(p_hat, grid.p_max, config.refit_bins(panel))
    fit_best = best
    if fit_edges.size != bins + 1:
        row = _rows(
            spectra.density(p_hat, fit_edges),
            _models(b_values, config.aspect_ratio(panel, p_hat), fit_edges, p_hat, config),
            config,
        )
        ib = int(np.argmin(row))
        b_hat, fit_best = float(b_values[ib]), float(row[ib])
    if config.refine_b:
        b_hat, fit_best = _refine(spectra.density(p_hat, fit_edges), b_hat, fit_best, grid, config.aspect_ratio(panel, p_hat), p_hat, config)

    evals = np.clip(spectra.components[0], 0.0, None)
    explained = float(evals[:p_hat].sum() / evals.sum()) if p_hat else 0.0
    logger.debug("p_hat=%d b_hat=%.3f D=%.4g", p_hat, b_hat, best)
    return EstimationResult(
        p_hat=p_hat,
        b_hat=b_hat,
        divergence_surface=surface,
        p_values=p_values,
        b_values=b_values,
        min_divergence=float(surface.min()),
        explained_variance_at_p_hat=explained,
        variance_per_factor=explained / max(p_hat, 1),
        eigenvalues=evals,
        bin_edges=spectra.edges(0, grid.p_max, bins),
        fit_divergence=fit_best,
    )


def _refine(real, b_hat, best, grid, c, p, config):
    step = grid.b_step / 10.0
    lo = max(b_hat - grid.b_step, 0.0)
    hi = min(b_hat + grid.b_step, grid.b_max)
    fine = np.round(np.arange(lo, hi + 0.5 * step, step), 12)
    row = _rows(real, _models(fine, c, real.bin_edges, p, config), config)
    k = int(np.argmin(row))
    if row[k] < best:
        return float(fine[k]), float(row[k])
    return b_hat, best
