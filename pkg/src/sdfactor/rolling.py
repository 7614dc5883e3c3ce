"""Moving-window estimation and per-series AR(1) diagnostics of residuals."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .estimator import EstimatorConfig, SearchGrid, estimate
from .spectra import ResidualSet, ReturnPanel, normalize_panel, pca_residuals

__all__ = ["AR1Fit", "DEFAULT_WINDOW", "WindowSeries", "ar1_per_residual", "rolling_estimate"]

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 378


@dataclass(frozen=True)
class AR1Fit:
    coefficients: NDArray[np.float64]
    b_ind: float
    degenerate_rows: tuple[int, ...] = ()


def ar1_per_residual(residuals: ResidualSet | NDArray[np.float64]) -> AR1Fit:
    """Lag-1 least-squares slope (no intercept) for every row.

    ``b_ind`` is the mean absolute slope.  Rows with no lagged variance get
    coefficient 0 and are listed in ``degenerate_rows``.
    """
    u = residuals.residuals if isinstance(residuals, ResidualSet) else np.asarray(residuals, dtype=np.float64)
    u = np.atleast_2d(u)
    if u.shape[1] < 3:
        raise ValueError("need T >= 3 for a lag-1 regression")
    x, y = u[:, :-1], u[:, 1:]
    sxx = np.einsum("ij,ij->i", x, x)
    sxy = np.einsum("ij,ij->i", x, y)
    scale = np.einsum("ij,ij->i", u, u)
    degenerate = sxx <= 1e-24 * np.maximum(scale, 1e-300)
    coef = np.where(degenerate, 0.0, sxy / np.where(degenerate, 1.0, sxx))
    return AR1Fit(coef, float(np.mean(np.abs(coef))), tuple(int(i) for i in np.flatnonzero(degenerate)))


@dataclass(frozen=True)
class WindowSeries:
    """One entry per window position; failed windows hold NaN and an error text."""

    dates: tuple[str, ...]
    p_hat: NDArray[np.float64]
    b_hat: NDArray[np.float64]
    explained_variance: NDArray[np.float64]
    variance_per_factor: NDArray[np.float64]
    b_ind: NDArray[np.float64]
    errors: tuple[str | None, ...]

    def __len__(self) -> int:
        return len(self.dates)

    def rows(self) -> list[dict]:
        return [
            {
                "date": d,
                "p_hat": self.p_hat[i],
                "b_hat": self.b_hat[i],
                "explained_variance": self.explained_variance[i],
                "variance_per_factor": self.variance_per_factor[i],
                "b_ind": self.b_ind[i],
                "error": self.errors[i] or "",
            }
            for i, d in enumerate(self.dates)
        ]


def _window(task: tuple[NDArray[np.float64], tuple[str, ...], SearchGrid, EstimatorConfig]):
    values, ids, grid, config = task
    try:
        panel = normalize_panel(ReturnPanel(values, ids))
        res = estimate(panel, grid, config)
        fit = ar1_per_residual(pca_residuals(panel, res.p_hat))
        return (
            float(res.p_hat),
            res.b_hat,
            res.explained_variance_at_p_hat,
            res.variance_per_factor,
            fit.b_ind,
            None,
        )
    except Exception as exc:  # a failed window is a gap, not a fatal error
        logger.warning("window failed: %s", exc)
        nan = math.nan
        return nan, nan, nan, nan, nan, f"{type(exc).__name__}: {exc}"


def rolling_estimate(
    panel: ReturnPanel,
    window: int = DEFAULT_WINDOW,
    step: int = 1,
    grid: SearchGrid = SearchGrid(),
    config: EstimatorConfig = EstimatorConfig(),
    dates: Sequence[str] | None = None,
    workers: int = 1,
) -> WindowSeries:
    """Estimate on every window ``[s, s + window)``, ``s = 0, step, 2 step, ...``.

    Each window is normalized on its own.  The entry is labelled with the date
    of the window's last observation.
    """
    if not 1 <= window <= panel.t:
        raise ValueError(f"window must lie in [1, T={panel.t}]")
    if step < 1:
        raise ValueError("step must be at least 1")
    labels = tuple(str(d) for d in dates) if dates is not None else tuple(str(i) for i in range(panel.t))
    if len(labels) != panel.t:
        raise ValueError("need one date label per observation")
    starts = range(0, panel.t - window + 1, step)
    tasks = [(panel.values[:, s : s + window], panel.series_ids, grid, config) for s in starts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_window, tasks))
    else:
        out = [_window(t) for t in tasks]
    cols = list(zip(*out)) if out else [()] * 6
    return WindowSeries(
        dates=tuple(labels[s + window - 1] for s in starts),
        p_hat=np.array(cols[0], dtype=np.float64),
        b_hat=np.array(cols[1], dtype=np.float64),
        explained_variance=np.array(cols[2], dtype=np.float64),
        variance_per_factor=np.array(cols[3], dtype=np.float64),
        b_ind=np.array(cols[4], dtype=np.float64),
        errors=tuple(cols[5]),
    )
