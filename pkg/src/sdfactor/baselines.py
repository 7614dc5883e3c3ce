"""Eigenvalue-based factor-count estimators used as comparisons.

* ``bic3``: Bai-Ng information criterion with the ``(N + T - k) ln(NT) / NT``
  penalty and ``sigma^2`` taken from the largest model.
* ``ed``: Onatski's edge-distribution estimator with its iterated threshold.
* ``er``: Ahn-Horenstein eigenvalue ratio.

All three read the descending eigenvalues of ``X X^T / T``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .spectra import ReturnPanel, covariance

__all__ = ["BaselineReport", "Method", "bic3", "ed", "er", "run_baseline", "sorted_eigenvalues"]

DEFAULT_K_MAX = 20
ED_MAX_ITERATIONS = 10
_ED_WINDOW = 5


class Method(str, enum.Enum):
    BIC3 = "BIC3"
    ED = "ED"
    ER = "ER"


@dataclass(frozen=True)
class BaselineReport:
    method: Method
    p_hat: int
    criterion_values: NDArray[np.float64]
    flagged: bool = False


def sorted_eigenvalues(panel: ReturnPanel | ArrayLike) -> NDArray[np.float64]:
    """Descending eigenvalues of the sample covariance."""
    return np.linalg.eigvalsh(covariance(panel))[::-1].copy()


def _check_k_max(k_max: int, bound: int, what: str) -> None:
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if k_max >= bound:
        raise ValueError(f"k_max={k_max} too large: need {what}")


def bic3(panel: ReturnPanel, k_max: int = DEFAULT_K_MAX) -> BaselineReport:
    n, t = panel.n, panel.t
    _check_k_max(k_max, min(n, t), "k_max < min(N, T)")
    lam = np.clip(sorted_eigenvalues(panel), 0.0, None)
    # mean squared residual after k components is the tail eigenvalue mass / N
    tail = np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])
    v = tail[: k_max + 1] / n
    sigma2 = v[k_max]
    k = np.arange(k_max + 1)
    crit = v + k * sigma2 * (n + t - k) * math.log(n * t) / (n * t)
    return BaselineReport(Method.BIC3, int(np.argmin(crit)), crit)


def _ed_threshold(lam: NDArray[np.float64], k: int) -> float:
    j = np.arange(k + 1, k + _ED_WINDOW + 1)
    y = lam[j - 1]
    x = (j - 1.0) ** (2.0 / 3.0)
    slope = np.polyfit(x, y, 1)[0]
    return 2.0 * abs(slope)


def ed_from_eigenvalues(lam: ArrayLike, k_max: int = DEFAULT_K_MAX) -> BaselineReport:
    """ED on descending eigenvalues ``lam`` (``lam[0]`` is the largest)."""
    lam = np.asarray(lam, dtype=np.float64)
    _check_k_max(k_max, lam.size - _ED_WINDOW, "k_max + 5 < N")
    gaps = lam[:k_max] - lam[1 : k_max + 1]
    k_hat = k_max
    converged = False
    for _ in range(ED_MAX_ITERATIONS):
        delta = _ed_threshold(lam, k_hat)
        above = np.flatnonzero(gaps >= delta)
        new = int(above[-1]) + 1 if above.size else 0
        if new == k_hat:
            converged = True
            break
        k_hat = new
    return BaselineReport(Method.ED, k_hat, gaps, flagged=not converged)


def ed(panel: ReturnPanel, k_max: int = DEFAULT_K_MAX) -> BaselineReport:
    return ed_from_eigenvalues(sorted_eigenvalues(panel), k_max)


def er_from_eigenvalues(lam: ArrayLike, k_max: int = DEFAULT_K_MAX) -> BaselineReport:
    """ER on descending eigenvalues; ratios past a zero eigenvalue are dropped."""
    lam = np.asarray(lam, dtype=np.float64)
    _check_k_max(k_max, lam.size, "k_max + 1 <= N")
    if k_max == 0:
        return BaselineReport(Method.ER, 0, np.zeros(0))
    head = lam[: k_max + 1]
    zero = np.flatnonzero(head <= 1e-12 * max(head[0], 1e-300))
    usable = k_max if not zero.size else int(zero[0]) - 1
    ratios = np.full(k_max, np.nan)
    if usable >= 1:
        ratios[:usable] = head[:usable] / head[1 : usable + 1]
        p_hat = int(np.argmax(ratios[:usable])) + 1
    else:
        p_hat = 0
    return BaselineReport(Method.ER, p_hat, ratios, flagged=bool(zero.size))


def er(panel: ReturnPanel, k_max: int = DEFAULT_K_MAX) -> BaselineReport:
    return er_from_eigenvalues(sorted_eigenvalues(panel), k_max)


_DISPATCH = {Method.BIC3: bic3, Method.ED: ed, Method.ER: er}


def run_baseline(method: Method | str, panel: ReturnPanel, k_max: int = DEFAULT_K_MAX) -> BaselineReport:
    return _DISPATCH[Method(method)](panel, k_max)
