from __future__ import annotations

import math

import numpy as np
import pytest

from sdfactor import baselines
from sdfactor.baselines import Method, bic3, ed, ed_from_eigenvalues, er, er_from_eigenvalues, run_baseline
from sdfactor.spectra import normalize_panel, pca_residuals
from sdfactor.synthgen import table1_config, generate


def _panel(n=100, inv_snr=0.25, seed=0, **kw):
    return normalize_panel(generate(table1_config(n, 4, inv_snr, 0.0, 0.0, seed=seed, **kw))[0])


def test_bic3_criterion_matches_residual_oracle() -> None:
    panel = _panel(n=40)
    n, t, k_max = panel.n, panel.t, 6
    v = [float(np.mean(pca_residuals(panel, k).residuals ** 2)) for k in range(k_max + 1)]
    sigma2 = v[k_max]
    expected = [v[k] + k * sigma2 * (n + t - k) * math.log(n * t) / (n * t) for k in range(k_max + 1)]
    report = bic3(panel, k_max)
    np.testing.assert_allclose(report.criterion_values, expected, rtol=1e-9)
    assert report.p_hat == int(np.argmin(expected))


@pytest.mark.parametrize("method", list(Method))
def test_strong_factors_are_found(method: Method) -> None:
    report = run_baseline(method, _panel(seed=3), 10)
    assert report.method == method
    assert report.p_hat == 4


def test_run_baseline_accepts_names() -> None:
    assert run_baseline("ER", _panel(seed=1), 8).p_hat == er(_panel(seed=1), 8).p_hat
    with pytest.raises(ValueError):
        run_baseline("XYZ", _panel(seed=1), 8)


def test_er_ratio_argmax() -> None:
    lam = np.array([50.0, 40.0, 30.0, 3.0, 2.9, 2.8, 2.7])
    report = er_from_eigenvalues(lam, 5)
    assert report.p_hat == 3
    np.testing.assert_allclose(report.criterion_values[:2], [50 / 40, 40 / 30])


def test_er_restricts_range_at_zero_eigenvalue() -> None:
    lam = np.array([5.0, 4.0, 1.0, 0.0, 0.0])
    report = er_from_eigenvalues(lam, 4)
    assert report.flagged
    assert report.p_hat == 2
    assert np.all(np.isnan(report.criterion_values[2:]))


def test_ed_on_a_clean_gap() -> None:
    bulk = 2.0 - 0.01 * np.arange(60) ** (2 / 3)
    lam = np.concatenate([[30.0, 20.0, 10.0], bulk])
    report = ed_from_eigenvalues(lam, 10)
    assert report.p_hat == 3
    assert not report.flagged
    np.testing.assert_allclose(report.criterion_values, lam[:10] - lam[1:11])


def test_ed_threshold_is_twice_the_edge_slope() -> None:
    j = np.arange(1, 30)
    lam = 5.0 - 0.4 * (j - 1) ** (2 / 3)
    assert baselines._ed_threshold(lam, 3) == pytest.approx(0.8)


def test_k_max_bounds() -> None:
    panel = _panel(n=20)
    with pytest.raises(ValueError):
        bic3(panel, 20)
    with pytest.raises(ValueError):
        ed(panel, 16)
    with pytest.raises(ValueError):
        er(panel, -1)
    assert er(panel, 0).p_hat == 0


def test_sorted_eigenvalues_descending() -> None:
    lam = baselines.sorted_eigenvalues(_panel(n=30))
    assert np.all(np.diff(lam) <= 0)
    assert lam.sum() == pytest.approx(30.0)
