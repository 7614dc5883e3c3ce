from __future__ import annotations

import numpy as np
import pytest

from sdfactor.divergence import js_masses
from sdfactor.frv import mp_density
from sdfactor.spectra import covariance, empirical_density, uniform_grid
from sdfactor.synthgen import (
    SyntheticConfig,
    ar1_rows,
    generate,
    generate_meanfield_pair,
    make_rng,
    table1_config,
)


def _lag1(x: np.ndarray) -> np.ndarray:
    x = x - x.mean(axis=1, keepdims=True)
    return np.sum(x[:, 1:] * x[:, :-1], axis=1) / np.sum(x * x, axis=1)


def test_white_noise_has_unit_variance() -> None:
    _, truth = generate(SyntheticConfig(n=100, t=1000, inv_snr=0.5, seed=1))
    assert truth.noise.var() == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("rho,beta", [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)])
def test_unit_variance_away_from_the_boundary(rho: float, beta: float) -> None:
    n = 200
    j = n // 10 if beta else 0
    _, truth = generate(SyntheticConfig(n=n, t=1000, rho=rho, beta=beta, j=j, seed=2))
    # rows within J of either end have fewer neighbours and so less variance
    interior = truth.noise[j : n - j]
    assert interior.var() == pytest.approx(1.0, rel=0.02)


def test_boundary_rows_lose_variance_by_the_neighbour_count() -> None:
    n, j, beta = 200, 20, 0.5
    _, truth = generate(SyntheticConfig(n=n, t=4000, beta=beta, j=j, seed=4))
    i = np.arange(n)
    neighbours = np.minimum(i + j, n - 1) - np.maximum(i - j, 0)
    expected = (1 + neighbours * beta**2) / (1 + 2 * j * beta**2)
    np.testing.assert_allclose(truth.noise.var(axis=1), expected, rtol=0.08)


def test_ar1_noise_has_lag1_autocorrelation() -> None:
    _, truth = generate(SyntheticConfig(n=100, t=2000, rho=0.5, seed=3))
    ac = _lag1(truth.noise)
    # per-row standard error is sqrt(0.75 / 2000) ~ 0.019, so a few rows of 100 may sit past 0.05
    assert abs(ac.mean() - 0.5) < 0.01
    assert np.mean(np.abs(ac - 0.5) < 0.05) >= 0.95


def test_cross_correlation_is_local() -> None:
    n, j = 200, 20
    _, truth = generate(SyntheticConfig(n=n, t=5000, beta=0.5, j=j, seed=5))
    corr = np.corrcoef(truth.noise)
    near = np.mean([corr[i, i + 1] for i in range(n - 1)])
    far = np.mean(np.abs(corr[np.abs(np.subtract.outer(np.arange(n), np.arange(n))) > 2 * j]))
    assert near > 0
    assert near - far > 0.1


def test_no_factors_gives_scaled_noise() -> None:
    panel, truth = generate(SyntheticConfig(n=20, t=50, p_true=0, inv_snr=2.0, seed=6))
    np.testing.assert_array_equal(panel.values, np.sqrt(2.0) * truth.noise)
    assert not truth.has_factors


def test_weak_factors_are_scaled() -> None:
    cfg = SyntheticConfig(n=50, t=4000, sigma_weak=0.3, weak_count=3, seed=7)
    _, truth = generate(cfg)
    sd = truth.factors.std(axis=1)
    np.testing.assert_allclose(sd[:3], 0.3, rtol=0.05)
    assert sd[3] == pytest.approx(1.0, rel=0.05)


def test_seed_determinism() -> None:
    cfg = table1_config(60, 4, 0.5, 0.5, 0.5, seed=11)
    a, _ = generate(cfg)
    b, _ = generate(cfg)
    c, _ = generate(cfg.with_seed(12))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    np.testing.assert_array_equal(make_rng(5).standard_normal(4), make_rng(5).standard_normal(4))


def test_table1_config_uses_tenth_of_n() -> None:
    cfg = table1_config(205, 4, 0.25, 0.5, 0.5)
    assert (cfg.t, cfg.j, cfg.theta) == (205, 20, 1.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=1, t=5),
        dict(n=5, t=5, inv_snr=0.0),
        dict(n=5, t=5, rho=1.0),
        dict(n=5, t=5, beta=1.5),
        dict(n=5, t=5, j=5),
        dict(n=5, t=5, weak_count=5),
        dict(n=5, t=5, sigma_weak=0.0),
    ],
)
def test_config_validation(kwargs) -> None:
    with pytest.raises(ValueError):
        SyntheticConfig(**kwargs)


def test_ar1_rows_are_stationary() -> None:
    x = ar1_rows(make_rng(0), np.full(200, 0.7), 3000)
    assert x.var() == pytest.approx(1.0, abs=0.05)
    assert np.mean(_lag1(x)) == pytest.approx(0.7, abs=0.02)


def _js_between(y, z) -> float:
    ly = np.linalg.eigvalsh(covariance(y.values))
    lz = np.linalg.eigvalsh(covariance(z.values))
    edges = uniform_grid(np.concatenate([ly, lz]), 100)
    return float(js_masses(empirical_density(ly, edges).masses, empirical_density(lz, edges).masses))


def test_meanfield_pair_same_law_is_close() -> None:
    y, z = generate_meanfield_pair(300, 600, 0.5, 0.5, 0.5, seed=0)
    assert _js_between(y, z) < 0.01 + 0.03  # two independent finite samples, not a limit


def test_meanfield_white_noise_matches_mp() -> None:
    _, z = generate_meanfield_pair(300, 600, 0.0, 1.0 - 1e-12, 0.0, seed=1)
    lam = np.linalg.eigvalsh(covariance(z.values))
    edges = uniform_grid(lam, 100)
    assert float(js_masses(empirical_density(lam, edges).masses, mp_density(0.5, edges).masses)) < 0.05


def test_meanfield_pair_validation() -> None:
    with pytest.raises(ValueError):
        generate_meanfield_pair(10, 20, 0.6, 0.5, 0.5, 0)
    with pytest.raises(ValueError):
        generate_meanfield_pair(10, 20, 0.0, 0.5, 1.0, 0)
