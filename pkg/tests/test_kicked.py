"""Kicked flow: exact updates, chaotic streams, operator decay, OU limit."""
import math
from fractions import Fraction

import numpy as np
import pytest

from ddlab.kicked import (
    KickConfig,
    centered_identity,
    equidistributed_seeds,
    evolve_kicked,
    fp_decay_check,
    ou_limit_suite,
    write_kick_report,
)
from ddlab.maps import AffineCircleMap, DensityCoupledTentMap, TentMap
from ddlab.tabular import read_csv


# ---------------------------------------------------------------------------
# configuration


def test_config_defaults():
    cfg = KickConfig(gamma=1.0, tau=0.1)
    assert cfg.kappa == math.sqrt(0.1)
    assert cfg.kappa_sq_over_tau == pytest.approx(1.0, rel=1e-12)
    assert isinstance(cfg.map, TentMap) and cfg.map.a == 2.0
    assert cfg.observable is centered_identity
    assert cfg.observable(0.75) == pytest.approx(0.25)


def test_config_validation():
    with pytest.raises(ValueError):
        KickConfig(gamma=0.0, tau=0.1)
    with pytest.raises(ValueError):
        KickConfig(gamma=1.0, tau=-0.1)
    with pytest.raises(ValueError):
        KickConfig(gamma=1.0, tau=0.1, kappa=0.0)


# ---------------------------------------------------------------------------
# the kicked flow


def test_pure_decay_without_kicks():
    cfg = KickConfig(gamma=2.0, tau=0.25, observable=lambda x: 0.0)
    tr = evolve_kicked(cfg, 1.5, -3.0, 0.3, 40)
    lam = math.exp(-2.0 * 0.25)
    assert tr.v[40] == pytest.approx(-3.0 * lam ** 40, rel=1e-12)
    # x approaches x0 + v0/gamma along the closed-form geometric path
    expect = 1.5 + (-3.0) * (1.0 - lam ** 40) / 2.0
    assert tr.x[40] == pytest.approx(expect, rel=1e-12)


def test_three_kick_hand_sequence():
    cfg = KickConfig(gamma=1.0, tau=0.1)
    tr = evolve_kicked(cfg, 0.0, 0.0, 0.2, 3)
    # slope-2 tent orbit of 0.2 is 0.4, 0.8, 0.4
    assert np.allclose(tr.xi, [0.2, 0.4, 0.8, 0.4], atol=1e-14)

    k = math.sqrt(0.1)
    lam = math.exp(-0.1)
    drift = 1.0 - lam
    v1 = k * (0.4 - 0.5)
    x1 = 0.0
    v2 = v1 * lam + k * (0.8 - 0.5)
    x2 = x1 + v1 * drift
    v3 = v2 * lam + k * (0.4 - 0.5)
    x3 = x2 + v2 * drift
    assert np.allclose(tr.v, [0.0, v1, v2, v3], atol=1e-15)
    assert np.allclose(tr.x, [0.0, x1, x2, x3], atol=1e-15)
    assert tr.n_kicks == 3
    assert np.allclose(tr.times, [0.0, 0.1, 0.2, 0.3])


def test_interkick_decay_identity():
    cfg = KickConfig(gamma=1.3, tau=0.2)
    tr = evolve_kicked(cfg, 0.0, 0.7, Fraction(3, 7), 200)
    lam = math.exp(-1.3 * 0.2)
    jumps = tr.v[1:] - tr.v[:-1] * lam
    expected = cfg.kappa * (tr.xi[1:] - 0.5)
    assert np.max(np.abs(jumps - expected)) < 1e-15


def test_large_gamma_is_memoryless():
    cfg = KickConfig(gamma=200.0, tau=0.5)
    tr = evolve_kicked(cfg, 0.0, 5.0, 0.2, 6)
    expected = cfg.kappa * (tr.xi[1:] - 0.5)
    assert np.max(np.abs(tr.v[1:] - expected)) < 1e-12


def test_chaotic_stream_matches_exact_direct_iteration():
    seeds = equidistributed_seeds(3)
    cfg = KickConfig(gamma=1.0, tau=0.1)
    for seed in seeds:
        tr = evolve_kicked(cfg, 0.0, 0.0, seed, 1000)
        xi = Fraction(seed)
        direct = [float(xi)]
        for _ in range(1000):
            xi = 2 * min(xi, 1 - xi)
            direct.append(float(xi))
        assert np.max(np.abs(tr.xi - np.array(direct))) < 1e-15
        # no dyadic collapse: the orbit keeps exploring the interval
        assert tr.xi[500:].std() > 0.1


def test_float_seed_collapses_but_fraction_survives():
    cfg = KickConfig(gamma=1.0, tau=0.1)
    # 0.3 as a float is a dyadic rational: its exact orbit must hit 0
    collapsed = evolve_kicked(cfg, 0.0, 0.0, 0.3, 200)
    assert np.all(collapsed.xi[60:] == 0.0)
    alive = evolve_kicked(cfg, 0.0, 0.0, Fraction(3, 10), 200)
    assert alive.xi[60:].std() > 0.1


def test_xi0_validation():
    cfg = KickConfig(gamma=1.0, tau=0.1)
    with pytest.raises(ValueError):
        evolve_kicked(cfg, 0.0, 0.0, 1.2, 5)
    with pytest.raises(ValueError):
        evolve_kicked(cfg, 0.0, 0.0, 0.5, -1)


def test_seed_list_is_stable_and_nondyadic():
    a = equidistributed_seeds(50)
    b = equidistributed_seeds(50)
    assert a == b
    assert len(set(a)) == 50
    for s in a:
        assert 0 < s < 1
        assert s.denominator % 2 == 1  # never dyadic


# ---------------------------------------------------------------------------
# transfer-operator decay


def test_centered_identity_annihilated_in_one_step():
    norms = fp_decay_check(TentMap(2.0), centered_identity, 5)
    assert norms[0] < 1e-12
    assert np.all(norms < 1e-12)


def test_constants_are_preserved():
    norms = fp_decay_check(TentMap(2.0), lambda x: np.full_like(x, 0.7), 20)
    assert np.allclose(norms, 0.7, atol=1e-12)


def test_centered_indicator_decays():
    def h(x):
        return np.where(x <= 0.5, 0.5, -0.5)

    norms = fp_decay_check(TentMap(2.0), h, 20)
    assert norms[19] < 1e-6


def test_tabulated_values_match_callable():
    centers = (np.arange(512) + 0.5) / 512
    by_call = fp_decay_check(TentMap(2.0), centered_identity, 4, cells=512)
    by_grid = fp_decay_check(TentMap(2.0), centered_identity(centers), 4)
    assert np.array_equal(by_call, by_grid)


def test_circle_map_norms_never_increase():
    norms = fp_decay_check(AffineCircleMap(0.5, 0.567), centered_identity,
                           15, cells=1024)
    assert np.all(np.isfinite(norms))
    assert np.all(np.diff(norms) <= 1e-12)


def test_density_coupled_map_is_rejected():
    with pytest.raises(TypeError):
        fp_decay_check(DensityCoupledTentMap(0.0, 0.5), centered_identity, 3)


# ---------------------------------------------------------------------------
# small-tau limit


def _stationary_variance(gamma, tau):
    # kicks are uncorrelated (the centered observable dies in one
    # transfer-operator step), so the variance telescopes to a geometric
    # series: tau * Var(h) / (1 - e^{-2 gamma tau}) with Var(h) = 1/12
    lam2 = math.exp(-2.0 * gamma * tau)
    return tau / 12.0 / (1.0 - lam2)


def test_suite_matches_geometric_variance_prediction():
    reports = ou_limit_suite(1.0, [0.2, 0.1], 4000, ensemble=192)
    for rep in reports:
        pred = _stationary_variance(1.0, rep.tau)
        assert abs(rep.var_v - pred) / pred < 0.1
    # closer kicks look more Gaussian
    assert reports[1].normality_stat < reports[0].normality_stat
    assert reports[1].msd_r2 > 0.9


def test_suite_mean_velocity_is_centered():
    reports = ou_limit_suite(1.0, [0.1], 4000, ensemble=192)
    rep = reports[0]
    lam = math.exp(-0.1)
    inflate = (1.0 + lam) / (1.0 - lam)  # AR(1) correlation correction
    se = math.sqrt(rep.var_v * inflate / rep.n_samples)
    assert abs(rep.mean_v) < 3.0 * se


def test_suite_is_deterministic():
    a = ou_limit_suite(1.0, [0.2], 1500, ensemble=64)[0]
    b = ou_limit_suite(1.0, [0.2], 1500, ensemble=64)[0]
    assert a == b


def test_doubling_gamma_halves_the_variance():
    slow = ou_limit_suite(1.0, [0.1], 4000, ensemble=192)[0]
    fast = ou_limit_suite(2.0, [0.1], 4000, ensemble=192)[0]
    assert 0.4 < fast.var_v / slow.var_v < 0.6


def test_suite_validation():
    with pytest.raises(ValueError):
        ou_limit_suite(1.0, [0.1, 0.2], 4000)
    with pytest.raises(ValueError):
        ou_limit_suite(1.0, [0.1], 150)  # all transient at this tau


def test_report_csv(tmp_path):
    reports = ou_limit_suite(1.0, [0.2], 1500, ensemble=64)
    path = tmp_path / "report.csv"
    write_kick_report(path, reports)
    header, cols = read_csv(path)
    assert header == ["tau", "var_v", "normality_stat", "msd_slope",
                      "msd_r2"]
    assert cols[0][0] == 0.2
    assert cols[1][0] == pytest.approx(reports[0].var_v)
