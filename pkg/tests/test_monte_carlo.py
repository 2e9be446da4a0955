import math

import numpy as np
import pytest

from nodal_lab import monte_carlo as mc
from nodal_lab.errors import NoAtom, UnsupportedDirection, ValidationError
from nodal_lab.gaussian_fields import ANGULAR, restrict, sample_wave
from nodal_lab.lattice_spectral import cilleruelo_measure, resolve_measure
from nodal_lab.zero_counter import count_zeros, exact_distribution_u0, exact_persistence


def test_streams_are_counter_based():
    a = mc.sample_rng(5, 17).standard_normal(8)
    b = mc.sample_rng(5, 17).standard_normal(8)
    c = mc.sample_rng(5, 18).standard_normal(8)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    # any chunking gives the same rows
    b1, c1 = mc.draw_coefficients(3, 0, 10, 4)
    b2, c2 = mc.draw_coefficients(3, 6, 10, 4)
    np.testing.assert_array_equal(b1[6:], b2)
    np.testing.assert_array_equal(c1[6:], c2)


def test_sample_field_matches_sample_wave():
    mu = resolve_measure("lattice:25")
    f = mc.sample_field(mu, "TwoPi", 9, 4)
    g = sample_wave(mu, "TwoPi", mc.sample_rng(9, 4))
    np.testing.assert_array_equal(f.coefficients.b, g.coefficients.b)
    np.testing.assert_array_equal(f.coefficients.c, g.coefficients.c)


def test_run_counts_matches_single_sample_counts():
    mu = cilleruelo_measure()
    counts, _, _ = mc.run_counts(mu, ANGULAR, 0.3, 7.0, 40, seed=2)
    for i in (0, 13, 39):
        p = restrict(mc.sample_field(mu, ANGULAR, 2, i), 0.3, 7.0)
        assert counts[i] == count_zeros(p).count


def test_workers_do_not_change_results():
    mu = resolve_measure("lattice:5")
    n = mc.CHUNK + 500
    a = mc.run_counts(mu, "TwoPi", 0.2, 2.0, n, seed=11, workers=1)
    b = mc.run_counts(mu, "TwoPi", 0.2, 2.0, n, seed=11, workers=2)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_config_validation_and_hash():
    cfg = mc.ExperimentConfig("cilleruelo", 0.0, 5.0, 100)
    assert cfg.convention == "Angular"
    assert mc.ExperimentConfig("lattice:5", 0.0, 5.0, 100).convention == "TwoPi"
    assert cfg.config_hash() == mc.ExperimentConfig("cilleruelo", 0.0, 5.0, 100).config_hash()
    assert cfg.config_hash() != mc.with_seed(cfg, 1).config_hash()
    assert len(cfg.config_hash()) == 16
    for bad in (dict(n_samples=0), dict(L=-1.0), dict(seed=-1), dict(L=())):
        kw = dict(measure="cilleruelo", u=0.0, L=5.0, n_samples=10) | bad
        with pytest.raises(ValidationError):
            mc.ExperimentConfig(**kw)


def test_moments_from_counts_oracle():
    est = mc.moments_from_counts(np.array([0, 1, 2, 2, 0]))
    assert est.mean == pytest.approx(1.0)
    assert est.second_factorial == pytest.approx(4 / 5)
    assert est.variance == pytest.approx(1.0)
    assert est.persistence == pytest.approx(0.4)
    assert est.histogram == {0: 2, 1: 1, 2: 2}


def test_persistence_rule_of_three():
    pe = mc.persistence_estimate(0, 1000)
    assert pe.is_zero and pe.upper_bound == pytest.approx(0.003)
    assert "rule of three" in str(pe)


def test_estimate_cilleruelo_u0():
    cfg = mc.ExperimentConfig("cilleruelo", 0.0, 5.0, 20_000, seed=1)
    est = mc.estimate(cfg)
    d = exact_distribution_u0(5.0)
    assert abs(est.mean - d.mean()) < 4 * est.mean_se
    assert abs(est.second_factorial - d.second_factorial()) < 4 * est.second_factorial_se
    assert abs(est.persistence - d.prob(0)) < 4 * est.persistence_se


def test_sweep_first_zero_matches_direct():
    cfg = mc.ExperimentConfig("cilleruelo", 0.0, (2.0, 5.0, 10.0), 8000, seed=4)
    rows = mc.persistence_sweep(cfg)
    for r in rows:
        direct = mc.estimate(mc.ExperimentConfig("cilleruelo", 0.0, r.L, 8000, seed=4))
        assert r.persistence == direct.persistence
        assert abs(r.persistence - exact_persistence(0.0, r.L)) < 4 * r.se + 1e-12


def test_loglog_slope_synthetic():
    Ls = np.geomspace(2, 50, 12)
    rows = [mc.SweepRow(0.1, L, math.exp(-0.3 * L ** 1.5), 0.0, 10 ** 6) for L in Ls]
    slope, pts = mc.loglog_slope(rows, 1e-4)
    assert slope == pytest.approx(1.5, rel=1e-9)
    tail, tpts = mc.loglog_slope(rows, 1e-4, 0.1)
    assert tail == pytest.approx(1.5, rel=1e-9)
    assert len(tpts) < len(pts)
    assert math.isnan(mc.loglog_slope(rows[:1])[0])


def test_compare_histogram():
    d = exact_distribution_u0(5.0)
    n = 100_000
    hist = {k: int(round(p * n)) for k, p in d.support}
    rep = mc.compare_histogram(hist, d)
    assert rep.tv < 1e-4 and rep.passed
    hist[99] = 10
    assert not mc.compare_histogram(hist, d).passed
    with pytest.raises(UnsupportedDirection):
        mc.exact_distribution_for(0.3, 1.0)


def test_distribution_compare_pi4():
    cfg = mc.ExperimentConfig("cilleruelo", math.pi / 4, 5.0, 10_000, seed=2)
    rep = mc.distribution_compare(cfg)
    assert rep.tv < 0.02 and rep.passed


def test_point_mass_no_atom():
    with pytest.raises(NoAtom):
        mc.point_mass_persistence_check([1105], 0.0, [10.0], 10)


def test_single_config_required():
    cfg = mc.ExperimentConfig("cilleruelo", (0.0, 0.1), 5.0, 10)
    with pytest.raises(ValidationError):
        mc.estimate(cfg)


def test_conditional_persistence_lattice1():
    # lattice:1 at u=0 is the Cilleruelo law in the TwoPi convention: P = 1 - 1/sqrt(2)
    (est,) = mc.conditional_persistence("lattice:1", 0.0, [10.0 / (2 * math.pi)], 4000, seed=1)
    assert abs(est.value - exact_persistence(0.0, 10.0)) < 4 * est.se + 1e-3


def test_conditional_persistence_tilt_agrees():
    a = mc.conditional_persistence("lattice:25", 0.0, [2.0, 5.0], 4000, seed=2)
    b = mc.conditional_persistence("lattice:25", 0.0, [2.0, 5.0], 4000, seed=2, tilt=0.7)
    for x, y in zip(a, b):
        assert abs(x.value - y.value) < 4 * math.hypot(x.se, y.se)
    assert b[1].value <= b[0].value


def test_conditional_persistence_rejects():
    with pytest.raises(NoAtom):
        mc.conditional_persistence("cilleruelo", 0.3, [5.0], 10)
    with pytest.raises(ValidationError):
        mc.conditional_persistence("lattice:1", 0.0, [5.0], 10, tilt=1.5)
    with pytest.raises(ValidationError):
        mc.conditional_persistence("lattice:1", 0.0, [-1.0], 10)
