import math

import numpy as np
import pytest

from nodal_lab import coupling as cp
from nodal_lab.errors import NotCillerueloType, RegimeViolation, ValidationError
from nodal_lab.gaussian_fields import ANGULAR, PlanarField, cilleruelo_field, cilleruelo_type_field


def test_couple_is_identity_on_cilleruelo(rng):
    f = cilleruelo_field(rng)
    pair = cp.couple(f, 0.01)
    x = rng.uniform(-20, 20, (200, 2))
    np.testing.assert_allclose(pair.f(x), f(x), atol=1e-13)
    rep = cp.difference_sup_norm(pair, 5.0)
    assert rep.sup_norm == 0.0 or rep.sup_norm < 1e-12


def test_coupled_field_is_cilleruelo(rng):
    g = cilleruelo_type_field([0.02, -0.04, 0.01], rng, eps=0.05)
    pair = cp.couple(g, 0.05)
    k = pair.f.coefficients
    assert k.angles.tolist() == [0.0, math.pi / 2]
    assert k.p.tolist() == pytest.approx([0.5, 0.5])


def test_negative_axis_flips_sine(rng):
    d = 1e-7
    g = PlanarField.from_arrays([math.pi - d, math.pi / 2], [0.5, 0.5], [0.7, -1.2],
                                [1.1, 0.4], ANGULAR)
    pair = cp.couple(g, 1e-6)
    x = rng.uniform(-5, 5, (100, 2))
    assert np.max(np.abs(pair.difference(x))) < 1e-5


def test_difference_basis_matches_direct(rng):
    g = cilleruelo_type_field([0.03, -0.02], rng)
    pair = cp.couple(g, 0.05)
    k = g.coefficients
    pts = cp.disk_points(4.0, 0.5)
    basis = cp.difference_basis(k.angles, k.p, pair.groups, pair.signs, 1.0, pts)
    via = np.concatenate([k.b, k.c]) @ basis
    np.testing.assert_allclose(via, pair.difference(pts), atol=1e-12)


def test_lipschitz_bound_holds(rng):
    for _ in range(30):
        g = cilleruelo_type_field(rng.uniform(-0.05, 0.05, 2), rng)
        pair = cp.couple(g, 0.05)
        rep = cp.difference_sup_norm(pair, 10.0, 0.1)
        assert rep.sup_norm <= rep.lipschitz * (1 + 1e-9)


def test_kernel_gap(rng):
    g = cilleruelo_type_field([0.05, -0.03], rng)
    pair = cp.couple(g, 0.05)
    rep = cp.kernel_gap_check(pair, 20.0, 2000, seed=1)
    assert rep.failures == 0 and rep.within_2epsR


def test_couple_rejects(rng):
    g = cilleruelo_type_field([0.2], rng)
    with pytest.raises(NotCillerueloType):
        cp.couple(g, 0.05)
    with pytest.raises(ValidationError):
        cp.couple(g, -1.0)
    g = PlanarField.from_arrays([0.0], [1.0], [1.0], [0.0])
    with pytest.raises(NotCillerueloType):
        cp.couple(g, 0.1)


def test_disk_points():
    pts = cp.disk_points(3.0, 0.1)
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 3.0 + 1e-9)
    assert len(pts) == pytest.approx(math.pi * 9 / 0.01, rel=0.02)


def test_tail_experiment_small():
    rep = cp.coupling_tail_experiment(0.05, 2, [5.0, 10.0], 200, seed=1)
    assert all(r.lipschitz_failures == 0 for r in rep.rows)
    assert rep.rows[1].mean_sup > rep.rows[0].mean_sup
    with pytest.raises(ValidationError):
        cp.coupling_tail_experiment(0.05, 2, [2.0], 10)


def test_marginals():
    rep = cp.coupled_marginals(0.05, 3, 5000, seed=2)
    assert rep.variances_ok and rep.normality_ok


def test_transfer_eps0_is_cilleruelo():
    rep = cp.persistence_transfer_experiment(0.0, 0.0, 10.0, 2000, seed=3)
    assert rep.persistence_g == rep.persistence_f
    assert rep.implication_failures == 0 and rep.inequality_holds
    assert rep.exceed["freq"] == 0.0


def test_transfer_regime():
    with pytest.raises(RegimeViolation):
        cp.persistence_transfer_experiment(0.01, 0.1, 10.0, 10)


def test_pair_grid_csv(tmp_path, rng):
    pair = cp.couple(cilleruelo_type_field([0.01], rng), 0.05)
    path = tmp_path / "p.csv"
    xs = np.linspace(0, 1, 3)
    cp.write_pair_grid_csv(path, pair, xs, xs)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,g,f" and len(lines) == 10
