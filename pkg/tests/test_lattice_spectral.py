import json
import math

import numpy as np
import pytest

from nodal_lab.errors import (AsymmetricMeasure, InvalidTheta, NotRepresentable, UnsupportedOrder,
                              ValidationError)
from nodal_lab.lattice_spectral import (
    SpectralMeasure, axis_deviation, cilleruelo_measure, directional_moment,
    enumerate_lattice_points, fourier_coefficient, integer_moment_identities, is_cilleruelo_type,
    lattice_nu4, project, reduce_direction, resolve_measure, sigma_theta, spectral_gap,
    spectral_measure_of, tilted_measure, uniform_measure)


def brute_points(m):
    r = math.isqrt(m)
    return {(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1) if a * a + b * b == m}


@pytest.mark.parametrize("m", [1, 2, 5, 25, 65, 325, 1105, 2917, 9997])
def test_enumeration_matches_brute_force(m):
    try:
        c = enumerate_lattice_points(m)
    except NotRepresentable:
        assert not brute_points(m)
        return
    assert set(c.points) == brute_points(m)
    ang = [math.atan2(b, a) % (2 * math.pi) for a, b in c.points]
    assert ang == sorted(ang)


def test_known_r2():
    assert enumerate_lattice_points(1).r2 == 4
    assert enumerate_lattice_points(25).r2 == 12
    assert enumerate_lattice_points(2917).r2 == 8
    assert enumerate_lattice_points(1105).r2 == 32


@pytest.mark.parametrize("m", [3, 7, 21])
def test_not_representable(m):
    with pytest.raises(NotRepresentable):
        enumerate_lattice_points(m)


def test_bad_m():
    with pytest.raises(ValidationError):
        enumerate_lattice_points(0)


def test_identities_exact_small_range():
    for m in range(1, 400):
        if brute_points(m):
            rep = integer_moment_identities(m)
            assert rep.ok, (m, rep.failures)


def test_nu4_values():
    assert lattice_nu4(1) == 1.0
    assert lattice_nu4(2) == -1.0
    # brute Fourier coefficient of the normalized points
    for m in (25, 65, 2917):
        mu = spectral_measure_of(m)
        assert lattice_nu4(m) == pytest.approx(fourier_coefficient(mu, 4), abs=1e-12)
    assert lattice_nu4(2917) == pytest.approx(0.997258396484, abs=1e-12)


def test_fourier_of_builtins():
    assert fourier_coefficient(cilleruelo_measure(), 4) == pytest.approx(1.0)
    assert fourier_coefficient(tilted_measure(), 4) == pytest.approx(-1.0)
    assert fourier_coefficient(uniform_measure(64), 4) == pytest.approx(0.0, abs=1e-14)
    th = 0.2
    exact = math.sin(4 * th) / (4 * th)
    assert fourier_coefficient(sigma_theta(th, 400), 4) == pytest.approx(exact, rel=1e-5)


@pytest.mark.parametrize("k", [2, 4, 6])
def test_closed_moments_match_brute(k, rng):
    for m in (1, 5, 25, 1105, 2917):
        for u in rng.uniform(0, 2 * math.pi, 5):
            b = directional_moment(m, u, k, "brute")
            c = directional_moment(m, u, k, "closed")
            assert c == pytest.approx(b, rel=1e-10)


def test_moment_errors():
    with pytest.raises(UnsupportedOrder):
        directional_moment(5, 0.1, 3)
    with pytest.raises(UnsupportedOrder):
        directional_moment(5, 0.1, 8, "closed")
    with pytest.raises(ValidationError):
        directional_moment(5, 0.1, 2, "other")


def test_reduce_direction():
    for u in (0.1, 0.9, 2.0, -0.3, 7.5):
        r = reduce_direction(u)
        assert 0 <= r <= math.pi / 4 + 1e-15
        assert math.cos(4 * r) == pytest.approx(math.cos(4 * u), abs=1e-12)


def test_projection_cilleruelo():
    rho = project(cilleruelo_measure(), 0.0)
    assert rho.positions.tolist() == pytest.approx([-1.0, 0.0, 1.0])
    assert rho.weights.tolist() == pytest.approx([0.25, 0.5, 0.25])
    assert rho.has_atom_at_origin()
    rho = project(cilleruelo_measure(), math.pi / 4)
    assert len(rho.positions) == 2
    assert spectral_gap(rho) == pytest.approx(1 / math.sqrt(2))
    assert rho.is_symmetric()


def test_sigma_theta_gap():
    rho = project(sigma_theta(0.1, 16), 0.4)
    # the arc around pi/2 comes closest to 0, at sin(u - theta) for the continuum
    gap = spectral_gap(rho)
    assert math.sin(0.3) <= gap <= math.sin(0.3 + 0.2 / 16)
    with pytest.raises(InvalidTheta):
        sigma_theta(1.0, 4)


def test_asymmetric_rejected():
    with pytest.raises(AsymmetricMeasure):
        SpectralMeasure([0.0, 0.3], [0.5, 0.5])


def test_cilleruelo_type():
    mu = sigma_theta(0.05, 4)
    assert is_cilleruelo_type(mu, 0.05 + 1e-12)
    assert not is_cilleruelo_type(mu, 0.01)
    assert axis_deviation([math.pi / 2 + 0.01])[0] == pytest.approx(0.01)


def test_resolve_measure(tmp_path):
    assert resolve_measure("cilleruelo") == cilleruelo_measure()
    assert len(resolve_measure("lattice:25")) == 12
    assert len(resolve_measure("uniform:8")) == 8
    assert len(resolve_measure("sigma:0.2:4")) == 16
    p = tmp_path / "m.json"
    p.write_text(json.dumps(tilted_measure().to_dict()))
    assert resolve_measure(str(p)) == tilted_measure()
    with pytest.raises(ValidationError):
        resolve_measure("bogus")
    with pytest.raises(ValidationError):
        resolve_measure("uniform:x")
    with pytest.raises(ValidationError):
        uniform_measure(6)


def test_weights_sum_to_one():
    for spec in ("lattice:1105", "uniform:64", "sigma:0.2:16", "tilted"):
        assert resolve_measure(spec).weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(resolve_measure(spec).weights > 0)
