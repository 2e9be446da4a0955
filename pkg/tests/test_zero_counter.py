import math

import numpy as np
import pytest

from nodal_lab import zero_counter as zc
from nodal_lab.errors import Tie, UnsupportedDirection, ValidationError
from nodal_lab.gaussian_fields import (ANGULAR, TWO_PI_CONVENTION, PlanarField, cilleruelo_field,
                                       restrict, sample_wave)
from nodal_lab.lattice_spectral import spectral_measure_of

BACKENDS = ["python"]
try:
    zc.load_backend("cython")
    BACKENDS.append("cython")
except ImportError:
    pass


def brute_count(process, n=400_001):
    t = np.linspace(0.0, process.L, n)
    v = process(t)
    return int(np.sum(np.signbit(v[1:]) != np.signbit(v[:-1])))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return zc.load_backend(request.param)


def test_sine_zeros_exact(backend):
    # single term: sin(t), zeros at k*pi
    f = PlanarField.from_arrays([0.0], [1.0], [0.0], [1.0], ANGULAR)
    r = zc.count_zeros(restrict(f, 0.0, 10.0), backend=backend)
    assert r.count == 4     # 0 is a zero, then pi, 2pi, 3pi
    np.testing.assert_allclose(r.locations, [0.0, math.pi, 2 * math.pi, 3 * math.pi],
                               atol=1e-9)


def test_shifted_cosine(backend):
    f = PlanarField.from_arrays([0.0], [1.0], [1.0], [0.0], ANGULAR)
    r = zc.count_zeros(restrict(f, 0.0, 20.0), backend=backend)
    expect = [math.pi / 2 + k * math.pi for k in range(6)]
    assert r.count == 6
    np.testing.assert_allclose(r.locations, expect, atol=1e-9)


@pytest.mark.parametrize("m", [5, 25, 65])
def test_matches_dense_grid(m, backend, rng):
    mu = spectral_measure_of(m)
    for _ in range(20):
        p = restrict(sample_wave(mu, TWO_PI_CONVENTION, rng), rng.uniform(0, 6.3), 3.0)
        assert zc.count_zeros(p, backend=backend).count == brute_count(p)


def test_locations_are_roots(rng):
    p = restrict(sample_wave(spectral_measure_of(65), TWO_PI_CONVENTION, rng), 0.3, 4.0)
    r = zc.count_zeros(p)
    assert r.count > 0
    slope = np.max(np.abs(p(r.locations, 1)))
    assert np.max(np.abs(p(r.locations))) <= slope * 1e-9


def test_backends_agree(rng):
    if "cython" not in BACKENDS:
        pytest.skip("compiled backend not built")
    mu = spectral_measure_of(25)
    from nodal_lab.gaussian_fields import pair_atoms
    angles, p = pair_atoms(mu)
    z = rng.standard_normal((2000, angles.size, 2))
    w = 2 * math.pi * np.cos(angles - 0.3)
    beta, gamma = z[..., 0] * np.sqrt(p), z[..., 1] * np.sqrt(p)
    h = zc.default_grid_step(2 * math.pi)
    for stop_first in (False, True):
        a = zc.count_zeros_batch(w, beta, gamma, 5.0, h, stop_first=stop_first,
                                 backend=zc.load_backend("python"))
        b = zc.count_zeros_batch(w, beta, gamma, 5.0, h, stop_first=stop_first,
                                 backend=zc.load_backend("cython"))
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_array_equal(a.suspicious, b.suspicious)
        np.testing.assert_allclose(a.first_zero, b.first_zero, atol=1e-12)


def test_batch_first_zero(rng):
    f = cilleruelo_field(rng)
    p = restrict(f, 0.3, 12.0)
    full = zc.count_zeros(p)
    bc = zc.count_zeros_batch(p.frequencies, p.beta, p.gamma, 12.0,
                              zc.default_grid_step(1.0), stop_first=True)
    if full.count:
        assert bc.first_zero[0] == pytest.approx(full.locations[0], abs=1e-9)
        assert bc.counts[0] == 1
    else:
        assert math.isinf(bc.first_zero[0])


def test_grid_step_validation(rng):
    p = restrict(cilleruelo_field(rng), 0.0, 5.0)
    with pytest.raises(ValidationError):
        zc.count_zeros(p, grid_step=1.0)
    with pytest.raises(ValidationError):
        zc.count_zeros(p, grid_step=-0.1)
    with pytest.raises(ValidationError):
        zc.load_backend("fortran")


def test_tangency_flagged():
    # 1 - cos t touches 0 at t = 2 pi without crossing
    f = PlanarField.from_arrays([0.0, math.pi / 2], [0.5, 0.5],
                                [-math.sqrt(2), math.sqrt(2)], [0.0, 0.0], ANGULAR)
    r = zc.count_zeros(restrict(f, 0.0, 8.0))
    assert r.suspicious


def test_locations_csv(tmp_path):
    path = tmp_path / "z.csv"
    zc.write_locations_csv(path, [(0, [1.0, 2.5]), (3, [])], header_comment="c")
    assert path.read_text().splitlines() == ["# c", "sample_id,t", "0,1.0", "0,2.5"]


# exact laws ----------------------------------------------------------------

@pytest.mark.parametrize("L", [0.5, 2.0, math.pi, 6.0, 2 * math.pi, 9.0, 20.0, 50.0])
def test_u0_distribution_consistent(L):
    d = zc.exact_distribution_u0(L)
    assert sum(p for _, p in d.support) == pytest.approx(1.0, abs=1e-12)
    assert d.mean() == pytest.approx(L / (math.pi * math.sqrt(2)), rel=1e-12)
    assert d.second_factorial() == pytest.approx(zc.exact_second_factorial(0.0, L), abs=1e-12)
    assert d.prob(0) == pytest.approx(zc.exact_persistence(0.0, L), abs=1e-12)


@pytest.mark.parametrize("L", [0.5, 2.0, 5.0, 9.0, 30.0])
def test_pi4_distribution_consistent(L):
    u = math.pi / 4
    d = zc.exact_distribution_u_pi4(L)
    assert d.mean() == pytest.approx(L / (math.pi * math.sqrt(2)), rel=1e-12)
    assert d.second_factorial() == pytest.approx(zc.exact_second_factorial(u, L), abs=1e-12)
    assert d.prob(0) == pytest.approx(zc.exact_persistence(u, L), abs=1e-12)


def test_persistence_limit():
    assert zc.exact_persistence(0.0, 10.0) == pytest.approx(1 - math.sqrt(2) / 2)
    assert zc.exact_persistence(0.0, 1e-9) == pytest.approx(1.0, abs=1e-8)
    assert zc.exact_persistence(1e-10, 1.0) == zc.exact_persistence(0.0, 1.0)
    with pytest.raises(UnsupportedDirection):
        zc.exact_persistence(0.3, 1.0)


def test_crossing_lines_example():
    cl = zc.crossing_lines(3.0, 4.0, 0.0, 0.0)
    assert cl.orientation == "vertical"
    assert cl.alpha1 == pytest.approx(0.927295218, abs=1e-8)
    assert cl.alpha2 == pytest.approx(4.068887872, abs=1e-8)
    with pytest.raises(Tie):
        zc.crossing_lines(1.0, 0.0, 0.0, 1.0)


def test_crossing_lines_signs(rng):
    for _ in range(50):
        f = cilleruelo_field(rng)
        cl = zc.crossing_lines_of(f)
        s = np.linspace(0, 2 * math.pi, 200)
        if cl.orientation == "vertical":
            pos = np.column_stack([np.full_like(s, cl.alpha1), s])
            neg = np.column_stack([np.full_like(s, cl.alpha2), s])
        else:
            pos = np.column_stack([s, np.full_like(s, cl.alpha1)])
            neg = np.column_stack([s, np.full_like(s, cl.alpha2)])
        assert np.all(f(pos) > 0) and np.all(f(neg) < 0)
