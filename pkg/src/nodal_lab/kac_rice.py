"""Kac-Rice quantities for stationary Gaussian processes on a line.

Everything is expressed through the covariance ``kappa`` of the process and
``M = -kappa''(0)``.  The second factorial moment of the zero count on
``[0, L]`` is ``2 * int_0^L (L - t) K2(t) dt`` with ``K2`` the two-point
intensity in its explicit arcsin form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import (DegenerateCovariance, NotDegenerate, QuadratureFailure, SingularAtZero,
                     UnsupportedOrder, ValidationError)
from .gaussian_fields import TWO_PI_CONVENTION, CovarianceKernel1D, covariance_kernel
from .lattice_spectral import SpectralMeasure, _as_circle, lattice_nu4

DEGENERACY_TOL = 1e-12
RHO_CLAMP = 1e-8       # rank-deficient conditionals sit exactly at |rho| = 1
SERIES_FRACTION = 1e-3     # series window as a fraction of the shortest wavelength
QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8
_COND_DEGENERATE = 64 * np.finfo(float).eps
SQRT2_PI2 = math.sqrt(2.0) * math.pi ** 2


@dataclass(frozen=True)
class KacRiceContext:
    kernel: CovarianceKernel1D

    @classmethod
    def from_measure(cls, mu: SpectralMeasure, u: float, convention=TWO_PI_CONVENTION,
                     *, reduce: bool = True) -> "KacRiceContext":
        return cls(covariance_kernel(mu, u, convention, reduce=reduce))

    @property
    def M(self) -> float:
        return self.kernel.M

    @property
    def series_coefficient(self) -> float:
        """``c1`` in ``K2(t) ~ c1 * t`` as ``t -> 0``."""
        k, M = self.kernel, self.M
        var_xi2 = float(np.dot(k.weights, (k.frequencies ** 2 - M) ** 2))  # mu4 - M^2
        return var_xi2 / (8.0 * math.pi * math.sqrt(M))

    @property
    def series_cutoff(self) -> float:
        return SERIES_FRACTION * 2.0 * math.pi / self.kernel.max_frequency

    def degenerate_points(self, L: float, n_grid: int | None = None) -> np.ndarray:
        """Grid points in ``(0, L]`` where ``|kappa| >= 1 - 1e-12``."""
        k = self.kernel
        per_wave = L * k.max_frequency / (2.0 * math.pi)
        n = n_grid or int(max(2000, 200 * per_wave))
        t = np.linspace(0.0, L, n + 1)
        gap = np.minimum(k.one_minus(t), 1.0 + k(t))
        hits = list(t[1:][gap[1:] <= DEGENERACY_TOL])
        # polish interior local minima: exact touches fall between grid points
        idx = np.flatnonzero((gap[1:-1] <= gap[:-2]) & (gap[1:-1] <= gap[2:])) + 1
        dt = t[1] - t[0]

        def g(s):
            return min(float(k.one_minus(np.array([s]))[0]), 1.0 + float(k(np.array([s]))[0]))

        for i in idx:
            lo, hi = max(t[i] - dt, 0.5 * dt), min(t[i] + dt, L)
            r = optimize.minimize_scalar(g, bounds=(lo, hi), method="bounded",
                                         options={"xatol": 1e-12 * max(1.0, L)})
            if r.fun <= DEGENERACY_TOL:
                hits.append(float(r.x))
        return np.unique(np.round(np.asarray(hits, dtype=float), 9))

    def is_nondegenerate(self, L: float) -> bool:
        return self.degenerate_points(L).size == 0


def expected_zero_count(ctx: KacRiceContext, L: float) -> float:
    if L < 0:
        raise ValidationError(f"L must be nonnegative, got {L}")
    return math.sqrt(ctx.M) / math.pi * L


def _trig_parts(x: np.ndarray):
    """``1 - cos x``, ``x - sin x`` and ``x^2/2 - (1 - cos x)`` without cancellation."""
    c1 = 2.0 * np.sin(0.5 * x) ** 2
    s3 = x - np.sin(x)
    c2 = 0.5 * x * x - c1
    small = np.abs(x) < 0.5
    if np.any(small):
        y = x[small]
        y2 = y * y
        s3[small] = y * y2 * (1 / 6 - y2 * (1 / 120 - y2 * (1 / 5040 - y2 * (1 / 362880
                    - y2 * (1 / 39916800 - y2 / 6227020800)))))
        c2[small] = y2 * y2 * (1 / 24 - y2 * (1 / 720 - y2 * (1 / 40320 - y2 * (1 / 3628800
                    - y2 * (1 / 479001600 - y2 / 87178291200)))))
    return c1, s3, c2


def _k2(kernel: CovarianceKernel1D, M: float, t: float) -> float:
    # With a = 1 - kappa, kappa' = -(M t - b) and kappa'' = -M + d, the
    # numerator N = M(1 - kappa^2) - kappa'^2 and rho + 1 expand into sums
    # of terms of their own order, so both stay accurate as t -> 0.
    xi, p = kernel.frequencies, kernel.weights
    c1, s3, c2 = _trig_parts(xi * t)
    a = float(np.dot(p, c1))
    b = float(np.dot(p * xi, s3))
    d = float(np.dot(p * xi * xi, c1))
    e = float(np.dot(p * xi * xi, c2))
    g = float(np.dot(p, xi * t * s3 - c2))          # t*b - sum p c2
    var_xi2 = float(np.dot(p, (xi * xi - M) ** 2))  # mu4 - M^2
    one_minus_sq = a * (2.0 - a)
    if a <= DEGENERACY_TOL or 2.0 - a <= DEGENERACY_TOL:
        raise DegenerateCovariance(f"|kappa({t:.6g})| = 1: the pair (p(0), p(t)) is degenerate")
    N = 2.0 * M * g - M * a * a - b * b
    if N <= _COND_DEGENERATE * M * one_minus_sq:
        # derivatives are determined by the values: no pairs of zeros at this lag
        return 0.0
    B = var_xi2 * t * t - 2.0 * e - a * d + 2.0 * M * t * b - b * b
    rho_plus = a * B / N
    rho_minus = 2.0 - rho_plus
    if rho_plus < 0.0 or rho_minus < 0.0:
        if min(rho_plus, rho_minus) < -RHO_CLAMP:
            raise DegenerateCovariance(
                f"derivative correlation {rho_plus - 1.0!r} outside [-1, 1] at t={t:.6g}")
        rho_plus, rho_minus = max(rho_plus, 0.0), max(rho_minus, 0.0)
    rho = rho_plus - 1.0 if rho_plus < 1.0 else 1.0 - rho_minus
    shape = math.sqrt(rho_plus * rho_minus) + rho * math.asin(max(-1.0, min(1.0, rho)))
    return N / (math.pi ** 2 * one_minus_sq ** 1.5) * shape


def k2_two_point(ctx: KacRiceContext, t: float) -> float:
    """Two-point intensity of zeros at lag ``t`` (explicit form, no series)."""
    t = abs(float(t))
    if t == 0.0:
        raise SingularAtZero("K2 is 0/0 at t = 0; use the series coefficient")
    return _k2(ctx.kernel, ctx.M, t)


def k2_series(ctx: KacRiceContext, t: float) -> float:
    return ctx.series_coefficient * abs(float(t))


def k2(ctx: KacRiceContext, t: float) -> float:
    """``K2`` switching to its linear series inside the series window."""
    if abs(t) < ctx.series_cutoff:
        return k2_series(ctx, t)
    return k2_two_point(ctx, t)


def second_factorial_moment_numeric(ctx: KacRiceContext, L: float) -> float:
    """``E[Z(Z-1)]`` on ``[0, L]`` by adaptive quadrature of the Kac-Rice integral.

    Raises
    ------
    DegenerateCovariance
        If ``|kappa| = 1`` somewhere in ``(0, L]``.
    QuadratureFailure
        If the requested tolerances are not met.
    """
    if not L > 0:
        raise ValidationError(f"L must be positive, got {L}")
    bad = ctx.degenerate_points(L)
    if bad.size:
        raise DegenerateCovariance(f"covariance degenerates at t = {bad[0]:.6g} inside (0, {L}]")
    t0 = min(ctx.series_cutoff, L)
    c1 = ctx.series_coefficient
    head = 2.0 * c1 * (L * t0 ** 2 / 2.0 - t0 ** 3 / 3.0)
    if t0 >= L:
        return head
    M = ctx.M
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(lambda t: (L - t) * _k2(ctx.kernel, M, t), t0, L,
                                      epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if err > max(QUAD_EPSABS, QUAD_EPSREL * abs(val)):
        raise QuadratureFailure(f"estimated error {err:.3g} above tolerance")
    return head + 2.0 * val


# ---------------------------------------------------------------------------
# small-L asymptotics for arithmetic waves (2*pi convention)

@dataclass(frozen=True)
class AsymptoticInputs:
    nu4: float
    u: float

    def __post_init__(self):
        if abs(self.nu4) > 1.0 + 1e-12:
            raise ValidationError(f"|nu4| must be at most 1, got {self.nu4}")

    @property
    def x(self) -> float:
        """``nu4 * cos(4u)``."""
        return self.nu4 * math.cos(4.0 * self.u)

    @property
    def is_degenerate(self) -> bool:
        return abs(1.0 + self.x) <= 1e-12


def leading_coefficient(inputs: AsymptoticInputs) -> float:
    return SQRT2_PI2 / 24.0 * (1.0 + inputs.x)


def second_factorial_moment_asymptotic(inputs: AsymptoticInputs, L: float) -> float:
    """Leading small-``L`` term; falls back to the degenerate form when it vanishes."""
    if inputs.is_degenerate:
        return degenerate_asymptotic(L, inputs)
    return leading_coefficient(inputs) * L ** 3


def degenerate_asymptotic(L: float, inputs: AsymptoticInputs | None = None) -> float:
    if inputs is not None and not inputs.is_degenerate:
        raise NotDegenerate(f"nu4*cos(4u) = {inputs.x:.6g}, not -1")
    return math.sqrt(2.0) * math.pi ** 4 / 450.0 * L ** 5


def taylor_kernel(circle, u: float, order: int = 6) -> np.ndarray:
    """Coefficients ``a_0..a_order`` of ``kappa(t) = sum a_k t^k`` near 0.

    Uses the closed directional moments of the lattice circle, 2*pi convention.
    """
    if order not in (2, 4, 6):
        raise UnsupportedOrder(f"order must be 2, 4 or 6, got {order}")
    x = lattice_nu4(_as_circle(circle)) * math.cos(4.0 * u)
    M = 2.0 * math.pi ** 2
    out = np.zeros(order + 1)
    out[0] = 1.0
    out[2] = -M / 2.0
    if order >= 4:
        out[4] = M ** 2 * (3.0 + x) / 48.0
    if order >= 6:
        out[6] = -M ** 3 * (5.0 + 3.0 * x) / 1440.0
    return out


def parity_even_probability(kernel, T: float) -> float:
    """Probability of an even number of zeros on ``[0, T]``."""
    k = float(kernel(T)) if callable(kernel) else float(kernel)
    if abs(k) > 1.0 + 1e-12:
        raise ValidationError(f"|kappa(T)| = {abs(k)} exceeds 1")
    return 0.5 + math.asin(max(-1.0, min(1.0, k))) / math.pi
