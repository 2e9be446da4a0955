"""Lattice points on circles and atomic spectral measures on the unit circle.

Angles are radians, stored in ``[0, 2*pi)`` and sorted.  Every operation is
a pure function of its arguments; measure objects hold read-only arrays.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (AsymmetricMeasure, InvalidTheta, NotRepresentable,
                     UnsupportedOrder, ValidationError)

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi

WEIGHT_TOL = 1e-12
ANGLE_TOL = 1e-9      # atom matching under the dihedral symmetries
MERGE_TOL = 1e-12     # collisions of projected positions
IMAG_TOL = 1e-12


class LatticePoint(NamedTuple):
    lambda1: int
    lambda2: int

    @property
    def norm2(self) -> int:
        return self.lambda1 * self.lambda1 + self.lambda2 * self.lambda2


@dataclass(frozen=True)
class LatticeCircle:
    m: int
    points: tuple[LatticePoint, ...]

    @property
    def r2(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64).reshape(-1, 2)


def _circle_distance(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % TWO_PI
    return np.minimum(d, TWO_PI - d)


def _canonical_angles(angles):
    a = np.mod(np.asarray(angles, dtype=float), TWO_PI)
    # mod can return exactly 2*pi for tiny negative inputs
    a[a >= TWO_PI - 1e-15] = 0.0
    return a


class SpectralMeasure:
    """Finite atomic probability measure on the unit circle.

    Parameters
    ----------
    angles, weights : array_like
        Atom positions (radians) and nonnegative masses summing to one.
    check_symmetry : bool
        Require invariance under rotation by pi/2 and reflection.  Disable
        only for test measures; the dihedral reduction of directions is then
        unavailable.
    """

    __slots__ = ("angles", "weights", "symmetric")

    def __init__(self, angles, weights, *, check_symmetry: bool = True):
        angles = _canonical_angles(angles)
        weights = np.asarray(weights, dtype=float).copy()
        if angles.ndim != 1 or angles.shape != weights.shape or angles.size == 0:
            raise ValidationError("angles and weights must be nonempty 1-d arrays of equal length")
        if np.any(weights < 0):
            raise ValidationError("atom weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"atom weights sum to {weights.sum()!r}, not 1")
        order = np.argsort(angles, kind="stable")
        angles, weights = angles[order], weights[order]
        gaps = np.diff(np.append(angles, angles[0] + TWO_PI))
        if angles.size > 1 and np.min(gaps) <= ANGLE_TOL:
            raise ValidationError("atom angles must be distinct")
        angles.setflags(write=False)
        weights.setflags(write=False)
        self.angles = angles
        self.weights = weights
        self.symmetric = _has_dihedral_symmetry(angles, weights)
        if check_symmetry and not self.symmetric:
            raise AsymmetricMeasure(
                "measure is not invariant under rotation by pi/2 and reflection")

    def __len__(self):
        return self.angles.size

    def __repr__(self):
        return f"SpectralMeasure(n_atoms={len(self)}, symmetric={self.symmetric})"

    def __eq__(self, other):
        if not isinstance(other, SpectralMeasure) or len(self) != len(other):
            return NotImplemented
        return bool(np.all(_circle_distance(self.angles, other.angles) <= ANGLE_TOL)
                    and np.allclose(self.weights, other.weights, rtol=0, atol=WEIGHT_TOL))

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.angles.tolist(), self.weights.tolist()))

    def directions(self) -> np.ndarray:
        return np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    def find_atom(self, angle: float, tol: float = ANGLE_TOL) -> int | None:
        d = _circle_distance(self.angles, angle)
        i = int(np.argmin(d))
        return i if d[i] <= tol else None

    def to_dict(self) -> dict:
        return {"atoms": [{"angle": a, "weight": w} for a, w in self.atoms]}

    @classmethod
    def from_dict(cls, doc: dict, *, check_symmetry: bool = True) -> "SpectralMeasure":
        try:
            atoms = doc["atoms"]
            angles = [float(a["angle"]) for a in atoms]
            weights = [float(a["weight"]) for a in atoms]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed measure document: {exc}") from exc
        return cls(angles, weights, check_symmetry=check_symmetry)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _has_dihedral_symmetry(angles, weights) -> bool:
    for shift in (lambda a: a + HALF_PI, lambda a: -a):
        target = _canonical_angles(shift(angles))
        d = _circle_distance(target[:, None], angles[None, :])
        j = np.argmin(d, axis=1)
        if np.any(d[np.arange(angles.size), j] > ANGLE_TOL):
            return False
        if np.any(np.abs(weights[j] - weights) > WEIGHT_TOL):
            return False
    return True


@dataclass(frozen=True)
class ProjectedMeasure:
    """Pushforward of a circle measure under ``y -> <y, (cos u, sin u)>``."""

    positions: np.ndarray
    weights: np.ndarray
    u: float = field(default=0.0)

    def __post_init__(self):
        if abs(float(np.sum(self.weights)) - 1.0) > WEIGHT_TOL:
            raise ValidationError("projected weights must sum to 1")

    @property
    def atoms(self):
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        p, w = self.positions, self.weights
        return bool(np.allclose(p, -p[::-1], atol=tol) and np.allclose(w, w[::-1], atol=WEIGHT_TOL))

    def has_atom_at_origin(self) -> bool:
        return bool(np.any((np.abs(self.positions) <= MERGE_TOL) & (self.weights > 0)))

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.positions ** k))


# ---------------------------------------------------------------------------
# lattice enumeration and exact identities

def enumerate_lattice_points(m: int) -> LatticeCircle:
    """All ``(a, b)`` with ``a*a + b*b == m``, ordered by angle in ``[0, 2*pi)``."""
    m = int(m)
    if m < 1:
        raise ValidationError(f"m must be a positive integer, got {m}")
    r = math.isqrt(m)
    pts = set()
    for a in range(-r, r + 1):
        rest = m - a * a
        b = math.isqrt(rest)
        if b * b == rest:
            pts.add((a, b))
            pts.add((a, -b))
    if not pts:
        raise NotRepresentable(f"{m} is not a sum of two squares")
    ordered = sorted(pts, key=lambda p: math.atan2(p[1], p[0]) % TWO_PI)
    return LatticeCircle(m, tuple(LatticePoint(a, b) for a, b in ordered))


def _as_circle(circle_or_m) -> LatticeCircle:
    if isinstance(circle_or_m, LatticeCircle):
        return circle_or_m
    return enumerate_lattice_points(int(circle_or_m))


@dataclass(frozen=True)
class MomentIdentityReport:
    m: int
    r2: int
    sum_l1_4: int
    sum_l2_4: int
    sum_l1_2_l2_2: int
    sum_l1_6: int
    sum_l1_4_l2_2: int
    fourth_order: bool
    sixth_order: bool
    swap_symmetry: bool

    @property
    def ok(self) -> bool:
        return self.fourth_order and self.sixth_order and self.swap_symmetry

    @property
    def failures(self) -> list[str]:
        names = ("fourth_order", "sixth_order", "swap_symmetry")
        return [n for n in names if not getattr(self, n)]


def integer_moment_identities(circle_or_m) -> MomentIdentityReport:
    """Check the integer power-sum identities behind the directional moments.

    With sums over the lattice points,
    ``2*(sum l1^4 + sum l1^2 l2^2) == r2*m^2`` and
    ``2*(sum l1^6 + 3*sum l1^4 l2^2) == r2*m^3``; also ``sum l1^4 == sum l2^4``.
    Python integers, so the checks are exact.
    """
    c = _as_circle(circle_or_m)
    s14 = s24 = s1122 = s16 = s1422 = 0
    for a, b in c.points:
        a2, b2 = a * a, b * b
        s14 += a2 * a2
        s24 += b2 * b2
        s1122 += a2 * b2
        s16 += a2 * a2 * a2
        s1422 += a2 * a2 * b2
    m, r2 = c.m, c.r2
    return MomentIdentityReport(
        m=m, r2=r2, sum_l1_4=s14, sum_l2_4=s24, sum_l1_2_l2_2=s1122,
        sum_l1_6=s16, sum_l1_4_l2_2=s1422,
        fourth_order=2 * (s14 + s1122) == r2 * m ** 2,
        sixth_order=2 * (s16 + 3 * s1422) == r2 * m ** 3,
        swap_symmetry=s14 == s24,
    )


def lattice_nu4(circle_or_m) -> float:
    """Fourth Fourier coefficient of the lattice measure from exact integer sums."""
    rep = integer_moment_identities(circle_or_m)
    num = rep.sum_l1_4 + rep.sum_l2_4 - 6 * rep.sum_l1_2_l2_2
    return num / (rep.r2 * rep.m ** 2)


# ---------------------------------------------------------------------------
# measures

def spectral_measure_of(circle_or_m) -> SpectralMeasure:
    c = _as_circle(circle_or_m)
    pts = c.as_array()
    angles = np.arctan2(pts[:, 1], pts[:, 0])
    return SpectralMeasure(angles, np.full(c.r2, 1.0 / c.r2))


def cilleruelo_measure() -> SpectralMeasure:
    return SpectralMeasure(HALF_PI * np.arange(4), np.full(4, 0.25))


def tilted_measure() -> SpectralMeasure:
    return SpectralMeasure(QUARTER_PI + HALF_PI * np.arange(4), np.full(4, 0.25))


def uniform_measure(n: int) -> SpectralMeasure:
    if n < 4 or n % 4:
        raise ValidationError(f"uniform:<n> needs n a positive multiple of 4, got {n}")
    return SpectralMeasure(TWO_PI * np.arange(n) / n, np.full(n, 1.0 / n))


def sigma_theta(theta: float, n_atoms_per_arc: int) -> SpectralMeasure:
    """Midpoint discretization of the uniform measure on four arcs.

    Arc ``j`` is ``[j*pi/2 - theta, j*pi/2 + theta]``; each carries
    ``n_atoms_per_arc`` equally weighted atoms at the cell midpoints.
    """
    theta = float(theta)
    if not (0.0 < theta <= QUARTER_PI + 1e-15):
        raise InvalidTheta(f"theta must lie in (0, pi/4], got {theta}")
    n = int(n_atoms_per_arc)
    if n < 1:
        raise ValidationError("n_atoms_per_arc must be positive")
    offsets = -theta + (np.arange(n) + 0.5) * (2.0 * theta / n)
    angles = (HALF_PI * np.arange(4)[:, None] + offsets[None, :]).ravel()
    return SpectralMeasure(angles, np.full(angles.size, 1.0 / angles.size))


def fourier_coefficient(mu: SpectralMeasure, k: int) -> float:
    """Real part of ``sum_j w_j exp(i k theta_j)``; the imaginary part must vanish."""
    re = float(np.dot(mu.weights, np.cos(k * mu.angles)))
    im = float(np.dot(mu.weights, np.sin(k * mu.angles)))
    if abs(im) > IMAG_TOL:
        raise AsymmetricMeasure(f"imaginary part {im:.3e} of mode {k} does not vanish")
    return re


# ---------------------------------------------------------------------------
# directions, projections, gaps

def reduce_direction(u: float) -> float:
    """Map ``u`` into ``[0, pi/4]`` using the 8-fold dihedral symmetry."""
    r = float(u) % HALF_PI
    if r > QUARTER_PI:
        r = HALF_PI - r
    return r


def directional_moment(circle_or_m, u: float, k: int, mode: str = "brute") -> float:
    """Average of ``<lambda, (cos u, sin u)>**k`` over the lattice points."""
    c = _as_circle(circle_or_m)
    if k % 2:
        raise UnsupportedOrder("only even orders are meaningful (odd moments vanish)")
    if mode == "brute":
        pts = c.as_array().astype(float)
        proj = pts[:, 0] * math.cos(u) + pts[:, 1] * math.sin(u)
        return float(np.mean(proj ** k))
    if mode != "closed":
        raise ValidationError(f"mode must be 'brute' or 'closed', got {mode!r}")
    m = c.m
    if k == 2:
        return m / 2.0
    x = lattice_nu4(c) * math.cos(4.0 * u)
    if k == 4:
        return m ** 2 / 8.0 * (3.0 + x)
    if k == 6:
        return m ** 3 / 16.0 * (5.0 + 3.0 * x)
    raise UnsupportedOrder(f"closed form available only for k in (2, 4, 6), got {k}")


def project(mu: SpectralMeasure, u: float, *, reduce: bool = True) -> ProjectedMeasure:
    """Project atoms onto the direction ``u``; exact collisions are merged."""
    if reduce:
        if not mu.symmetric:
            raise AsymmetricMeasure("direction reduction needs a symmetric measure; pass reduce=False")
        u = reduce_direction(u)
    pos = np.cos(mu.angles - u)
    order = np.argsort(pos, kind="stable")
    pos, w = pos[order], mu.weights[order]
    merged_p, merged_w = [pos[0]], [w[0]]
    for p, wi in zip(pos[1:], w[1:]):
        if p - merged_p[-1] <= MERGE_TOL:
            merged_w[-1] += wi
        else:
            merged_p.append(p)
            merged_w.append(wi)
    mp, mw = np.array(merged_p), np.array(merged_w)
    mp[np.abs(mp) <= MERGE_TOL] = 0.0
    return ProjectedMeasure(mp, mw, float(u))


def spectral_gap(rho: ProjectedMeasure) -> float:
    """Half-width of the largest symmetric interval around 0 carrying no mass."""
    live = rho.weights > 0
    return float(np.min(np.abs(rho.positions[live])))


def is_cilleruelo_type(mu: SpectralMeasure, eps: float) -> bool:
    if eps <= 0:
        raise ValidationError("eps must be positive")
    return bool(np.all(axis_deviation(mu.angles) <= eps))


def axis_deviation(angles) -> np.ndarray:
    """Angular distance to the nearest multiple of pi/2."""
    a = np.mod(np.asarray(angles, dtype=float), HALF_PI)
    return np.minimum(a, HALF_PI - a)


# ---------------------------------------------------------------------------
# builtin names and files

def resolve_measure(spec: str) -> SpectralMeasure:
    """Resolve a builtin measure name or a path to a JSON measure document.

    Builtins: ``cilleruelo``, ``tilted``, ``uniform:<n>``,
    ``sigma:<theta>:<n>``, ``lattice:<m>``.
    """
    spec = str(spec).strip()
    name, _, rest = spec.partition(":")
    try:
        if spec == "cilleruelo":
            return cilleruelo_measure()
        if spec == "tilted":
            return tilted_measure()
        if name == "uniform" and rest:
            return uniform_measure(int(rest))
        if name == "lattice" and rest:
            return spectral_measure_of(int(rest))
        if name == "sigma" and rest:
            theta, _, n = rest.partition(":")
            return sigma_theta(float(theta), int(n))
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"cannot parse measure spec {spec!r}: {exc}") from exc
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            return SpectralMeasure.from_dict(json.load(fh))
    raise ValidationError(f"unknown measure {spec!r}")
