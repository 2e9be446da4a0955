"""Stationary Gaussian fields given as explicit trigonometric sums.

A field is ``sum_j sqrt(p_j) * (b_j cos(w <y_j, x>) + c_j sin(w <y_j, x>))``
with one term per antipodal pair of atoms, ``p_j`` the mass of the pair and
``b_j, c_j`` independent standard normals.  ``w`` is the frequency
convention: ``2*pi`` for rescaled toral waves, ``1`` for the Cilleruelo
field as usually written.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleOutOfBand, AsymmetricMeasure, ValidationError
from .lattice_spectral import (ANGLE_TOL, TWO_PI, SpectralMeasure, _circle_distance,
                               project)


@dataclass(frozen=True)
class FrequencyConvention:
    tag: str
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError("convention frequency must be positive")

    @property
    def wavelength(self) -> float:
        return TWO_PI / self.omega


TWO_PI_CONVENTION = FrequencyConvention("TwoPi", TWO_PI)
ANGULAR = FrequencyConvention("Angular", 1.0)


def convention_from_name(name) -> FrequencyConvention:
    if isinstance(name, FrequencyConvention):
        return name
    key = str(name).lower().replace("_", "").replace("-", "")
    if key in ("twopi", "2pi"):
        return TWO_PI_CONVENTION
    if key == "angular":
        return ANGULAR
    raise ValidationError(f"unknown frequency convention {name!r} (use TwoPi or Angular)")


@dataclass(frozen=True)
class FieldCoefficients:
    angles: np.ndarray   # direction of each term
    p: np.ndarray        # pair weights, sum to 1
    b: np.ndarray
    c: np.ndarray
    convention: FrequencyConvention

    def __post_init__(self):
        n = self.angles.shape
        if not (self.p.shape == self.b.shape == self.c.shape == n) or len(n) != 1:
            raise ValidationError("coefficient arrays must be 1-d and of equal length")
        if np.any(self.p <= 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise ValidationError("pair weights must be positive and sum to 1")
        for arr in (self.angles, self.p, self.b, self.c):
            arr.setflags(write=False)

    def __len__(self):
        return self.angles.size

    @property
    def directions(self) -> np.ndarray:
        return np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    @property
    def beta(self) -> np.ndarray:
        return np.sqrt(self.p) * self.b

    @property
    def gamma(self) -> np.ndarray:
        return np.sqrt(self.p) * self.c


class PlanarField:
    """A sampled field; immutable, evaluation is pure."""

    __slots__ = ("coefficients",)

    def __init__(self, coefficients: FieldCoefficients):
        self.coefficients = coefficients

    @classmethod
    def from_arrays(cls, angles, p, b, c, convention=ANGULAR) -> "PlanarField":
        arr = [np.array(a, dtype=float, copy=True).reshape(-1) for a in (angles, p, b, c)]
        return cls(FieldCoefficients(*arr, convention=convention_from_name(convention)))

    def __repr__(self):
        k = self.coefficients
        return f"PlanarField(terms={len(k)}, convention={k.convention.tag})"

    @property
    def convention(self) -> FrequencyConvention:
        return self.coefficients.convention

    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        return self.convention.omega * (x @ self.coefficients.directions.T)

    def __call__(self, x):
        return evaluate(self, x)

    def scaled(self, a: float) -> "PlanarField":
        k = self.coefficients
        return PlanarField.from_arrays(k.angles, k.p, a * k.b, a * k.c, k.convention)

    def grid(self, xs, ys) -> np.ndarray:
        """Values on the tensor grid, ``out[i, j] = field(xs[i], ys[j])``.

        Uses the angle-addition split so the cost is one matrix product.
        """
        k = self.coefficients
        w = self.convention.omega
        d = k.directions
        ax = w * np.outer(np.asarray(xs, float), d[:, 0])
        ay = w * np.outer(np.asarray(ys, float), d[:, 1])
        beta, gamma = k.beta, k.gamma
        ca, sa = np.cos(ax), np.sin(ax)
        left = np.hstack([beta * ca + gamma * sa, gamma * ca - beta * sa])
        right = np.hstack([np.cos(ay), np.sin(ay)])
        return left @ right.T

    def to_dict(self) -> dict:
        k = self.coefficients
        return {
            "convention": k.convention.tag,
            "terms": [{"angle": a, "p": p, "b": b, "c": c}
                      for a, p, b, c in zip(k.angles.tolist(), k.p.tolist(),
                                            k.b.tolist(), k.c.tolist())],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PlanarField":
        try:
            terms = doc["terms"]
            cols = [[float(t[key]) for t in terms] for key in ("angle", "p", "b", "c")]
            return cls.from_arrays(*cols, convention=doc["convention"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed field document: {exc}") from exc


def evaluate(field: PlanarField, x) -> np.ndarray | float:
    k = field.coefficients
    ph = field._phases(x)
    out = np.cos(ph) @ k.beta + np.sin(ph) @ k.gamma
    return float(out) if np.ndim(out) == 0 else out


def evaluate_grad(field: PlanarField, x) -> np.ndarray:
    k = field.coefficients
    ph = field._phases(x)
    # d/dx of each term is w * (gamma cos - beta sin) * y_j
    s = field.convention.omega * (np.cos(ph) * k.gamma - np.sin(ph) * k.beta)
    return s @ k.directions


# ---------------------------------------------------------------------------
# sampling

def pair_atoms(mu: SpectralMeasure):
    """Group atoms into antipodal pairs.

    Returns ``(angles, p)``: one representative angle in ``[0, pi)`` per pair
    and the combined mass of the pair, in increasing angle order.
    """
    reps, masses, used = [], [], np.zeros(len(mu), dtype=bool)
    for i, (a, w) in enumerate(zip(mu.angles, mu.weights)):
        if used[i]:
            continue
        j = mu.find_atom(a + math.pi)
        if j is None or j == i:
            raise AsymmetricMeasure(f"atom at angle {a:.12g} has no antipode")
        used[i] = used[j] = True
        rep = a if a < math.pi - ANGLE_TOL else mu.angles[j]
        reps.append(float(rep))
        masses.append(float(w + mu.weights[j]))
    order = np.argsort(reps, kind="stable")
    return np.asarray(reps)[order], np.asarray(masses)[order]


def _draw(rng: np.random.Generator, n_terms: int):
    z = rng.standard_normal((n_terms, 2))
    return z[:, 0].copy(), z[:, 1].copy()


def sample_wave(mu: SpectralMeasure, convention, rng: np.random.Generator) -> PlanarField:
    """Draw one field with spectral measure ``mu``; unit pointwise variance."""
    angles, p = pair_atoms(mu)
    b, c = _draw(rng, angles.size)
    return PlanarField.from_arrays(angles, p / p.sum(), b, c, convention)


def cilleruelo_type_angles(phis) -> tuple[np.ndarray, np.ndarray]:
    phis = np.asarray(phis, dtype=float).reshape(-1)
    angles = np.concatenate([phis, phis + 0.5 * math.pi])
    return angles, np.full(angles.size, 1.0 / angles.size)


def cilleruelo_type_field(phis, rng: np.random.Generator, eps: float | None = None,
                          convention=None) -> PlanarField:
    """Field with ``2M`` terms at angles ``phi_j`` and ``phi_j + pi/2``.

    Each term has pair weight ``1/(2M)`` so the field has unit variance;
    with ``M = 1, phi = 0`` this is the Cilleruelo field.
    """
    phis = np.asarray(phis, dtype=float).reshape(-1)
    if phis.size < 1:
        raise ValidationError("need at least one angle")
    if eps is not None and np.any(np.abs(phis) > eps):
        raise AngleOutOfBand(f"max |phi| = {np.max(np.abs(phis)):.6g} exceeds eps = {eps}")
    angles, p = cilleruelo_type_angles(phis)
    b, c = _draw(rng, angles.size)
    return PlanarField.from_arrays(angles, p, b, c, convention or ANGULAR)


def cilleruelo_field(rng: np.random.Generator, convention=None) -> PlanarField:
    return cilleruelo_type_field([0.0], rng, convention=convention)


# ---------------------------------------------------------------------------
# restriction to lines and covariance kernels

@dataclass(frozen=True)
class CovarianceKernel1D:
    """``kappa(t) = sum_j p_j cos(xi_j t)`` with ``xi_j`` angular frequencies."""

    frequencies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValidationError("kernel weights must sum to 1")

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        xi, p = self.frequencies, self.weights
        coef = p * xi ** order if order else p
        out = np.cos(np.multiply.outer(t, xi) + 0.5 * math.pi * order) @ coef
        return float(out) if out.ndim == 0 else out

    def derivative(self, t, order: int = 1):
        return self(t, order)

    @property
    def M(self) -> float:
        """``-kappa''(0)``, the variance of the derivative process."""
        return float(np.dot(self.weights, self.frequencies ** 2))

    def spectral_moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.frequencies ** k))

    def one_minus(self, t):
        """``1 - kappa(t)`` without cancellation."""
        t = np.asarray(t, dtype=float)
        s = np.sin(0.5 * np.multiply.outer(t, self.frequencies))
        out = 2.0 * (s * s) @ self.weights
        return float(out) if out.ndim == 0 else out

    @property
    def max_frequency(self) -> float:
        return float(np.max(np.abs(self.frequencies)))


@dataclass(frozen=True)
class LineProcess:
    """``t -> field(t * (cos u, sin u))`` on ``[0, L]``."""

    field: PlanarField
    u: float
    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValidationError(f"segment length must be positive, got {self.L}")

    @property
    def frequencies(self) -> np.ndarray:
        k = self.field.coefficients
        return self.field.convention.omega * np.cos(k.angles - self.u)

    @property
    def beta(self) -> np.ndarray:
        return self.field.coefficients.beta

    @property
    def gamma(self) -> np.ndarray:
        return self.field.coefficients.gamma

    @property
    def wavelength(self) -> float:
        return self.field.convention.wavelength

    def __call__(self, t, order: int = 0):
        return self.derivative(t, order)

    def derivative(self, t, order: int = 1):
        t = np.asarray(t, dtype=float)
        w = self.frequencies
        ph = np.multiply.outer(t, w) + 0.5 * math.pi * order
        wn = w ** order
        out = np.cos(ph) @ (wn * self.beta) + np.sin(ph) @ (wn * self.gamma)
        return float(out) if out.ndim == 0 else out

    def kernel(self) -> CovarianceKernel1D:
        return CovarianceKernel1D(self.frequencies, self.field.coefficients.p.copy())


def restrict(field: PlanarField, u: float, L: float) -> LineProcess:
    """Pathwise restriction; ``u`` is used literally (no symmetry reduction)."""
    return LineProcess(field, float(u), float(L))


def covariance_kernel(mu: SpectralMeasure, u: float, convention=TWO_PI_CONVENTION,
                      *, reduce: bool = True) -> CovarianceKernel1D:
    rho = project(mu, u, reduce=reduce)
    w = convention_from_name(convention).omega
    return CovarianceKernel1D(w * rho.positions, rho.weights.copy())


# ---------------------------------------------------------------------------
# export

def grid_axes(window, resolution: int):
    (x0, x1), (y0, y1) = window
    return np.linspace(x0, x1, resolution), np.linspace(y0, y1, resolution)


def write_grid_csv(path, xs, ys, values, header_comment: str | None = None) -> None:
    """Rows ``x, y, value`` with ``x`` varying slowest."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(values[i, j]))])


def field_distance_to_axes(field: PlanarField) -> np.ndarray:
    """Angular distance of each term direction to the nearest axis direction."""
    a = field.coefficients.angles
    targets = 0.5 * math.pi * np.round(a / (0.5 * math.pi))
    return _circle_distance(a, targets)
