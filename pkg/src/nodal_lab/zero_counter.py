"""Zero counting on line segments and exact laws for the Cilleruelo field.

The counting kernel comes in two interchangeable backends: the compiled
``_kernels`` extension and the numpy module ``_kernels_py``.  The compiled
one is used when importable; set ``NODAL_LAB_PURE=1`` to force the numpy one.
"""
from __future__ import annotations

import csv
import importlib
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import Tie, UnsupportedDirection, ValidationError
from .gaussian_fields import LineProcess, PlanarField
from .lattice_spectral import QUARTER_PI, TWO_PI

REFINE_TOL = 1e-10
TANGENCY_REL = 1e-6
POINTS_PER_WAVELENGTH = 40
SQRT2 = math.sqrt(2.0)
DIRECTION_TOL = 1e-9   # u typed in decimal radians still selects the exact laws


def load_backend(name: str | None = None):
    """Return the kernel module ``"cython"`` or ``"python"`` (default: best available)."""
    if name == "python":
        return importlib.import_module("._kernels_py", __package__)
    if name == "cython":
        return importlib.import_module("._kernels", __package__)
    if name is not None:
        raise ValidationError(f"unknown backend {name!r}")
    if os.environ.get("NODAL_LAB_PURE") == "1":
        return load_backend("python")
    try:
        return load_backend("cython")
    except ImportError:
        return load_backend("python")


_backend = load_backend()
BACKEND = "python" if _backend.__name__.endswith("_py") else "cython"


def default_grid_step(omega: float) -> float:
    return (TWO_PI / omega) / POINTS_PER_WAVELENGTH


def _check_step(grid_step: float, wavelength: float) -> float:
    if not grid_step > 0:
        raise ValidationError(f"grid_step must be positive, got {grid_step}")
    if grid_step > wavelength / 10 * (1 + 1e-12):
        raise ValidationError(
            f"grid_step {grid_step:.6g} exceeds a tenth of the wavelength {wavelength:.6g}")
    return float(grid_step)


@dataclass(frozen=True)
class ZeroCountResult:
    count: int
    locations: np.ndarray
    suspicious: bool


def count_zeros(process: LineProcess, grid_step: float | None = None,
                refine_tol: float = REFINE_TOL, *, backend=None) -> ZeroCountResult:
    """Zeros of ``process`` on ``[0, L]`` with their refined locations."""
    kern = backend or _backend
    h = _check_step(grid_step or default_grid_step(process.field.convention.omega),
                    process.wavelength)
    locs, susp = kern.locate(np.ascontiguousarray(process.frequencies),
                             np.ascontiguousarray(process.beta),
                             np.ascontiguousarray(process.gamma),
                             process.L, h, refine_tol, TANGENCY_REL)
    locs = np.sort(locs)
    # an identically zero process has no isolated zeros to count
    susp = bool(susp) or not (np.any(process.beta) or np.any(process.gamma))
    return ZeroCountResult(int(locs.size), locs, susp)


@dataclass(frozen=True)
class BatchCounts:
    counts: np.ndarray
    first_zero: np.ndarray
    suspicious: np.ndarray


def count_zeros_batch(frequencies, beta, gamma, L: float, grid_step: float,
                      refine_tol: float = REFINE_TOL, *, stop_first: bool = False,
                      backend=None) -> BatchCounts:
    """Counts for many processes with common frequencies.

    ``beta`` and ``gamma`` have shape ``(n, J)``.  With ``stop_first`` each
    scan ends at its first zero; ``first_zero`` is ``inf`` where there is none.
    """
    kern = backend or _backend
    w = np.ascontiguousarray(frequencies, dtype=float)
    beta = np.ascontiguousarray(np.atleast_2d(beta), dtype=float)
    gamma = np.ascontiguousarray(np.atleast_2d(gamma), dtype=float)
    if not L > 0:
        raise ValidationError(f"segment length must be positive, got {L}")
    c, f, s = kern.count_batch(w, beta, gamma, float(L), float(grid_step), float(refine_tol),
                               TANGENCY_REL, bool(stop_first))
    s = np.asarray(s, dtype=bool) | ~(beta.any(axis=1) | gamma.any(axis=1))
    return BatchCounts(np.asarray(c, dtype=np.int64), np.asarray(f), s)


def write_locations_csv(path, rows, header_comment: str | None = None) -> None:
    """``rows`` is an iterable of ``(sample_id, locations)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["sample_id", "t"])
        for sid, locs in rows:
            for t in locs:
                w.writerow([int(sid), repr(float(t))])


# ---------------------------------------------------------------------------
# exact laws for the Cilleruelo field, angular convention

@dataclass(frozen=True)
class CountDistribution:
    support: tuple[tuple[int, float], ...]

    def __post_init__(self):
        total = sum(p for _, p in self.support)
        if abs(total - 1.0) > 1e-12 or any(p < 0 for _, p in self.support):
            raise ValidationError(f"not a probability vector: {self.support}")

    @classmethod
    def from_pairs(cls, pairs, drop_below: float = 1e-14) -> "CountDistribution":
        kept = {}
        for k, p in pairs:
            if abs(p) > drop_below:
                kept[int(k)] = kept.get(int(k), 0.0) + float(p)
        return cls(tuple(sorted(kept.items())))

    def pmf(self) -> dict[int, float]:
        return dict(self.support)

    def prob(self, k: int) -> float:
        return self.pmf().get(int(k), 0.0)

    def mean(self) -> float:
        return sum(k * p for k, p in self.support)

    def second_factorial(self) -> float:
        return sum(k * (k - 1) * p for k, p in self.support)

    def variance(self) -> float:
        m = self.mean()
        return sum((k - m) ** 2 * p for k, p in self.support)

    def to_dict(self) -> dict:
        return {"support": [{"k": k, "p": p} for k, p in self.support]}


def _asin_term(L: float) -> float:
    return math.asin(math.cos(0.5 * L) ** 2) / math.pi


def _frac(x: float) -> float:
    return x - math.floor(x)


def exact_distribution_u0(L: float) -> CountDistribution:
    """Law of the zero count of the Cilleruelo field on ``[0, L]`` along ``u = 0``."""
    if not L > 0:
        raise ValidationError(f"L must be positive, got {L}")
    a = _asin_term(L)
    if L <= TWO_PI:
        s = SQRT2 * L / math.pi
        return CountDistribution.from_pairs([
            (0, 0.25 * (3.0 - s) + 0.5 * a),
            (1, 0.5 - a),
            (2, 0.25 * (s - 1.0) + 0.5 * a),
        ])
    n = math.floor(L / TWO_PI)
    r = L / (TWO_PI * SQRT2)
    return CountDistribution.from_pairs([
        (0, 1.0 - SQRT2 / 2),
        (2 * n, -r + (n + 1) / SQRT2 - 0.25 + 0.5 * a),
        (2 * n + 1, 0.5 - a),
        (2 * n + 2, r - n / SQRT2 - 0.25 + 0.5 * a),
    ])


def exact_distribution_u_pi4(L: float) -> CountDistribution:
    """Law of the zero count along the diagonal, where the process is a pure sine."""
    if not L > 0:
        raise ValidationError(f"L must be positive, got {L}")
    x = L / (math.pi * SQRT2)
    n = math.floor(x)
    fr = x - n
    return CountDistribution.from_pairs([(n, 1.0 - fr), (n + 1, fr)])


def _direction_branch(u: float) -> int:
    if abs(u) <= DIRECTION_TOL:
        return 0
    if abs(u - QUARTER_PI) <= DIRECTION_TOL:
        return 1
    raise UnsupportedDirection(f"exact laws are known for u = 0 and u = pi/4 only, got {u}")


def exact_persistence(u: float, L: float) -> float:
    if _direction_branch(u) == 0:
        if L <= TWO_PI:
            return 0.25 * (3.0 - SQRT2 * L / math.pi) + 0.5 * _asin_term(L)
        return 1.0 - SQRT2 / 2
    return max(0.0, 1.0 - L / (math.pi * SQRT2))


def exact_second_factorial(u: float, L: float) -> float:
    if _direction_branch(u) == 0:
        n = math.floor(L / TWO_PI)
        return ((4 * n + 1) * L / (math.pi * SQRT2) - 2 * SQRT2 * n * (n + 1) - 0.5
                + _asin_term(L))
    x = L / (math.pi * SQRT2)
    n = math.floor(x)
    return n * (n - 1 + 2 * _frac(x))


# ---------------------------------------------------------------------------
# lines of constant sign crossing the torus

@dataclass(frozen=True)
class CrossingLines:
    """Lines ``x_i = alpha1`` (field > 0) and ``x_i = alpha2`` (field < 0).

    ``orientation`` is ``"vertical"`` when the lines are ``x1 = const``.
    """

    orientation: str
    alpha1: float
    alpha2: float


def crossing_lines(b1: float, c1: float, b2: float, c2: float) -> CrossingLines:
    """Two parallel lines on which the Cilleruelo field has opposite fixed signs.

    Along ``x1 = alpha`` the field is ``A1 cos(alpha - phi1) + (terms in x2)``
    with ``A1 = hypot(b1, c1)``; when ``A1`` dominates, ``alpha = phi1`` and
    ``phi1 + pi`` force the sign.  The atan2 form covers ``c1 <= 0``.
    """
    a1, a2 = b1 * b1 + c1 * c1, b2 * b2 + c2 * c2
    if a1 == a2:
        raise Tie("equal squared amplitudes")
    if a1 > a2:
        orient, b, c = "vertical", b1, c1
    else:
        orient, b, c = "horizontal", b2, c2
    alpha1 = math.atan2(c, b) % TWO_PI
    alpha2 = (alpha1 + math.pi) % TWO_PI
    return CrossingLines(orient, alpha1, alpha2)


def crossing_lines_of(field: PlanarField) -> CrossingLines:
    """``crossing_lines`` for a two-term angular field with terms at 0 and pi/2."""
    k = field.coefficients
    if len(k) != 2 or not np.allclose(k.angles, [0.0, 0.5 * math.pi], atol=1e-12):
        raise ValidationError("expected a Cilleruelo field (terms at angles 0 and pi/2)")
    return crossing_lines(k.b[0], k.c[0], k.b[1], k.c[1])
