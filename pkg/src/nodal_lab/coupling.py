"""Coupling of a Cilleruelo-type field with a Cilleruelo field.

Every term of the Cilleruelo-type field ``G`` is moved to its nearest axis
direction, keeping its Gaussian coefficients; summing the terms that land on
the same axis gives the coupled Cilleruelo field ``F``.  A term near the
negative axis keeps its cosine coefficient and flips its sine coefficient.
The difference ``G - F`` is linear in the coefficients, which the
experiments use to evaluate many samples with one matrix product.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import NotCillerueloType, RegimeViolation, ValidationError
from .gaussian_fields import ANGULAR, TWO_PI_CONVENTION, PlanarField, cilleruelo_type_angles
from .lattice_spectral import HALF_PI, TWO_PI
from .monte_carlo import draw_coefficients, persistence_estimate
from .zero_counter import count_zeros_batch, default_grid_step

AXIS_ANGLES = np.array([0.0, HALF_PI])


def _assign_axes(angles: np.ndarray):
    """Nearest axis ``k`` in 0..3 for each angle, with the angular deviation."""
    k = np.round(np.asarray(angles) / HALF_PI)
    dev = np.abs(np.asarray(angles) - k * HALF_PI)
    return k.astype(int) % 4, dev


def aggregate(b, c, p, groups, signs):
    """Coupled coefficients ``(B_x, C_x, B_y, C_y)`` and axis masses ``(P_x, P_y)``.

    ``b`` and ``c`` may carry leading sample dimensions.
    """
    b, c = np.asarray(b, dtype=float), np.asarray(c, dtype=float)
    sq = np.sqrt(p)
    P = np.array([p[groups == e].sum() for e in (0, 1)])
    out = []
    for e in (0, 1):
        sel = groups == e
        out.append((b[..., sel] * sq[sel]).sum(axis=-1) / math.sqrt(P[e]))
        out.append((c[..., sel] * (sq * signs)[sel]).sum(axis=-1) / math.sqrt(P[e]))
    return np.stack(out, axis=-1), P


@dataclass(frozen=True)
class CoupledPair:
    g: PlanarField
    f: PlanarField
    eps: float
    groups: np.ndarray
    signs: np.ndarray

    def difference(self, x):
        return self.g(x) - self.f(x)


def couple(g: PlanarField, eps: float) -> CoupledPair:
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    k = g.coefficients
    axis, dev = _assign_axes(k.angles)
    if np.any(dev > eps + 1e-12):
        raise NotCillerueloType(f"a term deviates {dev.max():.6g} rad from the axes (eps = {eps})")
    groups = axis % 2
    signs = np.where(axis >= 2, -1.0, 1.0)
    if not (np.any(groups == 0) and np.any(groups == 1)):
        raise NotCillerueloType("terms near both axes are required")
    coef, P = aggregate(k.b, k.c, k.p, groups, signs)
    f = PlanarField.from_arrays(AXIS_ANGLES.copy(), P, coef[[0, 2]], coef[[1, 3]], g.convention)
    return CoupledPair(g, f, float(eps), groups, signs)


# ---------------------------------------------------------------------------
# difference field

def disk_points(R: float, grid_step: float) -> np.ndarray:
    """Square-grid points of step at most ``grid_step`` inside the closed disk ``B_R``."""
    K = int(math.ceil(2.0 * R / grid_step))
    ax = np.linspace(-R, R, K + 1)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    keep = X * X + Y * Y <= R * R * (1 + 1e-12)
    return np.column_stack([X[keep], Y[keep]])


def difference_basis(angles, p, groups, signs, omega: float, pts: np.ndarray) -> np.ndarray:
    """Rows ``(2J, npts)`` with ``G - F = [b, c] @ basis``."""
    angles = np.asarray(angles, dtype=float)
    y = np.column_stack([np.cos(angles), np.sin(angles)])
    e = np.column_stack([np.cos(AXIS_ANGLES[groups]), np.sin(AXIS_ANGLES[groups])])
    sq = np.sqrt(p)[:, None]
    ph_g = omega * (y @ pts.T)
    ph_f = omega * (e @ pts.T)
    rows_b = sq * (np.cos(ph_g) - np.cos(ph_f))
    rows_c = sq * (np.sin(ph_g) - np.asarray(signs)[:, None] * np.sin(ph_f))
    return np.vstack([rows_b, rows_c])


def batched_sup(coef: np.ndarray, basis: np.ndarray, block: int = 16) -> np.ndarray:
    """``max |coef @ basis|`` per row, in blocks to bound memory."""
    out = np.empty(coef.shape[0])
    for s in range(0, coef.shape[0], block):
        out[s:s + block] = np.abs(coef[s:s + block] @ basis).max(axis=1)
    return out


def lipschitz_bound(pair: CoupledPair, R: float) -> float:
    """Deterministic bound on ``sup_{B_R} |G - F|`` for this realization."""
    k = pair.g.coefficients
    return pair.g.convention.omega * R * pair.eps * float(
        np.dot(np.sqrt(k.p), np.abs(k.b) + np.abs(k.c)))


@dataclass(frozen=True)
class DifferenceReport:
    R: float
    grid_step: float
    sup_norm: float
    threshold_log: float
    threshold_sq: float
    exceeds_log: bool
    exceeds_sq: bool
    lipschitz: float


def difference_sup_norm(pair: CoupledPair, R: float, grid_step: float = 0.1) -> DifferenceReport:
    if not R > 0:
        raise ValidationError("R must be positive")
    if not 0 < grid_step <= 0.1:
        raise ValidationError("grid_step must lie in (0, 0.1]")
    pts = disk_points(R, grid_step)
    sup = float(np.max(np.abs(pair.g(pts) - pair.f(pts)))) if pair.eps > 0 else 0.0
    t_log = 2.0 * pair.eps * R * math.log(R)
    t_sq = 2.0 * pair.eps * R * R
    return DifferenceReport(R, grid_step, sup, t_log, t_sq, sup >= t_log, sup >= t_sq,
                            lipschitz_bound(pair, R))


def _stationary_kernel(angles, p, omega, h):
    y = np.column_stack([np.cos(angles), np.sin(angles)])
    return np.cos(omega * (h @ y.T)) @ p


def kernel_gap(pair: CoupledPair, x, y) -> np.ndarray:
    """``|K_G(x, y) - K_F(x, y)|`` for stacked points ``x, y`` of shape ``(n, 2)``."""
    h = np.atleast_2d(x) - np.atleast_2d(y)
    kg, kf = pair.g.coefficients, pair.f.coefficients
    w = pair.g.convention.omega
    return np.abs(_stationary_kernel(kg.angles, kg.p, w, h) - _stationary_kernel(kf.angles, kf.p, w, h))


def random_disk_points(rng: np.random.Generator, R: float, n: int) -> np.ndarray:
    r = R * np.sqrt(rng.random(n))
    a = TWO_PI * rng.random(n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


@dataclass(frozen=True)
class KernelGapReport:
    R: float
    n_pairs: int
    max_gap: float
    max_ratio: float      # gap / (2 eps omega max(|x|, |y|))
    failures: int

    @property
    def within_2epsR(self) -> bool:
        return self.failures == 0


def kernel_gap_check(pair: CoupledPair, R: float, n_pairs: int = 10_000, seed: int = 0
                     ) -> KernelGapReport:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    x = random_disk_points(rng, R, n_pairs)
    y = random_disk_points(rng, R, n_pairs)
    gap = kernel_gap(pair, x, y)
    bound = 2.0 * pair.eps * pair.g.convention.omega * np.maximum(np.hypot(*x.T), np.hypot(*y.T))
    ratio = np.divide(gap, bound, out=np.zeros_like(gap), where=bound > 0)
    fails = int(np.sum(gap > bound + 1e-12))
    return KernelGapReport(R, n_pairs, float(gap.max()), float(ratio.max()), fails)


# ---------------------------------------------------------------------------
# experiments

def experiment_angles(eps: float, M: int, seed: int) -> np.ndarray:
    """Angles ``phi_1..phi_M`` uniform on ``[-eps, eps]``, fixed by the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    return eps * (2.0 * rng.random(M) - 1.0)


class _Ensemble:
    """Coefficients of ``n`` coupled samples sharing the angles ``phis``."""

    def __init__(self, phis, n_samples: int, seed: int, omega: float = 1.0):
        self.phis = np.asarray(phis, dtype=float)
        self.angles, self.p = cilleruelo_type_angles(self.phis)
        axis, self.dev = _assign_axes(self.angles)
        self.groups = axis % 2
        self.signs = np.where(axis >= 2, -1.0, 1.0)
        self.omega = omega
        self.b, self.c = draw_coefficients(seed, 0, n_samples, self.angles.size)
        self.agg, self.P = aggregate(self.b, self.c, self.p, self.groups, self.signs)

    @property
    def coef(self) -> np.ndarray:
        return np.hstack([self.b, self.c])

    def sup(self, pts: np.ndarray) -> np.ndarray:
        basis = difference_basis(self.angles, self.p, self.groups, self.signs, self.omega, pts)
        return batched_sup(self.coef, basis)

    def lipschitz(self, R: float, eps: float) -> np.ndarray:
        return self.omega * R * eps * ((np.abs(self.b) + np.abs(self.c)) @ np.sqrt(self.p))

    def pair(self, i: int, eps: float) -> CoupledPair:
        conv = ANGULAR if self.omega == 1.0 else TWO_PI_CONVENTION
        g = PlanarField.from_arrays(self.angles, self.p, self.b[i], self.c[i], conv)
        return couple(g, eps)


def _rate(hits: int, n: int) -> dict:
    pe = persistence_estimate(int(hits), n)
    return {"freq": pe.value, "se": pe.se, "upper": pe.upper_bound}


@dataclass(frozen=True)
class TailRow:
    R: float
    mean_sup: float
    mean_sup_over_epsR: float
    mean_sup_over_epsRlogR: float
    exceed_log: dict
    exceed_sq: dict
    lipschitz_failures: int
    max_sup_over_lipschitz: float


@dataclass(frozen=True)
class TailReport:
    eps: float
    M: int
    n_samples: int
    seed: int
    phis: tuple
    rows: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def coupling_tail_experiment(eps: float, M: int, R_list, n_samples: int, seed: int = 0,
                             grid_step: float = 0.1, phis=None) -> TailReport:
    """Empirical sup-norm tails of ``G - F`` on disks of the given radii."""
    if any(R < 4 for R in R_list):
        raise ValidationError("radii below 4 are outside the experiment's range")
    phis = experiment_angles(eps, M, seed) if phis is None else np.asarray(phis, dtype=float)
    ens = _Ensemble(phis, n_samples, seed)
    rows = []
    for R in R_list:
        sup = ens.sup(disk_points(R, grid_step))
        lip = ens.lipschitz(R, eps)
        t_log, t_sq = 2 * eps * R * math.log(R), 2 * eps * R * R
        rows.append(TailRow(
            R=float(R), mean_sup=float(sup.mean()),
            mean_sup_over_epsR=float(sup.mean() / (eps * R)) if eps > 0 else 0.0,
            mean_sup_over_epsRlogR=float(sup.mean() / (eps * R * math.log(R))) if eps > 0 else 0.0,
            exceed_log=_rate(np.sum(sup >= t_log), n_samples),
            exceed_sq=_rate(np.sum(sup >= t_sq), n_samples),
            lipschitz_failures=int(np.sum(sup > lip * (1 + 1e-9) + 1e-12)),
            max_sup_over_lipschitz=float(np.max(np.divide(sup, lip, out=np.zeros_like(sup),
                                                          where=lip > 0)))))
    return TailReport(float(eps), int(M), int(n_samples), int(seed), tuple(map(float, phis)),
                      tuple(rows))


@dataclass(frozen=True)
class MarginalReport:
    n_samples: int
    variances: tuple
    variance_se: float
    cvm_pvalues: tuple

    @property
    def variances_ok(self) -> bool:
        return all(abs(v - 1.0) <= 3 * self.variance_se for v in self.variances)

    @property
    def normality_ok(self) -> bool:
        return all(pv >= 1e-3 for pv in self.cvm_pvalues)


def coupled_marginals(eps: float, M: int, n_samples: int, seed: int = 0, phis=None
                      ) -> MarginalReport:
    """Variance and normality of the four coupled coefficients over many couplings."""
    phis = experiment_angles(eps, M, seed) if phis is None else phis
    agg = _Ensemble(phis, n_samples, seed).agg
    var = tuple(float(v) for v in agg.var(axis=0, ddof=1))
    pv = tuple(float(stats.cramervonmises(agg[:, j], "norm").pvalue) for j in range(4))
    return MarginalReport(n_samples, var, math.sqrt(2.0 / (n_samples - 1)), pv)


@dataclass(frozen=True)
class TransferReport:
    eps: float
    u: float
    L: float
    M: int
    n_samples: int
    seed: int
    delta: float
    persistence_g: dict
    persistence_f: dict
    tie: dict
    exceed: dict
    low_margin: dict
    implication_failures: int
    inequality_holds: bool
    exact_cilleruelo: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _segment_points(u: float, L: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, L, int(math.ceil(L / step)) + 1)
    return t, np.column_stack([t * math.cos(u), t * math.sin(u)])


def persistence_transfer_experiment(eps: float, u: float, L: float, n_samples: int,
                                    seed: int = 0, M: int = 2, grid_step: float = 0.1,
                                    phis=None) -> TransferReport:
    """Persistence of ``G`` along direction ``u`` against the coupling failure events.

    With ``delta = 2 eps L log L`` the failure events are an amplitude tie
    ``|A_1 - A_2| < sqrt(2) delta``, a sup-norm exceedance
    ``sup_{B_L} |G - F| >= delta`` and, for ``u = 0``, a low margin
    ``Z_F = 0`` with ``min |F| <= delta`` on the segment.  For ``u > 0`` with
    ``L sin u >= 2 pi``, ``Z_G = 0`` forces a tie or an exceedance; for
    ``u = 0``, ``Z_F = 0`` without low margin or exceedance forces ``Z_G = 0``.
    """
    if u != 0 and L * math.sin(u) < TWO_PI:
        raise RegimeViolation(f"L sin(u) = {L * math.sin(u):.4g} < 2 pi")
    if not L > 1:
        raise ValidationError("L must exceed 1")
    phis = experiment_angles(eps, M, seed) if phis is None else np.asarray(phis, dtype=float)
    ens = _Ensemble(phis, n_samples, seed)
    delta = 2.0 * eps * L * math.log(L)

    # zero counts of G and of the coupled F along the segment
    h = default_grid_step(1.0)
    sq = np.sqrt(ens.p)
    zg = count_zeros_batch(np.cos(ens.angles - u), ens.b * sq, ens.c * sq, L, h, stop_first=True)
    sqP = np.sqrt(ens.P)
    fb, fc = ens.agg[:, [0, 2]] * sqP, ens.agg[:, [1, 3]] * sqP
    zf = count_zeros_batch(np.cos(AXIS_ANGLES - u), fb, fc, L, h, stop_first=True)
    g0, f0 = zg.counts == 0, zf.counts == 0

    a1 = np.hypot(ens.agg[:, 0], ens.agg[:, 1])
    a2 = np.hypot(ens.agg[:, 2], ens.agg[:, 3])
    tie = np.abs(a1 - a2) < math.sqrt(2.0) * delta
    t_seg, seg = _segment_points(u, L, 0.01)
    sup = np.maximum(ens.sup(disk_points(L, grid_step)), ens.sup(seg)) if eps > 0 else np.zeros(n_samples)
    exceed = (sup >= delta) & (sup > 0.0)

    n = n_samples
    exact = None
    low = np.zeros(n, dtype=bool)
    if u == 0:
        # min |F| on the segment, lowered by the largest possible dip between grid points
        ph = np.outer(np.cos(AXIS_ANGLES - u), t_seg)
        vals = fb @ np.cos(ph) + fc @ np.sin(ph)
        slope = (np.abs(fb) + np.abs(fc)) @ np.abs(np.cos(AXIS_ANGLES - u))
        margin = np.abs(vals).min(axis=1) - slope * 0.5 * (t_seg[1] - t_seg[0])
        low = f0 & (margin <= delta)
        viol = int(np.sum(f0 & ~low & ~exceed & ~g0))
        lower = (1.0 - math.sqrt(2.0) / 2) - low.mean() - exceed.mean()
        ok = g0.mean() + 3 * math.sqrt(max(g0.mean() * (1 - g0.mean()), 1.0 / n) / n) >= lower
        exact = 1.0 - math.sqrt(2.0) / 2 if L >= TWO_PI else None
    else:
        viol = int(np.sum(g0 & ~tie & ~exceed))
        ok = g0.mean() <= tie.mean() + exceed.mean() + 3 * math.sqrt(
            max(g0.mean() * (1 - g0.mean()), 1.0 / n) / n)
    return TransferReport(
        eps=float(eps), u=float(u), L=float(L), M=int(M), n_samples=n, seed=int(seed),
        delta=delta, persistence_g=_rate(g0.sum(), n), persistence_f=_rate(f0.sum(), n),
        tie=_rate(tie.sum(), n), exceed=_rate(exceed.sum(), n), low_margin=_rate(low.sum(), n),
        implication_failures=viol, inequality_holds=bool(ok), exact_cilleruelo=exact)


def write_pair_grid_csv(path, pair: CoupledPair, xs, ys, header_comment: str | None = None) -> None:
    """Rows ``x, y, g, f`` with ``x`` varying slowest."""
    G, F = pair.g.grid(xs, ys), pair.f.grid(xs, ys)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "g", "f"])
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(G[i, j])), repr(float(F[i, j]))])
