"""Reproducible Monte Carlo estimation of zero-count statistics.

Sample ``i`` of an experiment draws its coefficients from its own Philox
stream keyed by the experiment seed with counter block ``i``, so results do
not depend on how samples are scheduled.  Samples are processed in fixed
chunks; chunks may run in worker processes and are merged by index.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import special, stats

from . import __version__
from .errors import NoAtom, SampleError, UnsupportedDirection, ValidationError
from .gaussian_fields import (FrequencyConvention, PlanarField, convention_from_name, pair_atoms)
from .lattice_spectral import QUARTER_PI, SpectralMeasure, resolve_measure
from .zero_counter import (DIRECTION_TOL, CountDistribution, count_zeros_batch, default_grid_step,
                           exact_distribution_u0, exact_distribution_u_pi4)

CHUNK = 4096


# ---------------------------------------------------------------------------
# random streams

def sample_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def sample_rng(seed: int, index: int, key: np.ndarray | None = None) -> np.random.Generator:
    """Generator of sample ``index``: Philox with the high counter word set to the index."""
    k = sample_key(seed) if key is None else key
    return np.random.Generator(np.random.Philox(key=k, counter=[0, 0, 0, int(index)]))


def draw_coefficients(seed: int, start: int, stop: int, n_terms: int):
    """``(b, c)`` of shape ``(stop - start, n_terms)``, one stream per row."""
    key = sample_key(seed)
    b = np.empty((stop - start, n_terms))
    c = np.empty((stop - start, n_terms))
    for r, i in enumerate(range(start, stop)):
        z = sample_rng(seed, i, key).standard_normal((n_terms, 2))
        b[r], c[r] = z[:, 0], z[:, 1]
    return b, c


def sample_field(mu: SpectralMeasure, convention, seed: int, index: int) -> PlanarField:
    """The field used for sample ``index``; equal to ``sample_wave`` on that stream."""
    angles, p = pair_atoms(mu)
    b, c = draw_coefficients(seed, index, index + 1, angles.size)
    return PlanarField.from_arrays(angles, p / p.sum(), b[0], c[0], convention_from_name(convention))


# ---------------------------------------------------------------------------
# configuration

def default_convention(measure: str) -> str:
    return "TwoPi" if str(measure).startswith("lattice:") else "Angular"


@dataclass(frozen=True)
class ExperimentConfig:
    measure: str
    u: float | tuple
    L: float | tuple
    n_samples: int
    seed: int = 0
    convention: str | None = None
    grid_step: float | None = None

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise ValidationError("n_samples must be at least 1")
        for name in ("u", "L"):
            v = getattr(self, name)
            if isinstance(v, (list, tuple)):
                if not v:
                    raise ValidationError(f"{name} sweep list is empty")
                object.__setattr__(self, name, tuple(float(x) for x in v))
            else:
                object.__setattr__(self, name, float(v))
        if any(x <= 0 for x in self.L_values):
            raise ValidationError("L must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "n_samples", int(self.n_samples))
        conv = self.convention or default_convention(self.measure)
        object.__setattr__(self, "convention", convention_from_name(conv).tag)

    @property
    def L_values(self) -> tuple:
        return self.L if isinstance(self.L, tuple) else (self.L,)

    @property
    def u_values(self) -> tuple:
        return self.u if isinstance(self.u, tuple) else (self.u,)

    @property
    def frequency_convention(self) -> FrequencyConvention:
        return convention_from_name(self.convention)

    def resolved_grid_step(self) -> float:
        return self.grid_step or default_grid_step(self.frequency_convention.omega)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("u", "L"):
            if isinstance(d[k], tuple):
                d[k] = list(d[k])
        return d

    def config_hash(self) -> str:
        doc = dict(self.to_dict(), version=__version__)
        raw = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# chunked counting

@dataclass(frozen=True)
class _Job:
    angles: np.ndarray
    p: np.ndarray
    omega: float
    u: float
    L: float
    grid_step: float
    seed: int
    start: int
    stop: int
    stop_first: bool


def _run_chunk(job: _Job):
    b, c = draw_coefficients(job.seed, job.start, job.stop, job.angles.size)
    sq = np.sqrt(job.p)
    w = job.omega * np.cos(job.angles - job.u)
    try:
        res = count_zeros_batch(w, b * sq, c * sq, job.L, job.grid_step, stop_first=job.stop_first)
    except Exception as exc:  # locate the offending sample
        for r in range(job.stop - job.start):
            try:
                count_zeros_batch(w, b[r:r + 1] * sq, c[r:r + 1] * sq, job.L, job.grid_step,
                                  stop_first=job.stop_first)
            except Exception as inner:
                raise SampleError(job.start + r, inner) from inner
        raise SampleError(job.start, exc) from exc
    return res.counts, res.first_zero, res.suspicious


def run_counts(mu: SpectralMeasure, convention, u: float, L: float, n_samples: int, seed: int,
               grid_step: float | None = None, *, stop_first: bool = False, workers: int = 1):
    """Counts, first-zero times and suspicious flags for samples ``0..n-1``."""
    conv = convention_from_name(convention)
    angles, p = pair_atoms(mu)
    p = p / p.sum()
    h = grid_step or default_grid_step(conv.omega)
    jobs = [_Job(angles, p, conv.omega, float(u), float(L), h, int(seed), s,
                 min(s + CHUNK, n_samples), stop_first)
            for s in range(0, n_samples, CHUNK)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    counts = np.concatenate([q[0] for q in parts])
    first = np.concatenate([q[1] for q in parts])
    susp = np.concatenate([q[2] for q in parts])
    return counts, first, susp


# ---------------------------------------------------------------------------
# estimators

@dataclass(frozen=True)
class Persistence:
    value: float
    se: float
    n: int

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0

    @property
    def upper_bound(self) -> float:
        """Rule-of-three 95% upper bound when no persistent sample was seen."""
        return 3.0 / self.n if self.is_zero else self.value + 3.0 * self.se

    def __str__(self) -> str:
        if self.is_zero:
            return f"0 (<= {self.upper_bound:.3g}, rule of three)"
        return f"{self.value:.6g} +- {self.se:.3g}"


def persistence_estimate(hits: int, n: int) -> Persistence:
    p = hits / n
    return Persistence(p, math.sqrt(p * (1.0 - p) / n), n)


@dataclass(frozen=True)
class MomentEstimates:
    mean: float
    mean_se: float
    second_factorial: float
    second_factorial_se: float
    variance: float
    variance_se: float
    persistence: float
    persistence_se: float
    histogram: dict
    n_samples: int
    seed: int
    n_suspicious: int = 0
    config_hash: str = ""
    version: str = field(default=__version__)

    @property
    def persistence_report(self) -> Persistence:
        return Persistence(self.persistence, self.persistence_se, self.n_samples)

    def frequencies(self) -> dict:
        return {k: v / self.n_samples for k, v in self.histogram.items()}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram"] = {str(k): int(v) for k, v in sorted(self.histogram.items())}
        d["persistence_text"] = str(self.persistence_report)
        return d


def moments_from_counts(counts: np.ndarray, seed: int = 0, suspicious=None,
                        config_hash: str = "") -> MomentEstimates:
    z = np.asarray(counts, dtype=float)
    n = z.size
    sd = lambda x: float(np.std(x, ddof=1)) / math.sqrt(n) if n > 1 else float("nan")
    ff = z * (z - 1.0)
    mean = float(z.mean())
    var = float(z.var(ddof=1)) if n > 1 else 0.0
    dev = z - mean
    m4 = float(np.mean(dev ** 4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / n) if n > 1 else float("nan")
    pers = persistence_estimate(int(np.sum(z == 0)), n)
    ks, cs = np.unique(np.asarray(counts, dtype=np.int64), return_counts=True)
    return MomentEstimates(
        mean=mean, mean_se=sd(z), second_factorial=float(ff.mean()), second_factorial_se=sd(ff),
        variance=var, variance_se=var_se, persistence=pers.value, persistence_se=pers.se,
        histogram={int(k): int(c) for k, c in zip(ks, cs)}, n_samples=n, seed=int(seed),
        n_suspicious=int(np.sum(suspicious)) if suspicious is not None else 0,
        config_hash=config_hash)


def _single(config: ExperimentConfig, what: str):
    if len(config.u_values) != 1 or len(config.L_values) != 1:
        raise ValidationError(f"{what} needs a single u and L; use persistence_sweep for sweeps")
    return config.u_values[0], config.L_values[0]


def estimate(config: ExperimentConfig, workers: int = 1) -> MomentEstimates:
    """Moments of the zero count; identical for any ``workers``."""
    u, L = _single(config, "estimate")
    mu = resolve_measure(config.measure)
    counts, _, susp = run_counts(mu, config.convention, u, L, config.n_samples, config.seed,
                                 config.grid_step, workers=workers)
    return moments_from_counts(counts, config.seed, susp, config.config_hash())


@dataclass(frozen=True)
class SweepRow:
    u: float
    L: float
    persistence: float
    se: float
    n: int

    @property
    def is_zero(self) -> bool:
        return self.persistence == 0.0

    @property
    def upper_bound(self) -> float:
        return Persistence(self.persistence, self.se, self.n).upper_bound


def persistence_sweep(config: ExperimentConfig, workers: int = 1) -> list[SweepRow]:
    """Persistence for every (u, L) in the config's sweep lists.

    One scan per ``u`` up to the largest ``L`` with early exit at the first
    zero; persistence on ``[0, L]`` is the fraction whose first zero lies past ``L``.
    """
    mu = resolve_measure(config.measure)
    Ls = config.L_values
    rows = []
    for u in config.u_values:
        _, first, _ = run_counts(mu, config.convention, u, max(Ls), config.n_samples,
                                 config.seed, config.grid_step, stop_first=True, workers=workers)
        for L in Ls:
            pe = persistence_estimate(int(np.sum(first > L)), config.n_samples)
            rows.append(SweepRow(u, L, pe.value, pe.se, pe.n))
    return rows


def loglog_slope(rows: list[SweepRow], min_persistence: float = 1e-4,
                 max_persistence: float = 1.0):
    """Slope of ``log(-log P)`` against ``log L``.

    Only rows with ``min_persistence <= P < max_persistence`` enter the fit.
    Lowering ``max_persistence`` (e.g. to 0.1) keeps the tail, where the
    constant offset in ``-log P`` no longer dominates the slope.
    """
    pts = [(r.L, r.persistence) for r in rows
           if min_persistence <= r.persistence < min(max_persistence, 1.0)]
    if len(pts) < 2:
        return float("nan"), pts
    x = np.log([q[0] for q in pts])
    y = np.log([-math.log(q[1]) for q in pts])
    return float(np.polyfit(x, y, 1)[0]), pts


# ---------------------------------------------------------------------------
# point masses

@dataclass(frozen=True)
class PointMassRow:
    m: int
    r2: int
    u: float
    L: float
    persistence: float
    se: float
    n: int

    @property
    def log_ratio(self) -> float:
        """``-log(P) / r2``; ``inf`` when no persistent sample was seen."""
        return -math.log(self.persistence) / self.r2 if self.persistence > 0 else math.inf


def point_mass_persistence_check(m_list, u: float, L_list, n_samples: int, seed: int = 0,
                                 workers: int = 1, convention: str = "TwoPi",
                                 directions: dict | None = None) -> list[PointMassRow]:
    """Persistence of lattice waves along a direction carrying an atom.

    ``directions`` may map ``m`` to its own atom direction, overriding ``u``.
    """
    rows = []
    for m in m_list:
        spec = f"lattice:{int(m)}"
        mu = resolve_measure(spec)
        um = (directions or {}).get(m, u)
        if mu.find_atom(um) is None:
            raise NoAtom(f"lattice measure of m={m} has no atom at angle {um:.12g}")
        cfg = ExperimentConfig(spec, float(um), tuple(L_list), n_samples, seed, convention)
        for r in persistence_sweep(cfg, workers):
            rows.append(PointMassRow(int(m), len(mu), r.u, r.L, r.persistence, r.se, r.n))
    return rows


@dataclass(frozen=True)
class ConditionalPersistence:
    u: float
    L: float
    log10_value: float
    rel_se: float
    n: int

    @property
    def value(self) -> float:
        return 10.0 ** self.log10_value

    @property
    def se(self) -> float:
        return self.value * self.rel_se


def _polish_extreme(beta, gamma, w, t, v, h, L, sign):
    """Newton steps on ``R' = 0`` from grid extrema; keeps the better of grid and polished."""
    lo, hi = np.maximum(t - h, 0.0), np.minimum(t + h, L)
    s = t.copy()
    for _ in range(4):
        ph = s[:, None] * w[None, :]
        cs, sn = np.cos(ph), np.sin(ph)
        d1 = (gamma * cs - beta * sn) @ w
        d2 = -(beta * cs + gamma * sn) @ (w * w)
        ok = sign * d2 < 0
        step = np.divide(d1, d2, out=np.zeros_like(d1), where=ok & (d2 != 0))
        s = np.clip(s - step, lo, hi)
    ph = s[:, None] * w[None, :]
    vs = np.sum(beta * np.cos(ph) + gamma * np.sin(ph), axis=1)
    return np.maximum(v, vs) if sign > 0 else np.minimum(v, vs)


def conditional_persistence(measure: str, u: float, L_list, n_samples: int, seed: int = 0,
                            convention: str | None = None, points_per_wavelength: int = 80,
                            chunk: int = 512, tilt: float = 1.0) -> list[ConditionalPersistence]:
    """Persistence along a direction whose projection has an atom at 0.

    The process is ``s * b0 + R(t)`` with ``b0`` standard normal and
    independent of ``R``, so ``P(Z = 0) = E[Phi(min R / s) + Phi(-max R / s)]``.
    Averaging this conditional probability over draws of ``R`` is unbiased and
    resolves probabilities far below ``1 / n_samples``.  Uses the same
    coefficient streams as ``run_counts``; ``b0`` itself is never used.

    With ``tilt < 1`` the coefficients of ``R`` are drawn with standard
    deviation ``tilt`` and reweighted by the likelihood ratio (importance
    sampling toward small ``R``, where persistence concentrates).
    """
    if not 0 < tilt <= 1:
        raise ValidationError("tilt must lie in (0, 1]")
    conv = convention_from_name(convention or default_convention(measure))
    angles, p = pair_atoms(resolve_measure(measure))
    p = p / p.sum()
    w = conv.omega * np.cos(angles - u)
    zero = np.abs(w) <= 1e-12 * conv.omega
    if not np.any(zero):
        raise NoAtom(f"projection of {measure} along u = {u:.12g} has no atom at 0")
    j0 = int(np.flatnonzero(zero)[0])
    rest = np.arange(angles.size) != j0
    s0, wr, sq = math.sqrt(p[j0]), w[rest], np.sqrt(p[rest])
    Ls = sorted(float(L) for L in L_list)
    if Ls[0] <= 0:
        raise ValidationError("L must be positive")
    h = conv.wavelength / points_per_wavelength
    t = np.union1d(np.linspace(0.0, Ls[-1], int(math.ceil(Ls[-1] / h)) + 1), Ls)
    ends = np.searchsorted(t, Ls, side="right")
    C, S = np.cos(np.outer(wr, t)), np.sin(np.outer(wr, t))
    logs = np.empty((len(Ls), n_samples))
    chunk = max(8, min(chunk, int(4e6 // t.size)))     # bound the (chunk, grid) block
    for a in range(0, n_samples, chunk):
        b, c = draw_coefficients(seed, a, min(a + chunk, n_samples), angles.size)
        b, c = b[:, rest], c[:, rest]
        # log N(0,1) / N(0,tilt^2) density ratio at the drawn points tilt * z
        logw = (2 * b.shape[1] * math.log(tilt)
                + 0.5 * (1.0 - tilt * tilt) * np.sum(b * b + c * c, axis=1))
        beta, gamma = tilt * b * sq, tilt * c * sq
        V = beta @ C + gamma @ S
        for i, (L, e) in enumerate(zip(Ls, ends)):
            seg = V[:, :e]
            imax, imin = seg.argmax(axis=1), seg.argmin(axis=1)
            rows = np.arange(seg.shape[0])
            vmax = _polish_extreme(beta, gamma, wr, t[imax], seg[rows, imax], h, L, +1)
            vmin = _polish_extreme(beta, gamma, wr, t[imin], seg[rows, imin], h, L, -1)
            logs[i, a:a + seg.shape[0]] = logw + np.logaddexp(special.log_ndtr(vmin / s0),
                                                              special.log_ndtr(-vmax / s0))
    out = []
    for L, lg in zip(Ls, logs):
        top = lg.max()
        x = np.exp(lg - top)
        mean = float(x.mean())
        rel = float(x.std(ddof=1) / math.sqrt(n_samples) / mean) if n_samples > 1 else math.nan
        out.append(ConditionalPersistence(float(u), L, (top + math.log(mean)) / math.log(10.0),
                                          rel, n_samples))
    return out


# ---------------------------------------------------------------------------
# distribution comparison

@dataclass(frozen=True)
class DistributionReport:
    tv: float
    chi2: float
    dof: int
    p_value: float
    passed: bool
    empirical: dict
    exact: dict
    n_samples: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["empirical"] = {str(k): v for k, v in sorted(self.empirical.items())}
        d["exact"] = {str(k): v for k, v in sorted(self.exact.items())}
        return d


def exact_distribution_for(u: float, L: float) -> CountDistribution:
    if abs(u) <= DIRECTION_TOL:
        return exact_distribution_u0(L)
    if abs(u - QUARTER_PI) <= DIRECTION_TOL:
        return exact_distribution_u_pi4(L)
    raise UnsupportedDirection(f"no exact law for u = {u}")


def compare_histogram(histogram: dict, exact: CountDistribution, alpha: float = 1e-3
                      ) -> DistributionReport:
    """Total variation and pooled chi-square of observed counts against ``exact``."""
    n = int(sum(histogram.values()))
    pmf = exact.pmf()
    keys = sorted(set(pmf) | set(histogram))
    emp = {k: histogram.get(k, 0) / n for k in keys}
    tv = 0.5 * sum(abs(emp[k] - pmf.get(k, 0.0)) for k in keys)
    # pool neighbouring support points until each bin expects >= 5
    bins_o, bins_e, acc_o, acc_e = [], [], 0.0, 0.0
    for k in sorted(pmf):
        acc_o += histogram.get(k, 0)
        acc_e += n * pmf[k]
        if acc_e >= 5.0:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if bins_e:
        bins_o[-1] += acc_o
        bins_e[-1] += acc_e
    outside = sum(v for k, v in histogram.items() if k not in pmf)
    if outside:
        chi2, dof, pval = math.inf, max(len(bins_e) - 1, 1), 0.0
    elif len(bins_e) < 2:
        chi2, dof, pval = 0.0, 0, 1.0
    else:
        o, e = np.array(bins_o), np.array(bins_e)
        e = e * o.sum() / e.sum()
        chi2, pval = (float(v) for v in stats.chisquare(o, e))
        dof = len(bins_e) - 1
    return DistributionReport(tv, chi2, dof, pval, pval >= alpha,
                              {k: histogram.get(k, 0) / n for k in sorted(histogram)},
                              dict(pmf), n)


def distribution_compare(config: ExperimentConfig, exact: CountDistribution | None = None,
                         workers: int = 1, alpha: float = 1e-3) -> DistributionReport:
    u, L = _single(config, "distribution_compare")
    if exact is None:
        exact = exact_distribution_for(u, L)
    est = estimate(config, workers)
    return compare_histogram(est.histogram, exact, alpha)


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(config, seed=seed)
