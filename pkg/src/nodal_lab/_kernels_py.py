"""Pure-Python/numpy twin of the compiled zero-counting kernels.

Same algorithm and return contract as ``_kernels``: grid values are
vectorized over the batch, and only the uncertified same-sign cells (a
small fraction) are searched cell by cell.
"""
import math

import numpy as np

MAX_DEPTH = 60
_CHUNK = 2048


class _Scan:
    __slots__ = ("w", "beta", "gamma", "tol", "b2", "thr", "stop_first", "locate",
                 "count", "first", "suspicious", "locs")

    def __init__(self, w, beta, gamma, tol, thr, stop_first, locate):
        self.w, self.beta, self.gamma = w, beta, gamma
        amp = np.sqrt(beta * beta + gamma * gamma)
        self.b2 = float(np.dot(w * w, amp))
        self.thr = thr * float(amp.sum())
        self.tol = tol
        self.stop_first = stop_first
        self.locate = locate
        self.count = 0
        self.first = math.inf
        self.suspicious = False
        self.locs = []

    def f(self, t):
        ph = self.w * t
        return float(np.dot(self.beta, np.cos(ph)) + np.dot(self.gamma, np.sin(ph)))

    def record(self, t):
        self.count += 1
        self.first = min(self.first, t)
        if self.locate:
            self.locs.append(t)

    def bisect(self, a, b, fa):
        while b - a > self.tol:
            m = 0.5 * (a + b)
            fm = self.f(m)
            if fm == 0.0:
                return m
            if (fm < 0.0) == (fa < 0.0):
                a, fa = m, fm
            else:
                b = m
        return 0.5 * (a + b)

    def crossing(self, a, b, fa):
        t = self.bisect(a, b, fa) if (self.locate or self.count == 0) else a
        self.record(t)

    def same_sign(self, a, b, fa, fb, depth=0):
        h = b - a
        if min(abs(fa), abs(fb)) > self.b2 * h * h * 0.125:
            return
        if h <= self.tol or depth >= MAX_DEPTH:
            self.suspicious = True
            return
        m = 0.5 * (a + b)
        fm = self.f(m)
        if fm == 0.0:
            self.suspicious = True
            self.record(m)
            return
        if (fm < 0.0) != (fa < 0.0):
            self.crossing(a, m, fa)
            if self.stop_first:
                return
            self.crossing(m, b, fm)
            return
        if abs(fm) < self.thr:
            self.suspicious = True
        self.same_sign(a, m, fa, fm, depth + 1)
        if self.stop_first and self.count:
            return
        self.same_sign(m, b, fm, fb, depth + 1)


def _grid(L, grid_step):
    K = max(1, int(math.ceil(L / grid_step - 1e-9)))
    h = L / K
    t = np.arange(K + 1) * h
    t[-1] = L
    return K, h, t


def _walk(s, fk, t, K, interesting):
    """Visit flagged grid points/cells of one sample in increasing order."""
    for k in interesting:
        v = fk[k]
        if v == 0.0:
            s.record(float(t[k]))
            if s.stop_first:
                return
        elif s.thr > 0.0 and abs(v) < s.thr:
            left = k > 0 and fk[k - 1] * v < 0.0
            right = k < K and v * fk[k + 1] < 0.0
            if not (left or right):
                s.suspicious = True
        if k == K or v == 0.0 or fk[k + 1] == 0.0:
            continue
        if (v < 0.0) != (fk[k + 1] < 0.0):
            s.crossing(float(t[k]), float(t[k + 1]), float(v))
        else:
            s.same_sign(float(t[k]), float(t[k + 1]), float(v), float(fk[k + 1]))
        if s.stop_first and s.count:
            return


def _values(w, beta, gamma, t):
    ph = np.outer(w, t)
    return beta @ np.cos(ph) + gamma @ np.sin(ph)


def _bisect_many(w, beta, gamma, a, b, fa, tol):
    """Vectorized twin of ``_Scan.bisect`` over independent rows."""
    a, b, fa = a.copy(), b.copy(), fa.copy()
    hit = np.full(a.shape, np.nan)
    live = np.ones(a.shape, dtype=bool)
    while True:
        live &= (b - a > tol)
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        m = 0.5 * (a[idx] + b[idx])
        ph = m[:, None] * w[None, :]
        fm = np.einsum("ij,ij->i", beta[idx], np.cos(ph)) + np.einsum("ij,ij->i", gamma[idx], np.sin(ph))
        z = fm == 0.0
        hit[idx[z]] = m[z]
        live[idx[z]] = False
        same = ~z & ((fm < 0.0) == (fa[idx] < 0.0))
        a[idx[same]] = m[same]
        fa[idx[same]] = fm[same]
        up = ~z & ~same
        b[idx[up]] = m[up]
    return np.where(np.isnan(hit), 0.5 * (a + b), hit)


def count_batch(w, beta, gamma, L, grid_step, refine_tol, tangency_rel, stop_first=False):
    w = np.asarray(w, dtype=float)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    n = beta.shape[0]
    K, h, t = _grid(L, grid_step)
    counts = np.zeros(n, dtype=np.int64)
    first = np.full(n, np.inf)
    susp = np.zeros(n, dtype=bool)
    amp = np.sqrt(beta * beta + gamma * gamma)
    b2 = amp @ (w * w)
    thr = tangency_rel * amp.sum(axis=1)
    for lo in range(0, n, _CHUNK):
        hi = min(n, lo + _CHUNK)
        F = _values(w, beta[lo:hi], gamma[lo:hi], t)
        a, b = F[:, :-1], F[:, 1:]
        cross = (a * b < 0.0)
        same = (a * b > 0.0) & (np.minimum(np.abs(a), np.abs(b)) <= (b2[lo:hi, None] * h * h * 0.125))
        zero = F == 0.0
        small = (np.abs(F) < thr[lo:hi, None]) & ~zero
        # a sample needs the scalar walk if anything beyond plain crossings
        # happens, or if its first crossing must be located
        flagged = same.any(axis=1) | zero.any(axis=1) | small.any(axis=1)
        plain = cross.sum(axis=1)
        easy = np.flatnonzero(~flagged & (plain > 0))
        if easy.size:
            k = np.argmax(cross[easy], axis=1)
            rows = lo + easy
            first[rows] = _bisect_many(w, beta[rows], gamma[rows], t[k], t[k + 1],
                                       F[easy, k], refine_tol)
            counts[rows] = 1 if stop_first else plain[easy]
        for r in np.flatnonzero(flagged):
            i = lo + r
            s = _Scan(w, beta[i], gamma[i], refine_tol, tangency_rel, stop_first, False)
            pts = np.flatnonzero(cross[r] | same[r] | zero[r, :-1] | small[r, :-1])
            pts = list(pts) + ([K] if (zero[r, K] or small[r, K]) else [])
            _walk(s, F[r], t, K, pts)
            counts[i], first[i], susp[i] = s.count, s.first, s.suspicious
    return counts, first, susp


def locate(w, beta, gamma, L, grid_step, refine_tol, tangency_rel):
    w = np.asarray(w, dtype=float)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    K, h, t = _grid(L, grid_step)
    F = _values(w, beta[None, :], gamma[None, :], t)[0]
    s = _Scan(w, beta, gamma, refine_tol, tangency_rel, False, True)
    _walk(s, F, t, K, range(K + 1))
    return np.array(s.locs, dtype=float), s.suspicious
