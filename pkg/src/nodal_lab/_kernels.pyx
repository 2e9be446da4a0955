# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled zero-counting kernels for line processes.

A line process is ``f(t) = sum_j beta_j cos(w_j t) + gamma_j sin(w_j t)``.
Same-sign grid cells are certified zero-free when
``min(|f(a)|, |f(b)|) > B2 * h**2 / 8`` with ``B2`` a bound on ``|f''|``;
uncertified cells are bisected until they certify, show a sign change, or
shrink below ``refine_tol`` (reported as suspicious).  Mirrors
``_kernels_py`` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, ceil, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    RESYNC = 16
    MAX_DEPTH = 60


cdef inline double _f(const double[:] w, const double* beta, const double* gamma,
                      Py_ssize_t J, double t) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t j
    for j in range(J):
        s += beta[j] * cos(w[j] * t) + gamma[j] * sin(w[j] * t)
    return s


cdef double _bisect(const double[:] w, const double* beta, const double* gamma,
                    Py_ssize_t J, double a, double b, double fa, double tol) noexcept nogil:
    cdef double m, fm
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = _f(w, beta, gamma, J, m)
        if fm == 0.0:
            return m
        if (fm < 0.0) == (fa < 0.0):
            a = m
            fa = fm
        else:
            b = m
    return 0.5 * (a + b)


cdef struct Scan:
    Py_ssize_t count
    double first
    int suspicious
    int stop_first
    int locate
    double tol
    double b2
    double thr
    double* locs
    Py_ssize_t nlocs
    Py_ssize_t caplocs


cdef inline void _record(Scan* s, double t) noexcept nogil:
    s.count += 1
    if t < s.first:
        s.first = t
    if s.locate and s.nlocs < s.caplocs:
        s.locs[s.nlocs] = t
        s.nlocs += 1


cdef void _crossing(Scan* s, const double[:] w, const double* beta, const double* gamma,
                    Py_ssize_t J, double a, double b, double fa) noexcept nogil:
    cdef double t
    if s.locate or s.count == 0:
        t = _bisect(w, beta, gamma, J, a, b, fa, s.tol)
    else:
        t = a
    _record(s, t)


cdef void _same_sign(Scan* s, const double[:] w, const double* beta, const double* gamma,
                     Py_ssize_t J, double a, double b, double fa, double fb, int depth) noexcept nogil:
    """Search a same-sign interval for hidden pairs of zeros."""
    cdef double h = b - a
    cdef double lo = fabs(fa) if fabs(fa) < fabs(fb) else fabs(fb)
    cdef double m, fm
    if lo > s.b2 * h * h * 0.125:
        return
    if h <= s.tol or depth >= MAX_DEPTH:
        s.suspicious = 1
        return
    m = 0.5 * (a + b)
    fm = _f(w, beta, gamma, J, m)
    if fm == 0.0:
        s.suspicious = 1
        _record(s, m)
        return
    if (fm < 0.0) != (fa < 0.0):
        _crossing(s, w, beta, gamma, J, a, m, fa)
        if s.stop_first:
            return
        _crossing(s, w, beta, gamma, J, m, b, fm)
        return
    if fabs(fm) < s.thr:
        s.suspicious = 1
    _same_sign(s, w, beta, gamma, J, a, m, fa, fm, depth + 1)
    if s.stop_first and s.count:
        return
    _same_sign(s, w, beta, gamma, J, m, b, fm, fb, depth + 1)


cdef void _scan(Scan* s, const double[:] w, const double* beta, const double* gamma,
                Py_ssize_t J, double L, Py_ssize_t K, double* f, double* cw, double* sw,
                double* cr, double* sr) noexcept nogil:
    cdef double h = L / K
    cdef Py_ssize_t k, j
    cdef double amp = 0.0, b2 = 0.0, c, sn, v, t
    for j in range(J):
        v = sqrt(beta[j] * beta[j] + gamma[j] * gamma[j])
        amp += v
        b2 += w[j] * w[j] * v
        cr[j] = cos(w[j] * h)
        sr[j] = sin(w[j] * h)
    s.b2 = b2
    s.thr = s.thr * amp
    # grid values by angle-addition recurrence, resynchronised periodically
    for k in range(K + 1):
        t = L if k == K else k * h
        if k % RESYNC == 0:
            for j in range(J):
                cw[j] = cos(w[j] * t)
                sw[j] = sin(w[j] * t)
        elif k == K:
            for j in range(J):
                cw[j] = cos(w[j] * L)
                sw[j] = sin(w[j] * L)
        v = 0.0
        for j in range(J):
            v += beta[j] * cw[j] + gamma[j] * sw[j]
            c = cw[j] * cr[j] - sw[j] * sr[j]
            sn = sw[j] * cr[j] + cw[j] * sr[j]
            cw[j] = c
            sw[j] = sn
        f[k] = v
    for k in range(K + 1):
        if f[k] == 0.0:
            _record(s, L if k == K else k * h)
            if s.stop_first:
                return
        elif s.thr > 0.0 and fabs(f[k]) < s.thr:
            if not ((k > 0 and f[k - 1] * f[k] < 0.0) or (k < K and f[k] * f[k + 1] < 0.0)):
                s.suspicious = 1
        if k == K:
            break
        if f[k] == 0.0 or f[k + 1] == 0.0:
            continue
        if (f[k] < 0.0) != (f[k + 1] < 0.0):
            _crossing(s, w, beta, gamma, J, k * h, (L if k + 1 == K else (k + 1) * h), f[k])
        else:
            _same_sign(s, w, beta, gamma, J, k * h, (L if k + 1 == K else (k + 1) * h),
                       f[k], f[k + 1], 0)
        if s.stop_first and s.count:
            return


def count_batch(double[:] w, double[:, :] beta, double[:, :] gamma, double L,
                double grid_step, double refine_tol, double tangency_rel, bint stop_first=False):
    """Zero counts of many processes sharing frequencies ``w``.

    Returns ``(counts, first_zero, suspicious)``.  ``first_zero`` is refined
    to ``refine_tol`` (``inf`` when there is no zero).  With ``stop_first``
    the scan ends at the first zero, so counts are only 0 or positive.
    """
    cdef Py_ssize_t n = beta.shape[0], J = beta.shape[1], i
    cdef Py_ssize_t K = <Py_ssize_t> ceil(L / grid_step - 1e-9)
    if K < 1:
        K = 1
    counts = np.zeros(n, dtype=np.int64)
    first = np.full(n, np.inf)
    susp = np.zeros(n, dtype=np.uint8)
    cdef long long[:] cv = counts
    cdef double[:] fv = first
    cdef unsigned char[:] sv = susp
    cdef double[:, ::1] bc = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[:, ::1] gc = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef double* f = <double*> malloc((K + 1) * sizeof(double))
    cdef double* buf = <double*> malloc(4 * (J + 1) * sizeof(double))
    cdef Scan s
    if f == NULL or buf == NULL:
        free(f)
        free(buf)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                s.count = 0
                s.first = INFINITY
                s.suspicious = 0
                s.stop_first = stop_first
                s.locate = 0
                s.tol = refine_tol
                s.thr = tangency_rel
                s.locs = NULL
                s.nlocs = 0
                s.caplocs = 0
                _scan(&s, w, &bc[i, 0], &gc[i, 0], J, L, K, f,
                      buf, buf + (J + 1), buf + 2 * (J + 1), buf + 3 * (J + 1))
                cv[i] = s.count
                fv[i] = s.first
                sv[i] = s.suspicious
    finally:
        free(f)
        free(buf)
    return counts, first, susp.astype(bool)


def locate(double[:] w, double[:] beta, double[:] gamma, double L, double grid_step,
           double refine_tol, double tangency_rel):
    """Refined zero locations of one process; returns ``(locations, suspicious)``."""
    cdef Py_ssize_t J = beta.shape[0]
    cdef Py_ssize_t K = <Py_ssize_t> ceil(L / grid_step - 1e-9)
    if K < 1:
        K = 1
    cdef double[::1] bc = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[::1] gc = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef Py_ssize_t cap = 4 * (K + 1) + 64
    cdef double* f = <double*> malloc((K + 1) * sizeof(double))
    cdef double* buf = <double*> malloc(4 * (J + 1) * sizeof(double))
    cdef double* locs = <double*> malloc(cap * sizeof(double))
    cdef Scan s
    if f == NULL or buf == NULL or locs == NULL:
        free(f)
        free(buf)
        free(locs)
        raise MemoryError()
    try:
        s.count = 0
        s.first = INFINITY
        s.suspicious = 0
        s.stop_first = 0
        s.locate = 1
        s.tol = refine_tol
        s.thr = tangency_rel
        s.locs = locs
        s.nlocs = 0
        s.caplocs = cap
        with nogil:
            _scan(&s, w, &bc[0], &gc[0], J, L, K, f,
                  buf, buf + (J + 1), buf + 2 * (J + 1), buf + 3 * (J + 1))
        out = np.array([locs[i] for i in range(s.nlocs)], dtype=float)
    finally:
        free(f)
        free(buf)
        free(locs)
    return out, bool(s.suspicious)
