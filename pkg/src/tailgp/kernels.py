"""Hot numeric kernels for the power-exponential GP.

Every kernel exists twice: a numba ``@jit`` version (``_nb_*``) and a
plain numpy version (``_np_*``).  The public names dispatch to one or the
other depending on :data:`tailgp._accel.USE_NUMBA`.  All coordinates here
are the model's internal scaled coordinates.
"""
import numpy as np
from scipy.linalg import solve_triangular

from tailgp import _accel
from tailgp._accel import jit, prange

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
_JITTERS = np.array(JITTER_LADDER)
_CHUNK = 2048
# log-distance floor: exp(p * floor + log theta) underflows to ~1e-304
_LOG_FLOOR = -700.0


def pairwise_log_absdiff(X):
    """Return ``log|x_ij - x_kj|`` as a (d, n, n) array (-inf on ties)."""
    X = np.asarray(X, dtype=float)
    diff = np.abs(X.T[:, :, None] - X.T[:, None, :])
    with np.errstate(divide="ignore"):
        return np.log(diff)


# ---------------------------------------------------------------- numpy path


def _np_powdist(diff, theta, p):
    if p == 2.0:
        return theta * diff * diff
    if p == 1.0:
        return theta * diff
    return theta * diff**p


def _np_cross_corr(Xs, X, theta, p):
    s = np.zeros((Xs.shape[0], X.shape[0]))
    for j in range(X.shape[1]):
        diff = np.abs(Xs[:, j, None] - X[None, :, j])
        s += _np_powdist(diff, theta[j], p[j])
    return np.exp(-s)


def _np_log_marginal(logdiff, y, theta, p):
    d, n, _ = logdiff.shape
    s = np.zeros((n, n))
    for j in range(d):
        with np.errstate(under="ignore"):
            s += theta[j] * np.exp(p[j] * logdiff[j])
    R = np.exp(-s)
    for jitter in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(R + jitter * np.eye(n) if jitter else R)
        except np.linalg.LinAlgError:
            continue
        a = solve_triangular(L, np.ones(n), lower=True, check_finite=False)
        b = solve_triangular(L, y, lower=True, check_finite=False)
        aa = a @ a
        ab = a @ b
        Q = b @ b - ab * ab / aa
        if not (Q > 0.0):
            return -np.inf, jitter
        return (-np.log(np.diag(L)).sum() - 0.5 * np.log(aa)
                - 0.5 * (n - 1) * np.log(Q)), jitter
    return -np.inf, np.inf


def _np_mixture_moments(Xs, X, thetas, ps, mus, coefs, Ls, a1s, sig2s, s1s,
                        want_var):
    m = Xs.shape[0]
    n, d = X.shape
    M = thetas.shape[0]
    log_thetas = np.log(thetas)
    mean = np.empty(m)
    var = np.zeros(m)
    for lo in range(0, m, _CHUNK):
        xs = Xs[lo:lo + _CHUNK]
        c = xs.shape[0]
        # log|dx| per dimension, reused by every draw
        LD = np.empty((d, c, n))
        with np.errstate(divide="ignore"):
            for j in range(d):
                np.log(np.abs(xs[:, j, None] - X[None, :, j]), out=LD[j])
        np.maximum(LD, _LOG_FLOOR, out=LD)
        s = np.empty((c, n))
        tmp = np.empty((c, n))
        mbar = np.zeros(c)
        m2 = np.zeros(c)
        vbar = np.zeros(c)
        for k in range(M):
            s[:] = 0.0
            for j in range(d):
                np.multiply(LD[j], ps[k, j], out=tmp)
                tmp += log_thetas[k, j]
                np.exp(tmp, out=tmp)
                s += tmp
            np.negative(s, out=s)
            r = np.exp(s, out=s)
            mk = mus[k] + r @ coefs[k]
            # Welford update across draws
            delta = mk - mbar
            mbar += delta / (k + 1)
            m2 += delta * (mk - mbar)
            if want_var:
                W = solve_triangular(Ls[k], r.T, lower=True, check_finite=False)
                q = np.einsum("ij,ij->j", W, W)
                u = a1s[k] @ W
                v = sig2s[k] * (1.0 - q + (1.0 - u) ** 2 / s1s[k])
                vbar += np.maximum(v, 0.0)
        mean[lo:lo + c] = mbar
        if want_var:
            var[lo:lo + c] = vbar / M + (m2 / (M - 1) if M > 1 else 0.0)
    return mean, var


# ---------------------------------------------------------------- numba path


@jit
def _nb_cholesky(A, L):
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return False
        ljj = np.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / ljj
    return True


@jit
def _nb_forward(L, b, out):
    n = L.shape[0]
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * out[k]
        out[i] = acc / L[i, i]


@jit
def _nb_log_marginal(logdiff, y, theta, p, jitters):
    d, n, _ = logdiff.shape
    R = np.empty((n, n))
    for i in range(n):
        R[i, i] = 1.0
        for k in range(i + 1, n):
            s = 0.0
            for j in range(d):
                ld = logdiff[j, i, k]
                if ld > -np.inf:
                    s += theta[j] * np.exp(p[j] * ld)
            v = np.exp(-s)
            R[i, k] = v
            R[k, i] = v
    L = np.zeros((n, n))
    A = np.empty((n, n))
    ones = np.ones(n)
    a = np.empty(n)
    b = np.empty(n)
    for jitter in jitters:
        for i in range(n):
            for k in range(n):
                A[i, k] = R[i, k]
            A[i, i] += jitter
        if not _nb_cholesky(A, L):
            continue
        _nb_forward(L, ones, a)
        _nb_forward(L, y, b)
        aa = 0.0
        ab = 0.0
        bb = 0.0
        logdet = 0.0
        for i in range(n):
            aa += a[i] * a[i]
            ab += a[i] * b[i]
            bb += b[i] * b[i]
            logdet += np.log(L[i, i])
        Q = bb - ab * ab / aa
        if not (Q > 0.0):
            return -np.inf, jitter
        return -logdet - 0.5 * np.log(aa) - 0.5 * (n - 1) * np.log(Q), jitter
    return -np.inf, np.inf


_LOG2E = 1.4426950408889634
_LN2_HI = 0.6931471803691238
_LN2_LO = 1.9082149292705877e-10
# no nnan/ninf: inputs are clamped, but keep IEEE semantics anyway
_FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}


@jit(fastmath=_FAST)
def _nb_vexp(x, ibuf, out):
    """out[:] = exp(x[:]) for x clamped to [-700, 700], ~1e-14 relative error.

    Cody-Waite reduction plus a degree-12 Taylor polynomial; the 2**k scale
    is built from exponent bits so the loops vectorize without SVML.
    """
    for i in range(x.shape[0]):
        v = min(max(x[i], -700.0), 700.0)
        k = np.floor(v * _LOG2E + 0.5)
        r = v - k * _LN2_HI - k * _LN2_LO
        out[i] = 1.0 + r * (1.0 + r * (0.5 + r * (1.0 / 6 + r * (1.0 / 24 + r * (
            1.0 / 120 + r * (1.0 / 720 + r * (1.0 / 5040 + r * (1.0 / 40320 + r * (
                1.0 / 362880 + r * (1.0 / 3628800 + r * (1.0 / 39916800 + r * (
                    1.0 / 479001600))))))))))))
        ibuf[i] = (np.int64(k) + 1023) << 52
    scale = ibuf.view(np.float64)
    for i in range(x.shape[0]):
        out[i] *= scale[i]


@jit(parallel=True, fastmath=_FAST)
def _nb_mixture_moments(Xs, X, thetas, ps, mus, coefs, Ls, a1s, sig2s, s1s,
                        want_var):
    m = Xs.shape[0]
    n, d = X.shape
    M = thetas.shape[0]
    log_thetas = np.log(thetas)
    mean = np.empty(m)
    var = np.zeros(m)
    for i in prange(m):
        ld = np.empty(d * n)
        for j in range(d):
            for t in range(n):
                diff = abs(Xs[i, j] - X[t, j])
                ld[j * n + t] = np.log(diff) if diff > 0.0 else _LOG_FLOOR
                if ld[j * n + t] < _LOG_FLOOR:
                    ld[j * n + t] = _LOG_FLOOR
        arg = np.empty(d * n)
        e = np.empty(d * n)
        ib = np.empty(d * n, np.int64)
        s = np.empty(n)
        r = np.empty(n)
        ib2 = np.empty(n, np.int64)
        w = np.empty(n)
        mbuf = np.empty(M)
        vsum = 0.0
        for k in range(M):
            for j in range(d):
                pj = ps[k, j]
                lj = log_thetas[k, j]
                for t in range(n):
                    arg[j * n + t] = pj * ld[j * n + t] + lj
            _nb_vexp(arg, ib, e)
            for t in range(n):
                s[t] = 0.0
            for j in range(d):
                for t in range(n):
                    s[t] -= e[j * n + t]
            _nb_vexp(s, ib2, r)
            mk = mus[k]
            for t in range(n):
                mk += r[t] * coefs[k, t]
            mbuf[k] = mk
            if want_var:
                Lk = Ls[k]
                q = 0.0
                u = 0.0
                for t in range(n):
                    acc = r[t]
                    for l in range(t):
                        acc -= Lk[t, l] * w[l]
                    w[t] = acc / Lk[t, t]
                    q += w[t] * w[t]
                    u += a1s[k, t] * w[t]
                v = sig2s[k] * (1.0 - q + (1.0 - u) ** 2 / s1s[k])
                if v > 0.0:
                    vsum += v
        mm = 0.0
        for k in range(M):
            mm += mbuf[k]
        mm /= M
        mean[i] = mm
        if want_var:
            between = 0.0
            if M > 1:
                for k in range(M):
                    between += (mbuf[k] - mm) ** 2
                between /= M - 1
            var[i] = vsum / M + between
    return mean, var


# ------------------------------------------------------------------ dispatch


def cross_corr(Xs, X, theta, p):
    """Correlation matrix between rows of ``Xs`` (m, d) and ``X`` (n, d)."""
    return _np_cross_corr(np.atleast_2d(Xs), np.atleast_2d(X),
                          np.asarray(theta, float), np.asarray(p, float))


def log_marginal(logdiff, y, theta, p, use_numba=None):
    """Log marginal likelihood of the correlation parameters.

    ``mu`` (flat prior) and ``sigma^2`` (Jeffreys prior) are integrated
    out.  Returns ``(loglik, jitter)``; loglik is ``-inf`` when the
    correlation matrix cannot be factorized even at the largest jitter.
    """
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if use_numba:
        return _nb_log_marginal(logdiff, y, theta, p, _JITTERS)
    return _np_log_marginal(logdiff, y, theta, p)


def mixture_moments(Xs, X, draws, want_var=True, use_numba=None):
    """Mixture predictive mean and variance at each row of ``Xs``.

    ``draws`` is a :class:`tailgp.posterior.DrawStack`.  Without
    ``want_var`` the returned variance array is all zeros, which skips the
    O(n^2) triangular solves per point and draw.
    """
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    Xs = np.ascontiguousarray(np.atleast_2d(Xs), dtype=float)
    args = (Xs, np.ascontiguousarray(X, dtype=float), draws.thetas, draws.ps,
            draws.mus, draws.coefs, draws.chols, draws.ones_solved,
            draws.sigma2s, draws.one_r_one, bool(want_var))
    if use_numba:
        return _nb_mixture_moments(*args)
    return _np_mixture_moments(*args)
