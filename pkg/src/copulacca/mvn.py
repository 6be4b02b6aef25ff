"""Standard normal CDFs in one to four dimensions.

The bivariate CDF uses Genz's BVNU scheme (Gauss-Legendre over the
correlation parameter of Plackett's identity). Trivariate and
quadrivariate CDFs condition on one or two coordinates and integrate the
bivariate CDF of the remainder with fixed-order Gauss-Legendre rules, so
every value is deterministic.
"""

import math

import numpy as np
from numba import njit
from scipy.special import ndtr, ndtri

__all__ = [
    "std_normal_cdf",
    "std_normal_quantile",
    "bvn_cdf",
    "mvn_cdf",
    "mvn_cdf_grad",
    "validate_correlation",
    "QUAD_ORDER",
    "QUAD_BOUND",
]

#: Gauss-Legendre order used per integration axis for d = 3, 4.
QUAD_ORDER = 64
#: Integration range is truncated to [-QUAD_BOUND, QUAD_BOUND].
QUAD_BOUND = 8.0
#: Conditional correlation above which the d = 3, 4 rules switch to panels.
SHARP_CORR = 0.95

_SQRT2 = math.sqrt(2.0)
_TWOPI = 2.0 * math.pi
_INV_SQRT_TWOPI = 1.0 / math.sqrt(_TWOPI)
_EIG_FLOOR = 1e-10
_TAIL = 8.5

_GL_X, _GL_W = np.polynomial.legendre.leggauss(QUAD_ORDER)


def _genz_half_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    keep = x < 0
    return np.ascontiguousarray(x[keep]), np.ascontiguousarray(w[keep])


_BX6, _BW6 = _genz_half_rule(6)
_BX12, _BW12 = _genz_half_rule(12)
_BX20, _BW20 = _genz_half_rule(20)


@njit(cache=True, nogil=True)
def _phi(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True, nogil=True)
def _npdf(x):
    return _INV_SQRT_TWOPI * math.exp(-0.5 * x * x)


@njit(cache=True, nogil=True)
def _bvnu(h, k, r):
    # P(X > h, Y > k); h, k finite.
    ar = abs(r)
    if ar < 0.3:
        xs, ws = _BX6, _BW6
    elif ar < 0.75:
        xs, ws = _BX12, _BW12
    else:
        xs, ws = _BX20, _BW20
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(xs.shape[0]):
            sn = math.sin(asr * (xs[i] + 1.0) / 2.0)
            bvn += ws[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            sn = math.sin(asr * (1.0 - xs[i]) / 2.0)
            bvn += ws[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        return bvn * asr / (2.0 * _TWOPI) + _phi(-h) * _phi(-k)
    if r < 0.0:
        k = -k
        hk = -hk
    if ar < 1.0:
        a_s = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a_s)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        bvn = a * math.exp(-(bs / a_s + hk) / 2.0) * (
            1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0
        )
        if hk > -160.0:
            b = math.sqrt(bs)
            bvn -= (
                math.exp(-hk / 2.0)
                * math.sqrt(_TWOPI)
                * _phi(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            )
        a = a / 2.0
        for i in range(xs.shape[0]):
            x2 = (a * (xs[i] + 1.0)) ** 2
            rs = math.sqrt(1.0 - x2)
            bvn += (
                a
                * ws[i]
                * (
                    math.exp(-bs / (2.0 * x2) - hk / (1.0 + rs)) / rs
                    - math.exp(-(bs / x2 + hk) / 2.0) * (1.0 + c * x2 * (1.0 + d * x2))
                )
            )
            x2 = a_s * (1.0 - xs[i]) ** 2 / 4.0
            rs = math.sqrt(1.0 - x2)
            bvn += (
                a
                * ws[i]
                * math.exp(-(bs / x2 + hk) / 2.0)
                * (
                    math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                    - (1.0 + c * x2 * (1.0 + d * x2))
                )
            )
        bvn = -bvn / _TWOPI
    if r > 0.0:
        bvn += _phi(-max(h, k))
    else:
        bvn = -bvn
        if k > h:
            bvn += _phi(k) - _phi(h)
    return bvn


@njit(cache=True, nogil=True)
def _bvn(a, b, r):
    """P(X <= a, Y <= b) for a standard bivariate normal with correlation r."""
    # Beyond +/-_TAIL a marginal is 0 or 1 to within 1e-17.
    if a < -_TAIL or b < -_TAIL:
        return 0.0
    if a > _TAIL:
        return _phi(b)
    if b > _TAIL:
        return _phi(a)
    if r >= 1.0:
        return _phi(min(a, b))
    if r <= -1.0:
        return max(0.0, _phi(a) + _phi(b) - 1.0)
    val = _bvnu(-a, -b, r)
    return min(max(val, 0.0), 1.0)


@njit(cache=True, nogil=True)
def _bvn_pdf(a, b, r):
    om = 1.0 - r * r
    return math.exp(-(a * a - 2.0 * r * a * b + b * b) / (2.0 * om)) / (_TWOPI * math.sqrt(om))


@njit(cache=True, nogil=True)
def _phi3(a, s):
    # Condition on the coordinate least correlated with the other two.
    best = 0
    best_val = 2.0
    for i in range(3):
        m = 0.0
        for j in range(3):
            if j != i:
                m = max(m, abs(s[i, j]))
        if m < best_val:
            best_val = m
            best = i
    i = best
    j = (i + 1) % 3
    k = (i + 2) % 3
    sij = s[i, j]
    sik = s[i, k]
    cj = math.sqrt(max(1.0 - sij * sij, 0.0))
    ck = math.sqrt(max(1.0 - sik * sik, 0.0))
    rho = (s[j, k] - sij * sik) / (cj * ck)
    rho = min(max(rho, -1.0), 1.0)
    upper = min(a[i], QUAD_BOUND)
    if upper <= -QUAD_BOUND:
        return 0.0
    panels = 2 if abs(rho) > SHARP_CORR else 1
    width = (upper + QUAD_BOUND) / panels
    half = width / 2.0
    total = 0.0
    for p in range(panels):
        mid = -QUAD_BOUND + (p + 0.5) * width
        for g in range(_GL_X.shape[0]):
            x = mid + half * _GL_X[g]
            total += _GL_W[g] * _npdf(x) * _bvn((a[j] - sij * x) / cj, (a[k] - sik * x) / ck, rho)
    return min(max(total * half, 0.0), 1.0)


@njit(cache=True, nogil=True)
def _phi4(a, s):
    # Condition on the pair (i, j) that leaves the best-conditioned remainder.
    best_i = 0
    best_j = 1
    best_val = -1.0
    for i in range(4):
        for j in range(i + 1, 4):
            rho = s[i, j]
            det = 1.0 - rho * rho
            if det <= 1e-14:
                continue
            worst = 2.0
            for k in range(4):
                if k == i or k == j:
                    continue
                # conditional variance of k given (i, j)
                ski = s[k, i]
                skj = s[k, j]
                v = 1.0 - (ski * ski - 2.0 * rho * ski * skj + skj * skj) / det
                worst = min(worst, v)
            if worst > best_val:
                best_val = worst
                best_i = i
                best_j = j
    i = best_i
    j = best_j
    rest = np.empty(2, dtype=np.int64)
    n = 0
    for k in range(4):
        if k != i and k != j:
            rest[n] = k
            n += 1
    k = rest[0]
    l = rest[1]
    rho = s[i, j]
    det = 1.0 - rho * rho
    c = math.sqrt(det)
    # regression coefficients of (k, l) on (x_i, x_j)
    bki = (s[k, i] - rho * s[k, j]) / det
    bkj = (s[k, j] - rho * s[k, i]) / det
    bli = (s[l, i] - rho * s[l, j]) / det
    blj = (s[l, j] - rho * s[l, i]) / det
    vk = 1.0 - (bki * s[k, i] + bkj * s[k, j])
    vl = 1.0 - (bli * s[l, i] + blj * s[l, j])
    ckl = s[k, l] - (bki * s[l, i] + bkj * s[l, j])
    sk = math.sqrt(max(vk, 1e-300))
    sl = math.sqrt(max(vl, 1e-300))
    rc = min(max(ckl / (sk * sl), -1.0), 1.0)

    upper1 = min(a[i], QUAD_BOUND)
    if upper1 <= -QUAD_BOUND:
        return 0.0
    # a near-singular conditional pair gives a kinked integrand
    panels = 2 if max(abs(rc), abs(rho)) > SHARP_CORR else 1
    width1 = (upper1 + QUAD_BOUND) / panels
    total = 0.0
    for p1 in range(panels):
        half1 = width1 / 2.0
        mid1 = -QUAD_BOUND + (p1 + 0.5) * width1
        for g in range(_GL_X.shape[0]):
            z1 = mid1 + half1 * _GL_X[g]
            upper2 = min((a[j] - rho * z1) / c, QUAD_BOUND)
            if upper2 <= -QUAD_BOUND:
                continue
            width2 = (upper2 + QUAD_BOUND) / panels
            half2 = width2 / 2.0
            inner = 0.0
            for p2 in range(panels):
                mid2 = -QUAD_BOUND + (p2 + 0.5) * width2
                for h in range(_GL_X.shape[0]):
                    z2 = mid2 + half2 * _GL_X[h]
                    xj = rho * z1 + c * z2
                    mk = bki * z1 + bkj * xj
                    ml = bli * z1 + blj * xj
                    inner += _GL_W[h] * _npdf(z2) * _bvn((a[k] - mk) / sk, (a[l] - ml) / sl, rc)
            total += _GL_W[g] * _npdf(z1) * inner * half2 * half1
    return min(max(total, 0.0), 1.0)


@njit(cache=True, nogil=True)
def _mvn(a, s):
    """Orthant CDF P(Z <= a) for d <= 4 with infinite limits reduced away."""
    d = a.shape[0]
    keep = np.empty(d, dtype=np.int64)
    m = 0
    for i in range(d):
        if a[i] == -np.inf:
            return 0.0
        if a[i] != np.inf:
            keep[m] = i
            m += 1
    if m == 0:
        return 1.0
    if m == 1:
        return _phi(a[keep[0]])
    if m == 2:
        return _bvn(a[keep[0]], a[keep[1]], s[keep[0], keep[1]])
    sub_a = np.empty(m)
    sub_s = np.empty((m, m))
    for p in range(m):
        sub_a[p] = a[keep[p]]
        for q in range(m):
            sub_s[p, q] = s[keep[p], keep[q]]
    if m == 3:
        return _phi3(sub_a, sub_s)
    return _phi4(sub_a, sub_s)


@njit(cache=True, nogil=True)
def _mvn_grad(a, s):
    """Partial derivatives of P(Z <= a) with respect to each s[i, j], i < j.

    Finite limits only. The (i, j) entry is phi_2(a_i, a_j; s_ij) times the
    CDF of the remaining coordinates conditioned on x_i = a_i, x_j = a_j.
    """
    d = a.shape[0]
    g = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            rho = s[i, j]
            det = 1.0 - rho * rho
            dens = _bvn_pdf(a[i], a[j], rho)
            if d == 2:
                val = dens
            else:
                idx = np.empty(d - 2, dtype=np.int64)
                n = 0
                for k in range(d):
                    if k != i and k != j:
                        idx[n] = k
                        n += 1
                mean = np.empty(d - 2)
                bi = np.empty(d - 2)
                bj = np.empty(d - 2)
                for p in range(d - 2):
                    k = idx[p]
                    bi[p] = (s[k, i] - rho * s[k, j]) / det
                    bj[p] = (s[k, j] - rho * s[k, i]) / det
                    mean[p] = bi[p] * a[i] + bj[p] * a[j]
                if d == 3:
                    k = idx[0]
                    v = 1.0 - (bi[0] * s[k, i] + bj[0] * s[k, j])
                    val = dens * _phi((a[k] - mean[0]) / math.sqrt(max(v, 1e-300)))
                else:
                    k = idx[0]
                    l = idx[1]
                    vk = 1.0 - (bi[0] * s[k, i] + bj[0] * s[k, j])
                    vl = 1.0 - (bi[1] * s[l, i] + bj[1] * s[l, j])
                    ckl = s[k, l] - (bi[0] * s[l, i] + bj[0] * s[l, j])
                    sk = math.sqrt(max(vk, 1e-300))
                    sl = math.sqrt(max(vl, 1e-300))
                    rc = min(max(ckl / (sk * sl), -1.0), 1.0)
                    val = dens * _bvn((a[k] - mean[0]) / sk, (a[l] - mean[1]) / sl, rc)
            g[i, j] = val
            g[j, i] = val
    return g


def std_normal_cdf(x):
    """Standard normal CDF; accepts scalars or arrays, including +/-inf."""
    return ndtr(x)


def std_normal_quantile(p):
    """Inverse of the standard normal CDF on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError("quantile requires 0 < p < 1")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


def validate_correlation(corr, dim=None):
    """Check a correlation matrix and floor near-singular spectra.

    Returns a float copy. Raises ``ValueError`` unless the matrix is square,
    symmetric, unit-diagonal, bounded by one, and PSD to within 1e-10.
    Matrices whose smallest eigenvalue is below 1e-10 are nudged by
    flooring the spectrum at 1e-10 and restoring the unit diagonal.
    """
    s = np.array(corr, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("correlation matrix must be square")
    if dim is not None and s.shape[0] != dim:
        raise ValueError(f"correlation matrix must be {dim}x{dim}, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("correlation matrix has non-finite entries")
    if not np.allclose(s, s.T, atol=1e-12, rtol=0.0):
        raise ValueError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(s), 1.0, atol=1e-12, rtol=0.0):
        raise ValueError("correlation matrix must have unit diagonal")
    if np.any(np.abs(s) > 1.0 + 1e-12):
        raise ValueError("correlation entries must lie in [-1, 1]")
    s = (s + s.T) / 2.0
    np.fill_diagonal(s, 1.0)
    evals, evecs = np.linalg.eigh(s)
    if evals[0] < -1e-10:
        raise ValueError(f"correlation matrix is not PSD (min eigenvalue {evals[0]:.3g})")
    if evals[0] < _EIG_FLOOR and s.shape[0] > 1:
        s = (evecs * np.maximum(evals, _EIG_FLOOR)) @ evecs.T
        dinv = 1.0 / np.sqrt(np.diag(s))
        s = s * np.outer(dinv, dinv)
        np.fill_diagonal(s, 1.0)
    return np.clip(s, -1.0, 1.0)


def bvn_cdf(a, b, r):
    """P(Z1 <= a, Z2 <= b) for standard bivariate normal with correlation r.

    Requires ``|r| <= 1 - 1e-12``; ``a`` and ``b`` may be infinite.
    """
    r = float(r)
    if not abs(r) <= 1.0 - 1e-12:
        raise ValueError(f"|r| must be at most 1 - 1e-12, got {r}")
    return float(_bvn(float(a), float(b), r))


def mvn_cdf(limits, corr):
    """P(Z <= limits) for a standard normal vector of dimension 1 to 4.

    Parameters
    ----------
    limits : array_like, shape (d,)
        Upper integration limits; +/-inf allowed.
    corr : array_like, shape (d, d)
        Correlation matrix.
    """
    a = np.asarray(limits, dtype=float).ravel()
    d = a.shape[0]
    if not 1 <= d <= 4:
        raise ValueError(f"dimension must be between 1 and 4, got {d}")
    if np.any(np.isnan(a)):
        raise ValueError("limits contain NaN")
    s = validate_correlation(corr, dim=d)
    return float(_mvn(a, s))


def mvn_cdf_grad(limits, corr):
    """Matrix of partials dP/d corr[i, j] (symmetric, zero diagonal)."""
    a = np.asarray(limits, dtype=float).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError("gradient requires finite limits")
    s = validate_correlation(corr, dim=a.shape[0])
    return _mvn_grad(a, s)
