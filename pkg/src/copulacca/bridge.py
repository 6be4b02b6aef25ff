"""Bridge functions linking latent correlation to Kendall's tau.

Each bridge ``F(r; delta)`` gives the population Kendall's tau of a pair
of observed variables whose latent Gaussian correlation is ``r``. Six pair
kinds are covered: continuous (C), binary (B) and truncated (T) in every
combination. Inversion exploits the strict monotonicity of every bridge.

Argument order conventions for the mixed kinds:

* ``CB``: continuous first, binary second (threshold ``dk``).
* ``TC``: truncated first (threshold ``dj``), continuous second.
* ``TB``: truncated first (``dj``), binary second (``dk``).
"""

import math
import os
import warnings
from enum import Enum

import numba
import numpy as np
from numba import njit, prange
from numba.core.errors import NumbaWarning

from .data import VariableType
from .mvn import _bvn, _bvn_pdf, _mvn_grad, _phi, _phi3, _phi4, std_normal_quantile

# numba falls back to another threading layer when TBB is too old; the
# notice is not actionable for users of this package
warnings.filterwarnings("ignore", message="The TBB threading layer", category=NumbaWarning)

__all__ = [
    "PairKind",
    "pair_kind",
    "estimate_threshold",
    "bridge_cc",
    "bridge_bb",
    "bridge_cb",
    "bridge_tc",
    "bridge_tb",
    "bridge_tt",
    "bridge",
    "bridge_derivative",
    "invert_bridge",
    "invert_bridges",
    "R_MAX",
    "INVERSION_TOL",
]

R_MAX = 0.99
INVERSION_TOL = 1e-8
_R_DOMAIN = 1.0 - 1e-6
_STEP_TOL = 1e-7


class PairKind(str, Enum):
    CC = "CC"
    BB = "BB"
    CB = "CB"
    TC = "TC"
    TB = "TB"
    TT = "TT"

    @property
    def code(self):
        return _KIND_CODES[self]


_KIND_CODES = {PairKind.CC: 0, PairKind.BB: 1, PairKind.CB: 2,
               PairKind.TC: 3, PairKind.TB: 4, PairKind.TT: 5}

_C, _B, _T = VariableType.CONTINUOUS, VariableType.BINARY, VariableType.TRUNCATED
_PAIR_TABLE = {
    (_C, _C): (PairKind.CC, False),
    (_B, _B): (PairKind.BB, False),
    (_T, _T): (PairKind.TT, False),
    (_C, _B): (PairKind.CB, False),
    (_B, _C): (PairKind.CB, True),
    (_T, _C): (PairKind.TC, False),
    (_C, _T): (PairKind.TC, True),
    (_T, _B): (PairKind.TB, False),
    (_B, _T): (PairKind.TB, True),
}


def pair_kind(type_j, type_k):
    """Return ``(kind, swapped)`` for an ordered pair of variable types.

    ``swapped`` is True when the pair must be reversed to match the
    argument order of the kind's bridge.
    """
    return _PAIR_TABLE[(VariableType.parse(type_j), VariableType.parse(type_k))]


def estimate_threshold(column, vtype):
    """Moment estimate of the latent cutoff for a binary or truncated column.

    Truncated: ``Phi^-1(n_zero / n)``. Binary: ``Phi^-1(1 - mean)``. The
    proportion is clamped to ``[1/(2n), 1 - 1/(2n)]`` so the result is
    finite even for all-zero or zero-free columns.
    """
    vtype = VariableType.parse(vtype)
    col = np.asarray(column, dtype=float).ravel()
    n = col.shape[0]
    if vtype is VariableType.TRUNCATED:
        prop = np.count_nonzero(col == 0) / n
    elif vtype is VariableType.BINARY:
        prop = 1.0 - col.mean()
    else:
        raise ValueError("thresholds are only defined for binary or truncated columns")
    lo = 1.0 / (2 * n)
    prop = min(max(prop, lo), 1.0 - lo)
    return float(std_normal_quantile(prop))


# Correlation matrices of the mixed bridges, each affine in r: A + r * B.
_S = 1.0 / math.sqrt(2.0)


def _affine(const, slope):
    return np.array(const, dtype=float), np.array(slope, dtype=float)


_TB_A_CONST, _TB_A_SLOPE = _affine(
    [[1, 0, _S], [0, 1, 0], [_S, 0, 1]],
    [[0, -1, 0], [-1, 0, -_S], [0, -_S, 0]],
)
_TB_B_CONST, _TB_B_SLOPE = _affine(
    [[1, 0, -_S], [0, 1, 0], [-_S, 0, 1]],
    [[0, 0, 0], [0, 0, -_S], [0, -_S, 0]],
)
_TC_CONST, _TC_SLOPE = _affine(
    [[1, _S, 0], [_S, 1, 0], [0, 0, 1]],
    [[0, 0, _S], [0, 0, 1], [_S, 1, 0]],
)
_TT_A_CONST, _TT_A_SLOPE = _affine(
    [[1, 0, _S, 0], [0, 1, 0, _S], [_S, 0, 1, 0], [0, _S, 0, 1]],
    [[0, 0, 0, -_S], [0, 0, -_S, 0], [0, -_S, 0, -1], [-_S, 0, -1, 0]],
)
_TT_B_CONST, _TT_B_SLOPE = _affine(
    [[1, 0, _S, 0], [0, 1, 0, _S], [_S, 0, 1, 0], [0, _S, 0, 1]],
    [[0, 1, 0, _S], [1, 0, _S, 0], [0, _S, 0, 1], [_S, 0, 1, 0]],
)


@njit(cache=True, nogil=True)
def _slope_dot(grad, slope):
    d = grad.shape[0]
    out = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            out += grad[i, j] * slope[i, j]
    return out


@njit(cache=True, nogil=True)
def _bridge_value(kind, r, dj, dk):
    if kind == 0:
        return 2.0 * math.asin(r) / math.pi
    if kind == 1:
        return 2.0 * (_bvn(dj, dk, r) - _phi(dj) * _phi(dk))
    if kind == 2:
        return 4.0 * _bvn(dk, 0.0, r * _S) - 2.0 * _phi(dk)
    if kind == 3:
        a = np.array([-dj, 0.0, 0.0])
        return -2.0 * _bvn(-dj, 0.0, _S) + 4.0 * _phi3(a, _TC_CONST + r * _TC_SLOPE)
    if kind == 4:
        a = np.array([-dj, dk, 0.0])
        return (
            2.0 * (1.0 - _phi(dj)) * _phi(dk)
            - 2.0 * _phi3(a, _TB_A_CONST + r * _TB_A_SLOPE)
            - 2.0 * _phi3(a, _TB_B_CONST + r * _TB_B_SLOPE)
        )
    a = np.array([-dj, -dk, 0.0, 0.0])
    return -2.0 * _phi4(a, _TT_A_CONST + r * _TT_A_SLOPE) + 2.0 * _phi4(
        a, _TT_B_CONST + r * _TT_B_SLOPE
    )


@njit(cache=True, nogil=True)
def _bridge_slope(kind, r, dj, dk):
    if kind == 0:
        return 2.0 / (math.pi * math.sqrt(1.0 - r * r))
    if kind == 1:
        return 2.0 * _bvn_pdf(dj, dk, r)
    if kind == 2:
        return 4.0 * _S * _bvn_pdf(dk, 0.0, r * _S)
    if kind == 3:
        a = np.array([-dj, 0.0, 0.0])
        return 4.0 * _slope_dot(_mvn_grad(a, _TC_CONST + r * _TC_SLOPE), _TC_SLOPE)
    if kind == 4:
        a = np.array([-dj, dk, 0.0])
        return -2.0 * _slope_dot(
            _mvn_grad(a, _TB_A_CONST + r * _TB_A_SLOPE), _TB_A_SLOPE
        ) - 2.0 * _slope_dot(_mvn_grad(a, _TB_B_CONST + r * _TB_B_SLOPE), _TB_B_SLOPE)
    a = np.array([-dj, -dk, 0.0, 0.0])
    return -2.0 * _slope_dot(
        _mvn_grad(a, _TT_A_CONST + r * _TT_A_SLOPE), _TT_A_SLOPE
    ) + 2.0 * _slope_dot(_mvn_grad(a, _TT_B_CONST + r * _TT_B_SLOPE), _TT_B_SLOPE)


@njit(cache=True, nogil=True)
def _invert(tau, kind, dj, dk, r_max, tol):
    """Safeguarded Newton solve of F(r) = tau on [-r_max, r_max].

    F(0) = 0 for every kind, so the sign of tau fixes the half-interval.
    The far endpoint is evaluated only if an iterate tries to cross it,
    which is also how out-of-range tau values get clamped.
    """
    if kind == 0:
        r = math.sin(math.pi * tau / 2.0)
        return min(max(r, -r_max), r_max)
    if tau == 0.0:
        return 0.0
    if tau > 0.0:
        lo, hi = 0.0, r_max
        far = hi
    else:
        lo, hi = -r_max, 0.0
        far = lo
    far_known = False
    # sin(tau / F'(0)) is exact for CC and a close start for the others
    u = tau / _bridge_slope(kind, 0.0, dj, dk)
    r = math.sin(min(max(u, -1.4), 1.4))
    if not lo < r < hi:
        r = 0.5 * (lo + hi)
    for _ in range(200):
        f = _bridge_value(kind, r, dj, dk) - tau
        d = _bridge_slope(kind, r, dj, dk)
        # Flat stretches of F need a residual well below tol to pin r down.
        if abs(f) <= tol and (d <= 0.0 or abs(f) <= _STEP_TOL * d):
            return r
        if f < 0.0:
            lo = r
        else:
            hi = r
        step_ok = False
        if d > 0.0:
            r_new = r - f / d
            step_ok = lo < r_new < hi
        if not step_ok:
            if not far_known:
                f_far = _bridge_value(kind, far, dj, dk) - tau
                far_known = True
                if (far > 0.0 and f_far <= tol) or (far < 0.0 and f_far >= -tol):
                    return far
            r_new = 0.5 * (lo + hi)
        if hi - lo < 1e-15:
            return r_new
        r = r_new
    return r


@njit(cache=True, nogil=True, parallel=True)
def _invert_many(taus, kinds, djs, dks, r_max, tol):
    out = np.empty(taus.shape[0])
    for i in prange(taus.shape[0]):
        out[i] = _invert(taus[i], kinds[i], djs[i], dks[i], r_max, tol)
    return out


def _check_r(r):
    r = float(r)
    if not abs(r) <= _R_DOMAIN:
        raise ValueError(f"|r| must be at most {_R_DOMAIN}, got {r}")
    return r


def bridge_cc(r):
    """Continuous/continuous: ``2 arcsin(r) / pi``."""
    r = float(r)
    if not abs(r) <= 1.0:
        raise ValueError("r must lie in [-1, 1]")
    return 2.0 * math.asin(r) / math.pi


def bridge_bb(r, dj, dk):
    """Binary/binary: ``2 {Phi2(dj, dk; r) - Phi(dj) Phi(dk)}``."""
    return float(_bridge_value(1, _check_r(r), float(dj), float(dk)))


def bridge_cb(r, dk):
    """Continuous/binary: ``4 Phi2(dk, 0; r / sqrt 2) - 2 Phi(dk)``."""
    return float(_bridge_value(2, _check_r(r), 0.0, float(dk)))


def bridge_tc(r, dj):
    """Truncated/continuous with truncated-side threshold ``dj``."""
    return float(_bridge_value(3, _check_r(r), float(dj), 0.0))


def bridge_tb(r, dj, dk):
    """Truncated (``dj``) / binary (``dk``)."""
    return float(_bridge_value(4, _check_r(r), float(dj), float(dk)))


def bridge_tt(r, dj, dk):
    """Truncated/truncated."""
    return float(_bridge_value(5, _check_r(r), float(dj), float(dk)))


def _thresholds(kind, dj, dk):
    kind = PairKind(kind)
    need_j = kind in (PairKind.BB, PairKind.TC, PairKind.TB, PairKind.TT)
    need_k = kind in (PairKind.BB, PairKind.CB, PairKind.TB, PairKind.TT)
    if need_j and dj is None:
        raise ValueError(f"{kind.value} bridge needs threshold dj")
    if need_k and dk is None:
        raise ValueError(f"{kind.value} bridge needs threshold dk")
    return kind, float(dj) if need_j else 0.0, float(dk) if need_k else 0.0


def bridge(kind, r, dj=None, dk=None):
    """Evaluate the bridge of ``kind`` at latent correlation ``r``."""
    kind, dj, dk = _thresholds(kind, dj, dk)
    if kind is PairKind.CC:
        return bridge_cc(r)
    return float(_bridge_value(kind.code, _check_r(r), dj, dk))


def bridge_derivative(kind, r, dj=None, dk=None):
    """Analytic dF/dr of the bridge of ``kind``."""
    kind, dj, dk = _thresholds(kind, dj, dk)
    return float(_bridge_slope(kind.code, _check_r(r), dj, dk))


def invert_bridge(tau_hat, kind, dj=None, dk=None, r_max=R_MAX, tol=INVERSION_TOL):
    """Latent correlation ``r`` in ``[-r_max, r_max]`` with ``F(r) = tau_hat``.

    ``tau_hat`` outside ``[F(-r_max), F(r_max)]`` is clamped to the
    nearest endpoint. For ``CC`` the closed form ``sin(pi tau / 2)`` is used.
    """
    kind, dj, dk = _thresholds(kind, dj, dk)
    return float(_invert(float(tau_hat), kind.code, dj, dk, float(r_max), float(tol)))


def invert_bridges(taus, kinds, djs, dks, r_max=R_MAX, tol=INVERSION_TOL):
    """Vectorized :func:`invert_bridge` over flat arrays of pairs.

    ``kinds`` holds integer kind codes (see ``PairKind.code``). Pairs are
    solved independently, so results do not depend on the thread count,
    which is read from ``COPULACCA_NUM_THREADS`` when set.
    """
    taus = np.ascontiguousarray(taus, dtype=float)
    kinds = np.ascontiguousarray(kinds, dtype=np.int64)
    djs = np.ascontiguousarray(djs, dtype=float)
    dks = np.ascontiguousarray(dks, dtype=float)
    if taus.size == 0:
        return np.empty(0)
    threads = os.environ.get("COPULACCA_NUM_THREADS")
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    return _invert_many(taus, kinds, djs, dks, float(r_max), float(tol))
