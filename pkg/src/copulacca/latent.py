"""Latent correlation matrix of mixed continuous, binary and truncated data.

Pipeline: pairwise Kendall's tau, bridge inversion per pair, projection to
the nearest correlation matrix, then shrinkage toward the identity so the
result is safely positive definite.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .bridge import R_MAX, PairKind, estimate_threshold, invert_bridges, pair_kind
from .data import MixedData, VariableType, check_mixed_data
from .kendall import kendall_tau_matrix

__all__ = [
    "LatentCorrelation",
    "LatentCorrelationEstimator",
    "assemble_rhat",
    "estimate_latent_correlation",
    "estimate_thresholds",
    "nearest_correlation",
    "shrink_to_identity",
]

DEFAULT_NU = 0.01


def estimate_thresholds(data):
    """Per-column cutoffs; NaN for continuous columns."""
    out = np.full(data.p, np.nan)
    for j, t in enumerate(data.types):
        if t is not VariableType.CONTINUOUS:
            out[j] = estimate_threshold(data.values[:, j], t)
    return out


def assemble_rhat(tau, types, thresholds, r_max=R_MAX):
    """Invert the bridge for every off-diagonal pair.

    Parameters
    ----------
    tau : (p, p) array
        Pairwise Kendall's tau.
    types : sequence of VariableType
    thresholds : (p,) array
        Estimated cutoffs, ignored for continuous columns.

    Returns
    -------
    (p, p) symmetric array with unit diagonal.
    """
    tau = np.asarray(tau, dtype=float)
    p = tau.shape[0]
    iu, ju = np.triu_indices(p, k=1)
    kinds = np.empty(iu.shape[0], dtype=np.int64)
    djs = np.zeros(iu.shape[0])
    dks = np.zeros(iu.shape[0])
    for m, (j, k) in enumerate(zip(iu, ju)):
        kind, swapped = pair_kind(types[j], types[k])
        a, b = (k, j) if swapped else (j, k)
        kinds[m] = kind.code
        if kind is PairKind.CB:
            dks[m] = thresholds[b]
        elif kind is PairKind.TC:
            djs[m] = thresholds[a]
        elif kind is not PairKind.CC:
            djs[m] = thresholds[a]
            dks[m] = thresholds[b]
    r = invert_bridges(tau[iu, ju], kinds, djs, dks, r_max=r_max)
    out = np.eye(p)
    out[iu, ju] = r
    out[ju, iu] = r
    return out


def _clip_eigen(m, floor=0.0):
    vals, vecs = np.linalg.eigh(m)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def nearest_correlation(m, max_iter=100, tol=1e-7):
    """Nearest correlation matrix in Frobenius norm.

    Alternating projections onto the PSD cone and the unit-diagonal set,
    with Dykstra's correction on the PSD step. Inputs that are already
    positive semidefinite are returned unchanged. The result is cleaned
    by one more eigenvalue clip and a diagonal rescaling, so it is PSD and
    has an exact unit diagonal.

    Emits a ``ConvergenceWarning`` and returns the last iterate if the
    max-norm change does not fall below ``tol`` within ``max_iter`` steps.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    m = 0.5 * (m + m.T)
    if np.all(np.diag(m) == 1.0) and np.linalg.eigvalsh(m)[0] >= 0.0:
        return m.copy()
    y = m.copy()
    correction = np.zeros_like(m)
    converged = False
    for _ in range(max_iter):
        r = y - correction
        x = _clip_eigen(r)
        correction = x - r
        y_new = x.copy()
        np.fill_diagonal(y_new, 1.0)
        step = np.max(np.abs(y_new - y))
        y = y_new
        if step < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"nearest correlation projection did not converge in {max_iter} "
                      "iterations", ConvergenceWarning, stacklevel=2)
    y = _clip_eigen(0.5 * (y + y.T))
    d = 1.0 / np.sqrt(np.diag(y))
    y = y * d[:, None] * d[None, :]
    y = 0.5 * (y + y.T)
    np.fill_diagonal(y, 1.0)
    return y


def shrink_to_identity(corr, nu=DEFAULT_NU):
    """``(1 - nu) * corr + nu * I``; positive definite for PSD ``corr``."""
    if not 0.0 <= nu <= 1.0:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")
    corr = np.asarray(corr, dtype=float)
    return (1.0 - nu) * corr + nu * np.eye(corr.shape[0])


@dataclass(frozen=True)
class LatentCorrelation:
    """All stages of a latent correlation estimate.

    Attributes
    ----------
    r_hat : raw pairwise estimate (may be indefinite).
    r_psd : nearest correlation matrix to ``r_hat``.
    r_tilde : ``r_psd`` shrunk toward the identity by ``nu``.
    tau : pairwise Kendall's tau, None for the Pearson method.
    thresholds : per-column cutoffs, NaN for continuous columns.
    """

    r_hat: np.ndarray
    r_psd: np.ndarray
    r_tilde: np.ndarray
    nu: float
    method: str
    tau: np.ndarray = None
    thresholds: np.ndarray = None


def _pearson(X):
    sd = X.std(axis=0)
    Xc = X - X.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Xc.T @ Xc) / X.shape[0] / np.outer(sd, sd)
    r[~np.isfinite(r)] = 0.0
    r = np.clip(r, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def estimate_latent_correlation(X, types=None, nu=DEFAULT_NU, method="kendall",
                                r_max=R_MAX):
    """Estimate the latent correlation matrix of mixed-type data.

    Parameters
    ----------
    X : (n, p) array or MixedData
    types : variable type(s), required unless ``X`` is MixedData
    nu : float
        Shrinkage weight toward the identity.
    method : {"kendall", "pearson"}
        ``"pearson"`` skips the bridges and uses the sample Pearson matrix,
        which is the naive baseline.
    """
    data = X if isinstance(X, MixedData) else check_mixed_data(X, types)
    if method == "kendall":
        tau = kendall_tau_matrix(data)
        thresholds = estimate_thresholds(data)
        r_hat = assemble_rhat(tau, data.types, thresholds, r_max=r_max)
    elif method == "pearson":
        tau = None
        thresholds = None
        r_hat = _pearson(data.values)
    else:
        raise ValueError(f"unknown method {method!r}")
    r_psd = nearest_correlation(r_hat)
    r_tilde = shrink_to_identity(r_psd, nu)
    return LatentCorrelation(r_hat=r_hat, r_psd=r_psd, r_tilde=r_tilde, nu=nu,
                             method=method, tau=tau, thresholds=thresholds)


class LatentCorrelationEstimator(BaseEstimator):
    """Estimator wrapper around :func:`estimate_latent_correlation`.

    Parameters
    ----------
    types : str or sequence of str, default="truncated"
        Declared type of every column, or one shared type.
    nu : float, default=0.01
    method : {"kendall", "pearson"}, default="kendall"

    Attributes
    ----------
    correlation_ : (p, p) array
        The shrunk, positive definite estimate.
    raw_correlation_ : (p, p) array
    tau_ : (p, p) array or None
    thresholds_ : (p,) array or None
    """

    def __init__(self, types="truncated", nu=DEFAULT_NU, method="kendall"):
        self.types = types
        self.nu = nu
        self.method = method

    def fit(self, X, y=None):
        result = estimate_latent_correlation(X, self.types, nu=self.nu, method=self.method)
        self.result_ = result
        self.correlation_ = result.r_tilde
        self.raw_correlation_ = result.r_hat
        self.tau_ = result.tau
        self.thresholds_ = result.thresholds
        self.n_features_in_ = result.r_hat.shape[0]
        return self

    def get_correlation(self):
        check_is_fitted(self, "correlation_")
        return self.correlation_
