"""Sparse canonical correlation analysis on a correlation matrix.

Each canonical pair solves

    max  w1' R12 w2 - lam1 |w1|_1 - lam2 |w2|_1
    s.t. w1' R1 w1 <= 1,  w2' R2 w2 <= 1

by alternating over the two vectors. With one vector fixed, the
constrained problem has the same solution as an unconstrained LASSO
followed by rescaling onto the ellipsoid, so every half-step is a
coordinate-descent LASSO fit. Penalties are chosen per half-step by BIC,
and later pairs come from deflating the cross-correlation block.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from .data import parse_types
from .latent import DEFAULT_NU, estimate_latent_correlation

__all__ = [
    "SccaProblem",
    "CanonicalPair",
    "MixedSparseCCA",
    "lasso_step",
    "kkt_residual",
    "rescale",
    "ridge_init",
    "bic_value",
    "lambda_grid",
    "fit_pair",
    "fit_pairs",
    "deflate",
    "SUPPORT_TOL",
]

SUPPORT_TOL = 1e-6
RIDGE = 0.25
CRITERIA = ("bic1", "bic2")


@njit(cache=True)
def _coordinate_descent(gram, linear, lam, w, max_sweeps, tol):
    p = linear.shape[0]
    gw = gram @ w
    resid = np.inf
    for sweep in range(1, max_sweeps + 1):
        for i in range(p):
            old = w[i]
            t = linear[i] - gw[i] + gram[i, i] * old
            if t > lam:
                new = (t - lam) / gram[i, i]
            elif t < -lam:
                new = (t + lam) / gram[i, i]
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                w[i] = new
                for k in range(p):
                    gw[k] += delta * gram[k, i]
        gw = gram @ w
        resid = 0.0
        for i in range(p):
            g = gw[i] - linear[i]
            if w[i] > 0.0:
                v = abs(g + lam)
            elif w[i] < 0.0:
                v = abs(g - lam)
            else:
                v = max(abs(g) - lam, 0.0)
            resid = max(resid, v)
        if resid <= tol:
            return w, resid, sweep
    return w, resid, max_sweeps


def kkt_residual(gram, linear, lam, w):
    """Largest per-coordinate violation of the LASSO optimality conditions."""
    g = np.asarray(gram) @ w - linear
    active = w != 0
    res = np.where(active, np.abs(g + lam * np.sign(w)), np.maximum(np.abs(g) - lam, 0.0))
    return float(res.max()) if res.size else 0.0


def lasso_step(gram, linear, lam, w0=None, max_sweeps=10_000, tol=1e-10):
    """Minimize ``0.5 w'Gw - w'c + lam |w|_1`` by cyclic coordinate descent.

    Coordinates are swept in ascending order until the KKT residual is at
    most ``tol``. Returns the exact zero vector when ``lam >= max|c|``.
    """
    gram = np.ascontiguousarray(gram, dtype=float)
    linear = np.ascontiguousarray(linear, dtype=float)
    if lam < 0:
        raise ValueError("penalty must be non-negative")
    if lam >= np.max(np.abs(linear), initial=0.0):
        return np.zeros_like(linear)
    w = np.zeros_like(linear) if w0 is None else np.array(w0, dtype=float)
    w, resid, _ = _coordinate_descent(gram, linear, float(lam), w, int(max_sweeps), float(tol))
    if resid > tol:
        warnings.warn(f"coordinate descent stopped after {max_sweeps} sweeps with KKT "
                      f"residual {resid:.3g}", ConvergenceWarning, stacklevel=2)
    return w


def rescale(w, gram):
    """Scale ``w`` onto ``w'Gw = 1``; the zero vector is returned as is."""
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        return w.copy()
    return w / math.sqrt(float(w @ gram @ w))


def _inv_sqrt(m):
    vals, vecs = np.linalg.eigh(m)
    return (vecs / np.sqrt(vals)) @ vecs.T


def _orient(w1, w2):
    if np.any(w1) and w1[np.argmax(np.abs(w1))] < 0:
        return -w1, -w2
    return w1, w2


@dataclass
class SccaProblem:
    """Blocks of a partitioned correlation matrix plus optional penalty grids.

    ``r1`` and ``r2`` must be positive definite with smallest eigenvalue at
    least ``min_eigenvalue``. Grids left as None are generated from the
    ridge initializer when a pair is fitted.
    """

    r1: np.ndarray
    r2: np.ndarray
    r12: np.ndarray
    lambda_grid_1: np.ndarray = None
    lambda_grid_2: np.ndarray = None
    min_eigenvalue: float = DEFAULT_NU / 2

    def __post_init__(self):
        self.r1 = np.asarray(self.r1, dtype=float)
        self.r2 = np.asarray(self.r2, dtype=float)
        self.r12 = np.asarray(self.r12, dtype=float)
        p1, p2 = self.r1.shape[0], self.r2.shape[0]
        if self.r1.shape != (p1, p1) or self.r2.shape != (p2, p2):
            raise ValueError("diagonal blocks must be square")
        if self.r12.shape != (p1, p2):
            raise ValueError(f"cross block has shape {self.r12.shape}, expected {(p1, p2)}")
        for name in ("r1", "r2"):
            block = getattr(self, name)
            if not np.allclose(block, block.T, atol=1e-12):
                raise ValueError(f"{name} is not symmetric")
            low = np.linalg.eigvalsh(block)[0]
            if low < self.min_eigenvalue:
                raise ValueError(f"{name} has smallest eigenvalue {low:.3g} "
                                 f"< {self.min_eigenvalue:.3g}")
        for name in ("lambda_grid_1", "lambda_grid_2"):
            grid = getattr(self, name)
            if grid is None:
                continue
            grid = np.asarray(grid, dtype=float).ravel()
            if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
                raise ValueError(f"{name} must be strictly positive and increasing")
            setattr(self, name, grid)

    @classmethod
    def from_correlation(cls, corr, p1, **kwargs):
        """Split a (p1 + p2) square matrix into its blocks."""
        corr = np.asarray(corr, dtype=float)
        return cls(corr[:p1, :p1], corr[p1:, p1:], corr[:p1, p1:], **kwargs)

    @property
    def dims(self):
        return self.r1.shape[0], self.r2.shape[0]


@dataclass
class CanonicalPair:
    """One fitted pair of sparse canonical vectors."""

    w1: np.ndarray
    w2: np.ndarray
    objective: float
    lambda1: float
    lambda2: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    support1: np.ndarray = field(init=False)
    support2: np.ndarray = field(init=False)

    def __post_init__(self):
        self.support1 = np.flatnonzero(np.abs(self.w1) > SUPPORT_TOL)
        self.support2 = np.flatnonzero(np.abs(self.w2) > SUPPORT_TOL)

    @property
    def is_zero(self):
        return not (np.any(self.w1) and np.any(self.w2))


def ridge_init(problem, ridge=RIDGE):
    """Leading canonical pair of the ridge-regularized blocks.

    Uses the top singular pair of ``(R1 + aI)^-1/2 R12 (R2 + aI)^-1/2``,
    maps it back and rescales onto the unit ellipsoids of ``R1`` and
    ``R2``. The sign makes the largest-magnitude entry of ``w1`` positive.
    """
    p1, p2 = problem.dims
    a = _inv_sqrt(problem.r1 + ridge * np.eye(p1))
    b = _inv_sqrt(problem.r2 + ridge * np.eye(p2))
    u, _, vt = np.linalg.svd(a @ problem.r12 @ b)
    w1 = rescale(a @ u[:, 0], problem.r1)
    w2 = rescale(b @ vt[0], problem.r2)
    return _orient(w1, w2)


def bic_value(criterion, w_new, w_other, g_self, r12, g_other, n):
    """BIC for a candidate ``w_new`` given the other side's vector.

    ``r12`` is oriented so that ``w_new' r12 w_other`` is the cross term.
    ``f = w_new' G w_new - 2 w_new' r12 w_other + w_other' G_other w_other``
    and ``df`` is the support size of ``w_new``.

    * ``bic1``: ``f + df log(n) / n``
    * ``bic2``: ``log(n f / (n - df)) + df log(n) / n``
    """
    w_new = np.asarray(w_new, dtype=float)
    w_other = np.asarray(w_other, dtype=float)
    f = float(w_new @ g_self @ w_new - 2.0 * w_new @ r12 @ w_other
              + w_other @ g_other @ w_other)
    df = int(np.count_nonzero(np.abs(w_new) > SUPPORT_TOL))
    penalty = df * math.log(n) / n
    criterion = str(criterion).lower()
    if criterion == "bic1":
        return f + penalty
    if criterion == "bic2":
        if f <= 0.0 or df >= n:
            raise ValueError(f"bic2 undefined for f={f:.3g}, df={df}, n={n}")
        return math.log(n / (n - df) * f) + penalty
    raise ValueError(f"unknown criterion {criterion!r}")


def _log_grid(lam_max, count, eps):
    grid = np.geomspace(eps * lam_max, lam_max, count)
    grid[0] = eps * lam_max
    grid[-1] = lam_max
    return grid


def lambda_grid(problem, init_pair, count=20, eps=0.01):
    """Log-spaced penalty grids from ``eps * lam_max`` up to ``lam_max``.

    ``lam_max`` on each side is the sup-norm of the linear term at the
    initial pair, the smallest penalty that zeroes the first LASSO step.
    """
    w1, w2 = init_pair
    if not (np.any(w1) and np.any(w2)):
        raise ValueError("cannot build a penalty grid from a zero initial pair")
    if count < 2 or not 0 < eps < 1:
        raise ValueError("need count >= 2 and 0 < eps < 1")
    max1 = float(np.max(np.abs(problem.r12 @ w2)))
    max2 = float(np.max(np.abs(problem.r12.T @ w1)))
    if max1 <= 0 or max2 <= 0:
        raise ValueError("initial pair has zero cross-correlation; grid is degenerate")
    return _log_grid(max1, count, eps), _log_grid(max2, count, eps)


def _select(gram, linear, grid, other, g_other, cross, criterion, n):
    # warm-start the path from the largest penalty down
    best = None
    w = np.zeros_like(linear)
    fits = [None] * grid.size
    for idx in range(grid.size - 1, -1, -1):
        w = lasso_step(gram, linear, grid[idx], w0=w)
        fits[idx] = w.copy()
    scores = np.empty(grid.size)
    for idx, w in enumerate(fits):
        try:
            scores[idx] = bic_value(criterion, w, other, gram, cross, g_other, n)
        except ValueError:
            scores[idx] = np.inf
    best = int(np.argmin(scores))  # first minimum is the smallest penalty
    return fits[best], grid[best]


def fit_pair(problem, criterion="bic2", n=None, init=None, max_outer=100, tol=1e-6,
             lambdas=None, grid_count=20, grid_eps=0.01):
    """Fit one sparse canonical pair by alternating LASSO steps.

    Parameters
    ----------
    problem : SccaProblem
    criterion : {"bic1", "bic2"}
        Used to pick the penalty at every half-step.
    n : int
        Sample size behind the correlation matrix; required unless
        ``lambdas`` is given.
    init : (w1, w2), optional
        Starting pair; defaults to :func:`ridge_init`.
    lambdas : (float, float), optional
        Fixed penalties. Disables BIC selection.

    Returns
    -------
    CanonicalPair
        Zero vectors on both sides if any half-step is thresholded to zero.
        ``history`` holds the penalized objective
        ``-w1'R12 w2 + lam1 |w1|_1 + lam2 |w2|_1`` after each outer iteration.
    """
    if lambdas is None and (n is None or n < 2):
        raise ValueError("sample size n >= 2 is required for penalty selection")
    w1, w2 = ridge_init(problem) if init is None else (np.asarray(init[0], float),
                                                       np.asarray(init[1], float))
    if not (np.any(problem.r12 @ w2) and np.any(problem.r12.T @ w1)):
        return _zero_pair(problem, np.nan, np.nan, 0)
    if lambdas is None:
        grid1, grid2 = problem.lambda_grid_1, problem.lambda_grid_2
        if grid1 is None or grid2 is None:
            auto1, auto2 = lambda_grid(problem, (w1, w2), grid_count, grid_eps)
            grid1 = auto1 if grid1 is None else grid1
            grid2 = auto2 if grid2 is None else grid2
    r1, r2, r12 = problem.r1, problem.r2, problem.r12
    lam1 = lam2 = np.nan
    converged = False
    history = []
    it = 0
    for it in range(1, max_outer + 1):
        if lambdas is None:
            t1, lam1 = _select(r1, r12 @ w2, grid1, w2, r2, r12, criterion, n)
        else:
            lam1 = lambdas[0]
            t1 = lasso_step(r1, r12 @ w2, lam1)
        new1 = rescale(t1, r1)
        if not np.any(new1):
            return _zero_pair(problem, lam1, lam2, it)
        if lambdas is None:
            t2, lam2 = _select(r2, r12.T @ new1, grid2, new1, r1, r12.T, criterion, n)
        else:
            lam2 = lambdas[1]
            t2 = lasso_step(r2, r12.T @ new1, lam2)
        new2 = rescale(t2, r2)
        if not np.any(new2):
            return _zero_pair(problem, lam1, lam2, it)
        change = max(np.max(np.abs(new1 - w1)), np.max(np.abs(new2 - w2)))
        w1, w2 = new1, new2
        history.append(float(-w1 @ r12 @ w2 + lam1 * np.abs(w1).sum()
                             + lam2 * np.abs(w2).sum()))
        if change < tol:
            converged = True
            break
    w1, w2 = _orient(w1, w2)
    return CanonicalPair(w1=w1, w2=w2, objective=float(w1 @ r12 @ w2),
                         lambda1=float(lam1), lambda2=float(lam2),
                         iterations=it, converged=converged, history=history)


def _zero_pair(problem, lam1, lam2, it):
    p1, p2 = problem.dims
    return CanonicalPair(w1=np.zeros(p1), w2=np.zeros(p2), objective=0.0,
                         lambda1=float(lam1), lambda2=float(lam2),
                         iterations=it, converged=True)


def deflate(r12, pair, r1, r2):
    """Remove a fitted pair's direction from the cross block.

    ``R12 - (w1' R12 w2) R1 w1 w2' R2``.
    """
    w1, w2 = pair.w1, pair.w2
    if not (np.any(w1) and np.any(w2)):
        raise ValueError("cannot deflate by a zero canonical pair")
    r12 = np.asarray(r12, dtype=float)
    rho = float(w1 @ r12 @ w2)
    return r12 - rho * np.outer(r1 @ w1, r2 @ w2)


def fit_pairs(problem, n_pairs=1, criterion="bic2", n=None, **kwargs):
    """Fit up to ``n_pairs`` pairs, deflating after each.

    Grids not supplied on ``problem`` are regenerated on every deflated
    block. Extraction stops early at the first zero pair, which is kept in
    the returned list.
    """
    pairs = []
    current = problem
    for _ in range(n_pairs):
        pair = fit_pair(current, criterion=criterion, n=n, **kwargs)
        pairs.append(pair)
        if pair.is_zero or len(pairs) == n_pairs:
            break
        current = SccaProblem(current.r1, current.r2,
                              deflate(current.r12, pair, current.r1, current.r2),
                              problem.lambda_grid_1, problem.lambda_grid_2,
                              min_eigenvalue=problem.min_eigenvalue)
    return pairs


class MixedSparseCCA(TransformerMixin, BaseEstimator):
    """Sparse CCA between two sets of mixed-type variables.

    The latent correlation of the concatenated data is estimated first
    (rank-based by default), then canonical pairs are fitted on its blocks.

    Parameters
    ----------
    types_x, types_y : str or sequence of str, default="truncated"
        Declared variable types of the columns of ``X`` and ``Y``.
    method : {"kendall", "pearson"}, default="kendall"
    criterion : {"bic1", "bic2"}, default="bic2"
    nu : float, default=0.01
        Shrinkage toward the identity applied to the correlation estimate.
    n_components : int, default=1
    grid_count : int, default=20
    grid_eps : float, default=0.01
    max_iter : int, default=100
    tol : float, default=1e-6

    Attributes
    ----------
    x_weights_, y_weights_ : ndarray of shape (n_features, n_components)
    canonical_correlations_ : ndarray of shape (n_components,)
    pairs_ : list of CanonicalPair
    correlation_ : LatentCorrelation
    """

    def __init__(self, types_x="truncated", types_y="truncated", method="kendall",
                 criterion="bic2", nu=DEFAULT_NU, n_components=1, grid_count=20,
                 grid_eps=0.01, max_iter=100, tol=1e-6):
        self.types_x = types_x
        self.types_y = types_y
        self.method = method
        self.criterion = criterion
        self.nu = nu
        self.n_components = n_components
        self.grid_count = grid_count
        self.grid_eps = grid_eps
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, Y):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        Y = check_array(Y, dtype=float, ensure_min_samples=2)
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        p1 = X.shape[1]
        types = (parse_types(self.types_x, p1) + parse_types(self.types_y, Y.shape[1]))
        corr = estimate_latent_correlation(np.hstack([X, Y]), types, nu=self.nu,
                                           method=self.method)
        problem = SccaProblem.from_correlation(corr.r_tilde, p1,
                                               min_eigenvalue=self.nu / 2)
        pairs = fit_pairs(problem, self.n_components, criterion=self.criterion,
                          n=X.shape[0], max_outer=self.max_iter, tol=self.tol,
                          grid_count=self.grid_count, grid_eps=self.grid_eps)
        self.correlation_ = corr
        self.pairs_ = pairs
        self.x_weights_ = np.column_stack([p.w1 for p in pairs])
        self.y_weights_ = np.column_stack([p.w2 for p in pairs])
        self.canonical_correlations_ = np.array([p.objective for p in pairs])
        self.n_features_in_ = p1
        return self

    def transform(self, X, Y=None):
        """Canonical scores ``X @ x_weights_`` (and ``Y @ y_weights_``)."""
        check_is_fitted(self, "x_weights_")
        X = check_array(X, dtype=float)
        scores = X @ self.x_weights_
        if Y is None:
            return scores
        Y = check_array(Y, dtype=float)
        return scores, Y @ self.y_weights_

    def fit_transform(self, X, Y):
        return self.fit(X, Y).transform(X, Y)
