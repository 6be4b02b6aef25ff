"""Synthetic mixed-type data with a known sparse canonical structure.

Latent Gaussian pairs ``(Z1, Z2)`` share one canonical direction with
correlation ``rho``. Each variable is shifted by a Bernoulli(1/2) offset,
passed through a monotone copula transform and then observed as
continuous, binary or truncated. Fitted pairs are scored against the
latent covariance with population metrics.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import VariableType, check_mixed_data
from .latent import DEFAULT_NU, estimate_latent_correlation
from .scca import SUPPORT_TOL, SccaProblem, fit_pair

__all__ = [
    "ScenarioError",
    "SimScenario",
    "SimDataset",
    "FitMetrics",
    "LOW_DIM_BLOCKS",
    "HIGH_DIM_BLOCKS",
    "METHODS",
    "generate_dataset",
    "population_covariance",
    "rho_hat",
    "predictive_loss",
    "selection_rates",
    "replication_rng",
    "run_replication",
    "run_study",
    "num_threads",
    "summarize",
]

LOW_DIM_BLOCKS = (6, 6, 3, 7, 3)
HIGH_DIM_BLOCKS = (14, 21, 12, 25, 28)
METHODS = ("kendall_bic1", "kendall_bic2", "pearson_bic1", "pearson_bic2")
EXP_CUTOFF = 1.5
METRIC_NAMES = ("rho_hat", "loss1", "loss2", "tpr1", "tpr2", "tnr1", "tnr2", "size1", "size2")


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _transform(copula, side):
    if copula == 0 or side == 2 and copula == 1:
        return None
    if side == 1:
        return np.exp
    return lambda z: z ** 3


@dataclass(frozen=True)
class SimScenario:
    """Simulation design.

    Supports are 0-based column indices of the nonzero canonical loadings.
    ``trunc_const1``/``trunc_const2`` default to 1.5 for exponentially
    transformed sides and 0 otherwise.
    """

    n: int = 100
    p1: int = 25
    p2: int = 25
    gamma1: float = 0.7
    gamma2: float = 0.7
    block_sizes: tuple = LOW_DIM_BLOCKS
    support1: tuple = (0, 5, 10, 15, 20)
    support2: tuple = (0, 5, 10, 15, 20)
    rho: float = 0.9
    copula: int = 0
    type1: str = "truncated"
    type2: str = "truncated"
    trunc_const1: float = None
    trunc_const2: float = None
    shift: bool = True
    permute: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "p1", "p2", "copula", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ScenarioError(name, f"expected an integer, got {value!r}")
        for name in ("rho", "gamma1", "gamma2", "trunc_const1", "trunc_const2"):
            value = getattr(self, name)
            if value is None and name.startswith("trunc"):
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
                raise ScenarioError(name, f"expected a number, got {value!r}")
        for name in ("shift", "permute"):
            if not isinstance(getattr(self, name), (bool, np.bool_)):
                raise ScenarioError(name, "expected true or false")
        if self.n < 2:
            raise ScenarioError("n", "need at least two samples")
        if self.p1 < 1 or self.p2 < 1:
            raise ScenarioError("p1" if self.p1 < 1 else "p2", "must be positive")
        if self.copula not in (0, 1, 2):
            raise ScenarioError("copula", f"must be 0, 1 or 2, got {self.copula}")
        if not 0 < self.rho < 1:
            raise ScenarioError("rho", f"must lie in (0, 1), got {self.rho}")
        for name in ("gamma1", "gamma2"):
            if not -1 < getattr(self, name) < 1:
                raise ScenarioError(name, "must lie in (-1, 1)")
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if any(b < 1 for b in self.block_sizes) or sum(self.block_sizes) != self.p2:
            raise ScenarioError("block_sizes", f"must be positive and sum to p2={self.p2}")
        for name, p in (("support1", self.p1), ("support2", self.p2)):
            sup = tuple(int(s) for s in getattr(self, name))
            if not sup:
                raise ScenarioError(name, "must not be empty")
            for i, s in enumerate(sup):
                if not 0 <= s < p:
                    raise ScenarioError(f"{name}[{i}]", f"index {s} outside [0, {p})")
            if len(set(sup)) != len(sup):
                raise ScenarioError(name, "duplicate indices")
            object.__setattr__(self, name, sup)
        for name in ("type1", "type2"):
            try:
                object.__setattr__(self, name, VariableType.parse(getattr(self, name)).value)
            except ValueError as exc:
                raise ScenarioError(name, str(exc)) from None

    @classmethod
    def from_dict(cls, d):
        """Build from a mapping, rejecting unknown keys."""
        if not isinstance(d, dict):
            raise ScenarioError("<root>", "scenario must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ScenarioError(key, "unknown field")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["block_sizes"] = list(self.block_sizes)
        d["support1"] = list(self.support1)
        d["support2"] = list(self.support2)
        return d

    def cutoff(self, side):
        explicit = self.trunc_const1 if side == 1 else self.trunc_const2
        if explicit is not None:
            return float(explicit)
        return EXP_CUTOFF if _transform(self.copula, side) is np.exp else 0.0


def _ar_matrix(p, gamma):
    idx = np.arange(p)
    return gamma ** np.abs(idx[:, None] - idx[None, :])


def _block_matrix(sizes, gamma):
    p = sum(sizes)
    out = np.zeros((p, p))
    start = 0
    for b in sizes:
        out[start:start + b, start:start + b] = gamma
        start += b
    np.fill_diagonal(out, 1.0)
    return out


def _loading(p, support, sigma):
    w = np.zeros(p)
    w[list(support)] = 1.0
    return w / math.sqrt(w @ sigma @ w)


def population_covariance(scenario):
    """Unpermuted ``(sigma1, sigma2, sigma12, w1, w2)`` of the latent model."""
    s1 = _ar_matrix(scenario.p1, scenario.gamma1)
    s2 = _block_matrix(scenario.block_sizes, scenario.gamma2)
    w1 = _loading(scenario.p1, scenario.support1, s1)
    w2 = _loading(scenario.p2, scenario.support2, s2)
    s12 = scenario.rho * np.outer(s1 @ w1, s2 @ w2)
    return s1, s2, s12, w1, w2


@dataclass
class SimDataset:
    """One simulated sample plus the (permuted) truth it was drawn from."""

    x1: np.ndarray
    x2: np.ndarray
    types1: tuple
    types2: tuple
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma12: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    perm1: np.ndarray
    perm2: np.ndarray
    shift1: np.ndarray = field(repr=False, default=None)
    shift2: np.ndarray = field(repr=False, default=None)

    @property
    def support1(self):
        return np.flatnonzero(self.w1)

    @property
    def support2(self):
        return np.flatnonzero(self.w2)


def _observe(u, vtype, cutoff):
    if vtype == VariableType.CONTINUOUS:
        return u
    above = u > cutoff
    if vtype == VariableType.BINARY:
        return above.astype(float)
    return np.where(above, u, 0.0)


def generate_dataset(scenario, rng=None):
    """Draw one dataset.

    ``rng`` defaults to a generator seeded from ``scenario.seed``. Column
    order is randomly permuted per side when ``scenario.permute`` is set;
    the returned truth is permuted the same way.
    """
    if rng is None:
        rng = replication_rng(scenario.seed, 0)
    s1, s2, s12, w1, w2 = population_covariance(scenario)
    p1, p2 = scenario.p1, scenario.p2
    if scenario.permute:
        perm1 = rng.permutation(p1)
        perm2 = rng.permutation(p2)
    else:
        perm1, perm2 = np.arange(p1), np.arange(p2)
    s1 = s1[np.ix_(perm1, perm1)]
    s2 = s2[np.ix_(perm2, perm2)]
    s12 = s12[np.ix_(perm1, perm2)]
    w1, w2 = w1[perm1], w2[perm2]
    joint = np.block([[s1, s12], [s12.T, s2]])
    vals, vecs = np.linalg.eigh(joint)
    if vals[0] <= 0:
        raise ScenarioError("rho", f"joint covariance not positive definite "
                                   f"(smallest eigenvalue {vals[0]:.3g})")
    z = rng.standard_normal((scenario.n, p1 + p2)) @ (vecs * np.sqrt(vals)).T
    if scenario.shift:
        b = rng.integers(0, 2, p1 + p2).astype(float)
    else:
        b = np.zeros(p1 + p2)
    z = z + b
    out = []
    for side, block in ((1, z[:, :p1]), (2, z[:, p1:])):
        f = _transform(scenario.copula, side)
        u = block if f is None else f(block)
        vtype = VariableType.parse(scenario.type1 if side == 1 else scenario.type2)
        out.append(_observe(u, vtype, scenario.cutoff(side)))
    return SimDataset(
        x1=out[0], x2=out[1],
        types1=(VariableType.parse(scenario.type1),) * p1,
        types2=(VariableType.parse(scenario.type2),) * p2,
        sigma1=s1, sigma2=s2, sigma12=s12, w1=w1, w2=w2,
        perm1=perm1, perm2=perm2, shift1=b[:p1], shift2=b[p1:],
    )


def rho_hat(w1, w2, sigma1, sigma2, sigma12):
    """Population correlation of the fitted canonical variates; 0 for zero vectors."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if not (np.any(w1) and np.any(w2)):
        return 0.0
    num = abs(float(w1 @ sigma12 @ w2))
    return num / math.sqrt(float(w1 @ sigma1 @ w1) * float(w2 @ sigma2 @ w2))


def predictive_loss(w_hat, w_true, sigma):
    """``1 - |w_hat' S w| / sqrt(w_hat' S w_hat)``; 1 for a zero ``w_hat``."""
    w_hat = np.asarray(w_hat, dtype=float)
    if not np.any(w_hat):
        return 1.0
    loss = 1.0 - abs(float(w_hat @ sigma @ w_true)) / math.sqrt(float(w_hat @ sigma @ w_hat))
    return min(max(loss, 0.0), 1.0)


def selection_rates(support_hat, support_true, p):
    """True positive rate, true negative rate and size of an estimated support."""
    est = set(int(i) for i in support_hat)
    true = set(int(i) for i in support_true)
    if not true:
        raise ValueError("true support is empty; TPR is undefined")
    negatives = p - len(true)
    tpr = len(est & true) / len(true)
    tnr = 1.0 if negatives == 0 else (negatives - len(est - true)) / negatives
    return tpr, tnr, len(est)


@dataclass(frozen=True)
class FitMetrics:
    rho_hat: float
    loss1: float
    loss2: float
    tpr1: float
    tpr2: float
    tnr1: float
    tnr2: float
    size1: int
    size2: int


def score_pair(pair, data):
    """Population metrics of a fitted pair against a dataset's truth."""
    tpr1, tnr1, size1 = selection_rates(np.flatnonzero(np.abs(pair.w1) > SUPPORT_TOL),
                                        data.support1, data.w1.size)
    tpr2, tnr2, size2 = selection_rates(np.flatnonzero(np.abs(pair.w2) > SUPPORT_TOL),
                                        data.support2, data.w2.size)
    return FitMetrics(
        rho_hat=rho_hat(pair.w1, pair.w2, data.sigma1, data.sigma2, data.sigma12),
        loss1=predictive_loss(pair.w1, data.w1, data.sigma1),
        loss2=predictive_loss(pair.w2, data.w2, data.sigma2),
        tpr1=tpr1, tpr2=tpr2, tnr1=tnr1, tnr2=tnr2, size1=size1, size2=size2,
    )


def replication_rng(seed, replication):
    """Counter-based generator for one replication of a seeded study."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


def default_curve_grid():
    return np.geomspace(0.01, 0.7, 50)


def run_replication(scenario, methods, seed, replication, nu=DEFAULT_NU, curve_grid=None):
    """Fit every method on one simulated dataset.

    Returns ``(rows, curves)``: one metrics dict per method, and per method
    an array of shape ``(len(curve_grid), 4)`` holding TPR1, FPR1, TPR2,
    FPR2 at each fixed penalty (empty when no grid is given).
    """
    data = generate_dataset(scenario, replication_rng(seed, replication))
    x = np.hstack([data.x1, data.x2])
    mixed = check_mixed_data(x, data.types1 + data.types2)
    corr = {}
    rows, curves = [], {}
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        estimator, criterion = method.split("_")
        if estimator not in corr:
            corr[estimator] = estimate_latent_correlation(mixed, nu=nu, method=estimator)
        problem = SccaProblem.from_correlation(corr[estimator].r_tilde, scenario.p1,
                                               min_eigenvalue=nu / 2)
        pair = fit_pair(problem, criterion=criterion, n=scenario.n)
        metrics = score_pair(pair, data)
        rows.append({"replication": replication, "method": method, **asdict(metrics),
                     "lambda1": pair.lambda1, "lambda2": pair.lambda2,
                     "iterations": pair.iterations, "converged": pair.converged})
        if curve_grid is not None:
            pts = np.empty((len(curve_grid), 4))
            for i, lam in enumerate(curve_grid):
                fixed = fit_pair(problem, lambdas=(lam, lam))
                m = score_pair(fixed, data)
                pts[i] = (m.tpr1, 1.0 - m.tnr1, m.tpr2, 1.0 - m.tnr2)
            curves[method] = pts
    return rows, curves


def summarize(rows, methods):
    """Medians and interquartile ranges of every metric, per method."""
    out = {}
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        stats = {}
        for name in METRIC_NAMES:
            v = np.array([r[name] for r in sub], dtype=float)
            if v.size == 0:
                continue
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            stats[name] = {"median": float(med), "iqr": float(q3 - q1)}
        out[method] = {"replications": len(sub), "metrics": stats}
    return out


@dataclass
class StudyResult:
    rows: list
    summary: dict
    curve_grid: np.ndarray = None
    curves: dict = None

    def to_json(self):
        d = {"summary": self.summary}
        if self.curves:
            d["curve_lambdas"] = [float(v) for v in self.curve_grid]
            d["curves"] = {m: {"tpr1": c[:, 0].tolist(), "fpr1": c[:, 1].tolist(),
                               "tpr2": c[:, 2].tolist(), "fpr2": c[:, 3].tolist()}
                           for m, c in self.curves.items()}
        return json.loads(json.dumps(d))


def num_threads(n_jobs=None):
    """Worker count: ``n_jobs``, else ``COPULACCA_NUM_THREADS``, else all cores."""
    if n_jobs is None:
        env = os.environ.get("COPULACCA_NUM_THREADS")
        n_jobs = int(env) if env else (os.cpu_count() or 1)
    if n_jobs < 1:
        raise ValueError(f"thread count must be positive, got {n_jobs}")
    return int(n_jobs)


def run_study(scenario, methods=METHODS, replications=10, seed=None, nu=DEFAULT_NU,
              curve_grid=None, n_jobs=None):
    """Run ``replications`` independent replications of ``scenario``.

    Replication ``r`` draws from ``replication_rng(seed, r)``, so results do
    not depend on execution order. ``seed`` defaults to ``scenario.seed``.
    When ``curve_grid`` is given, fixed-penalty TPR/FPR curves are averaged
    over replications. Replications run on ``num_threads(n_jobs)`` worker
    threads and are collected in replication order.
    """
    seed = scenario.seed if seed is None else seed
    methods = tuple(methods)
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")

    def work(r):
        return run_replication(scenario, methods, seed, r, nu=nu, curve_grid=curve_grid)

    workers = min(num_threads(n_jobs), max(replications, 1))
    if workers == 1:
        results = [work(r) for r in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(replications)))
    rows = []
    sums = {}
    for rep_rows, curves in results:
        rows.extend(rep_rows)
        for m, c in curves.items():
            sums[m] = sums.get(m, 0.0) + c
    mean_curves = {m: s / replications for m, s in sums.items()} if curve_grid is not None else None
    return StudyResult(rows=rows, summary=summarize(rows, methods),
                       curve_grid=None if curve_grid is None else np.asarray(curve_grid),
                       curves=mean_curves)
