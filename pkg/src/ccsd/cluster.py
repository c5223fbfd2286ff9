"""Time-series clustering with C-CSD or DTW dissimilarities and k-medoids.

The protocol is leak-proof: every series is z-scored on its own, the value
bandwidth scale is estimated from the training split only, hyper-parameters
are chosen by training NMI, and the test split is only ever clustered with
the frozen choice.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import InfeasibleBandError, InputError, NoFeasibleBandwidthError, ParameterError
from .estimator import CcsdConfig, ccsd_score, CcsdTerms, nw_weights, pair_weights, time_grid
from .kernels import DEFAULT_MAX_PAIRS, effective_rank, gram, iqr_bandwidth, rank_truncate
from .metrics import nmi

log = logging.getLogger(__name__)

TAU_GRID = (0.05, 0.10, 0.15, 0.20, 2.0, 5.0, 10.0, 20.0)
SIGMA_MULTIPLIERS = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0)
DTW_WINDOWS = (None, 5, 10, 20, 30)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class LabeledSeries:
    id: str
    values: np.ndarray
    label: Optional[int] = None
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class GridPoint:
    """One hyper-parameter setting; C-CSD uses tau/sigma, DTW uses the window."""

    method: str
    tau_raw: Optional[float] = None
    sigma_multiplier: Optional[float] = None
    dtw_window: Optional[int] = None


@dataclass
class ClusterConfig:
    tau_grid: Sequence[float] = TAU_GRID
    sigma_multipliers: Sequence[float] = SIGMA_MULTIPLIERS
    dtw_windows: Sequence[Optional[int]] = DTW_WINDOWS
    seeds: Sequence[int] = DEFAULT_SEEDS
    cap: Optional[int] = None
    cap_seed: int = 0
    ccsd: CcsdConfig = field(default_factory=CcsdConfig)
    erank_pool: int = 512
    erank_upper: float = 0.95
    erank_lower: float = 2.0
    max_pairs: int = DEFAULT_MAX_PAIRS
    pair_seed: int = 0
    max_iter: int = 300
    n_jobs: int = 1


@dataclass
class KMedoidsResult:
    labels: np.ndarray
    medoids: np.ndarray
    cost: float
    history: list
    n_iter: int


@dataclass
class SelectionResult:
    chosen: GridPoint
    train_nmi: float
    sigma0: Optional[float]
    table: list


@dataclass
class ClusterEvalResult:
    nmi_mean: float
    nmi_std: float
    per_seed: list
    chosen: GridPoint
    seeds: list
    tau_abs: Optional[float] = None
    sigma: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------------
# preprocessing
# ----------------------------------------------------------------------------

def zscore_series(s: LabeledSeries) -> LabeledSeries:
    """Per-series z-score (population sd); constant series map to zeros."""
    v = s.values
    if v.size < 2:
        raise InputError(f"series {s.id!r} is shorter than 2")
    sd = v.std()
    if not sd > 0.0:
        return replace(s, values=np.zeros_like(v), degenerate=True)
    return replace(s, values=(v - v.mean()) / sd, degenerate=False)


def stratified_cap(data: Sequence[LabeledSeries], cap: int, seed: int = 0) -> list:
    """Subsample at most ``cap`` series with class proportions preserved.

    Class quotas use largest-remainder rounding, so each class is within one
    series of its exact share. The input order is kept.
    """
    if cap < 1:
        raise ParameterError("cap must be positive")
    n = len(data)
    if n <= cap:
        return list(data)
    labels = np.array([s.label for s in data])
    classes, counts = np.unique(labels, return_counts=True)
    exact = cap * counts / n
    quota = np.floor(exact).astype(int)
    leftover = cap - quota.sum()
    order = np.argsort(-(exact - quota), kind="stable")
    quota[order[:leftover]] += 1
    rng = np.random.default_rng(seed)
    keep = []
    for c, q in zip(classes, quota):
        idx = np.flatnonzero(labels == c)
        keep.extend(rng.choice(idx, size=q, replace=False).tolist())
    return [data[i] for i in sorted(keep)]


def resolve_tau(tau_raw: float, T: int) -> float:
    """Values ``<= 1`` are a fraction of the series length, larger ones absolute."""
    if tau_raw <= 0:
        raise ParameterError("tau must be positive")
    return tau_raw * T if tau_raw <= 1.0 else float(tau_raw)


def _stack(data: Sequence[LabeledSeries]) -> np.ndarray:
    lengths = {len(s) for s in data}
    if len(lengths) != 1:
        raise InputError(f"C-CSD needs equal-length series, got lengths {sorted(lengths)}")
    return np.vstack([s.values for s in data])


def value_scale(data: Sequence[LabeledSeries], max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0) -> float:
    """``sigma_0``: IQR/1.349 of pairwise differences of all pooled values."""
    pooled = np.concatenate([s.values for s in data])
    return iqr_bandwidth(pooled, max_pairs=max_pairs, seed=seed)


# ----------------------------------------------------------------------------
# dissimilarities
# ----------------------------------------------------------------------------

def _fill_symmetric(n: int, cell, n_jobs: int) -> np.ndarray:
    """Evaluate ``cell(i, j)`` for i < j into fixed slots; mirror to the lower half."""
    D = np.zeros((n, n))

    def row(i):
        for j in range(i + 1, n):
            D[i, j] = cell(i, j)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(row, range(n)))
    else:
        for i in range(n):
            row(i)
    iu = np.triu_indices(n, k=1)
    D[(iu[1], iu[0])] = D[iu]
    return D


def pairwise_ccsd(
    data: Sequence[LabeledSeries],
    tau_raw: float,
    sigma_multiplier: float,
    cfg: Optional[CcsdConfig] = None,
    sigma0: Optional[float] = None,
    n_jobs: int = 1,
) -> np.ndarray:
    """C-CSD dissimilarity matrix over equal-length series.

    ``sigma0`` should come from the training split; when omitted it is
    estimated from ``data`` itself (only appropriate when ``data`` *is* the
    training split).
    """
    cfg = cfg or CcsdConfig()
    X = _stack(data)
    n, T = X.shape
    if sigma0 is None:
        sigma0 = value_scale(data)
    sigma = sigma0 * sigma_multiplier
    x = time_grid(T)
    A = nw_weights(x, x, resolve_tau(tau_raw, T))
    W = pair_weights(A, A, cfg.loo)
    # per-series self-terms are computed once and reused for every pair
    self_terms = []
    for a in X:
        L = gram(a, a, sigma)
        if cfg.keep_fraction < 1.0:
            L = rank_truncate(L, cfg.keep_fraction)
        self_terms.append(float(np.sum(L * W)))

    def cell(i, j):
        i_pq = float(np.sum(gram(X[i], X[j], sigma) * W))
        return ccsd_score(CcsdTerms(self_terms[i], self_terms[j], i_pq), cfg.epsilon)

    return _fill_symmetric(n, cell, n_jobs)


@njit(cache=True, nogil=True)
def _dtw_core(a, b, window):
    n, m = a.shape[0], b.shape[0]
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        lo = 1
        hi = m
        if window >= 0:
            lo = max(1, i - window)
            hi = min(m, i + window)
        for j in range(lo, hi + 1):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = abs(a[i - 1] - b[j - 1]) + best
    return acc[n, m]


def dtw_distance(a, b, window: Optional[int] = None) -> float:
    """DTW alignment cost with absolute local cost and a Sakoe-Chiba band.

    ``window=None`` leaves the alignment unconstrained; otherwise only cells
    with ``|i - j| <= window`` are allowed.
    """
    a = np.ascontiguousarray(a, dtype=float).ravel()
    b = np.ascontiguousarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InputError("DTW needs non-empty series")
    if window is None:
        w = -1
    else:
        w = int(window)
        if w < 0:
            raise ParameterError("window must be non-negative")
        if abs(a.size - b.size) > w:
            raise InfeasibleBandError(f"window {w} cannot align lengths {a.size} and {b.size}")
    return float(_dtw_core(a, b, w))


def pairwise_dtw(data: Sequence[LabeledSeries], window: Optional[int] = None, n_jobs: int = 1) -> np.ndarray:
    series = [s.values for s in data]
    return _fill_symmetric(len(series), lambda i, j: dtw_distance(series[i], series[j], window), n_jobs)


# ----------------------------------------------------------------------------
# k-medoids
# ----------------------------------------------------------------------------

def _objective(D: np.ndarray, medoids) -> float:
    return float(D[:, medoids].min(axis=1).sum())


def kmedoids(D, k: int, seed: int = 0, max_iter: int = 300) -> KMedoidsResult:
    """PAM k-medoids on a precomputed dissimilarity matrix.

    Starts from ``k`` distinct medoids drawn with ``seed`` and repeatedly
    applies the single medoid/non-medoid swap that lowers the total
    dissimilarity the most, until no swap helps or ``max_iter`` is hit.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError("D must be square")
    n = D.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    medoids = rng.choice(n, size=k, replace=False)
    cost = _objective(D, medoids)
    history = [cost]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        Dm = D[:, medoids]
        order = np.argsort(Dm, axis=1, kind="stable")
        nearest = order[:, 0]
        d1 = Dm[np.arange(n), nearest]
        d2 = Dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        best_cost, best_swap = cost, None
        for m_pos in range(k):
            # cost of replacing medoid m_pos by each candidate h, all h at once
            base = np.where(nearest == m_pos, d2, d1)
            new_costs = np.minimum(D, base[:, None]).sum(axis=0)
            new_costs[medoids] = np.inf
            h = int(np.argmin(new_costs))
            if new_costs[h] < best_cost - 1e-12 * max(1.0, abs(best_cost)):
                best_cost, best_swap = float(new_costs[h]), (m_pos, h)
        if best_swap is None:
            break
        medoids = medoids.copy()
        medoids[best_swap[0]] = best_swap[1]
        cost = _objective(D, medoids)
        if cost > history[-1] + 1e-9 * max(1.0, abs(history[-1])):
            raise AssertionError("k-medoids objective increased")
        history.append(cost)
    labels = np.argmin(D[:, medoids], axis=1)
    return KMedoidsResult(labels=labels, medoids=medoids, cost=cost, history=history, n_iter=n_iter)


# ----------------------------------------------------------------------------
# protocol
# ----------------------------------------------------------------------------

def _labels(data) -> np.ndarray:
    labels = [s.label for s in data]
    if any(l is None for l in labels):
        raise InputError("every series needs a label for evaluation")
    return np.asarray(labels)


def dissimilarity(data, point: GridPoint, sigma0: Optional[float], cfg: ClusterConfig) -> np.ndarray:
    if point.method == "ccsd":
        return pairwise_ccsd(data, point.tau_raw, point.sigma_multiplier, cfg.ccsd, sigma0, cfg.n_jobs)
    if point.method == "dtw":
        return pairwise_dtw(data, point.dtw_window, cfg.n_jobs)
    raise ParameterError(f"unknown method {point.method!r}")


def _nmi_per_seed(D, y, seeds, max_iter) -> list:
    k = len(np.unique(y))
    return [nmi(y, kmedoids(D, k, seed=s, max_iter=max_iter).labels) for s in seeds]


def erank_ok(T: int, tau_abs: float, sigma: float, pool: np.ndarray, cfg: ClusterConfig) -> tuple[bool, float, float]:
    x = time_grid(T)
    er_k = effective_rank(gram(x, x, tau_abs))
    er_l = effective_rank(gram(pool, pool, sigma))
    upper = cfg.erank_upper * T
    ok = cfg.erank_lower < er_k < upper and cfg.erank_lower < er_l < upper
    return ok, er_k, er_l


def _erank_pool(data, size: int, seed: int) -> np.ndarray:
    pooled = np.concatenate([s.values for s in data])
    if pooled.size <= size:
        return pooled
    rng = np.random.default_rng(seed)
    return pooled[np.sort(rng.choice(pooled.size, size=size, replace=False))]


def grid_points(method: str, cfg: ClusterConfig) -> list:
    if method == "ccsd":
        return [GridPoint("ccsd", tau_raw=t, sigma_multiplier=m) for t in cfg.tau_grid for m in cfg.sigma_multipliers]
    if method == "dtw":
        return [GridPoint("dtw", dtw_window=w) for w in cfg.dtw_windows]
    raise ParameterError(f"unknown method {method!r}")


def select_hyperparams(train: Sequence[LabeledSeries], method: str, cfg: Optional[ClusterConfig] = None) -> SelectionResult:
    """Pick the grid point with the highest mean training NMI.

    For C-CSD, points whose time Gram or pooled value Gram has effective rank
    outside ``(2, 0.95 T)`` are skipped. Ties go to the earliest grid point.
    """
    cfg = cfg or ClusterConfig()
    y = _labels(train)
    sigma0 = None
    pool = None
    if method == "ccsd":
        T = _stack(train).shape[1]
        sigma0 = value_scale(train, cfg.max_pairs, cfg.pair_seed)
        pool = _erank_pool(train, cfg.erank_pool, cfg.pair_seed)
    table = []
    best = None
    for point in grid_points(method, cfg):
        row = {"point": asdict(point)}
        if method == "ccsd":
            tau_abs = resolve_tau(point.tau_raw, T)
            sigma = sigma0 * point.sigma_multiplier
            ok, er_k, er_l = erank_ok(T, tau_abs, sigma, pool, cfg)
            row.update(tau_abs=tau_abs, sigma=sigma, erank_k=er_k, erank_l=er_l, feasible=ok)
            if not ok:
                table.append(row)
                continue
        D = dissimilarity(train, point, sigma0, cfg)
        scores = _nmi_per_seed(D, y, cfg.seeds, cfg.max_iter)
        row["train_nmi"] = float(np.mean(scores))
        table.append(row)
        log.debug("grid %s -> train NMI %.4f", point, row["train_nmi"])
        if best is None or row["train_nmi"] > best[1]:
            best = (point, row["train_nmi"])
    if best is None:
        raise NoFeasibleBandwidthError("every C-CSD grid point failed the effective-rank filter")
    return SelectionResult(chosen=best[0], train_nmi=best[1], sigma0=sigma0, table=table)


def evaluate_test(
    test: Sequence[LabeledSeries],
    chosen: GridPoint,
    seeds: Sequence[int],
    sigma0: Optional[float] = None,
    cfg: Optional[ClusterConfig] = None,
) -> ClusterEvalResult:
    """Cluster the test split with a frozen grid point; NMI over the seeds.

    ``sigma0`` must be the training-split scale for C-CSD; it is never
    re-estimated here.
    """
    cfg = cfg or ClusterConfig()
    tau_abs = sigma = None
    if chosen.method == "ccsd":
        if sigma0 is None:
            raise ParameterError("C-CSD evaluation needs the training sigma0")
        tau_abs = resolve_tau(chosen.tau_raw, _stack(test).shape[1])
        sigma = sigma0 * chosen.sigma_multiplier
    y = _labels(test)
    D = dissimilarity(test, chosen, sigma0, cfg)
    scores = _nmi_per_seed(D, y, seeds, cfg.max_iter)
    return ClusterEvalResult(
        nmi_mean=float(np.mean(scores)),
        nmi_std=float(np.std(scores)),
        per_seed=[float(s) for s in scores],
        chosen=chosen,
        seeds=list(seeds),
        tau_abs=tau_abs,
        sigma=sigma,
    )


def prepare_split(data: Sequence[LabeledSeries], cfg: ClusterConfig) -> list:
    out = [zscore_series(s) for s in data]
    if cfg.cap is not None:
        out = stratified_cap(out, cfg.cap, cfg.cap_seed)
    return out


def run_protocol(train: Sequence[LabeledSeries], test: Sequence[LabeledSeries], method: str, cfg: Optional[ClusterConfig] = None) -> dict:
    """Full train-select / test-evaluate run; returns a JSON-ready report."""
    cfg = cfg or ClusterConfig()
    train_p = prepare_split(train, cfg)
    test_p = prepare_split(test, cfg)
    sel = select_hyperparams(train_p, method, cfg)
    res = evaluate_test(test_p, sel.chosen, cfg.seeds, sel.sigma0, cfg)
    return {
        "method": method,
        "chosen": asdict(sel.chosen),
        "train_nmi": sel.train_nmi,
        "sigma0": sel.sigma0,
        "tau_abs": res.tau_abs,
        "sigma": res.sigma,
        "test": {"nmi_mean": res.nmi_mean, "nmi_std": res.nmi_std, "per_seed": res.per_seed, "seeds": res.seeds},
        "n_train": len(train_p),
        "n_test": len(test_p),
        "selection_table": sel.table,
        "audit": {
            "zscore_per_series_within_split": True,
            "selection_split": "train",
            "sigma0_source": "train" if method == "ccsd" else None,
            "test_scale_recomputed": False,
            "degenerate_series": sum(s.degenerate for s in train_p) + sum(s.degenerate for s in test_p),
        },
    }
