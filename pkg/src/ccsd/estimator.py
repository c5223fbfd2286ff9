"""Conditional Cauchy-Schwarz divergence estimators.

Three entry points share the same scoring rule:

* :func:`ccsd_terms` + :func:`ccsd_score` -- the Gram-trace estimator built
  from Nadaraya-Watson weight matrices ``A`` (p side) and ``B`` (q side);
* :func:`ccsd_pair_series` -- two equally long series conditioned on the
  shared time index, used as a clustering dissimilarity;
* :func:`ccsd_mixture` -- two weighted point masses in a scalar output space,
  used for window scoring in the fraud pipeline.

The score is always the ridged symmetric log form
``0.5 * (log(Ipp + eps) + log(Iqq + eps)) - log(Ipq + eps)``, i.e.
``-log((Ipq + eps) / sqrt((Ipp + eps) (Iqq + eps)))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateKernelError, InputError, InsufficientReferenceError, ParameterError
from .kernels import check_bandwidth, gram, rank_truncate

DEFAULT_EPSILON = 1e-10

Gate = Callable[[np.ndarray, np.ndarray], np.ndarray]


class GroupGate:
    """Gate whose multiplier depends only on a small integer code per item.

    ``codes(tags)`` maps a tag array to codes in ``range(len(table))`` and
    the multiplier between items with codes ``g`` and ``h`` is
    ``table[g, h]``. Calling the gate returns the dense multiplier matrix,
    but :func:`mixture_terms` never builds it: each gated double sum is
    reduced to ``sum(table * (P.T @ L @ Q))`` with one-hot weighted ``P, Q``.
    """

    def __init__(self, table, codes: Callable[[np.ndarray], np.ndarray]):
        self.table = np.asarray(table, dtype=float)
        if self.table.ndim != 2 or self.table.shape[0] != self.table.shape[1]:
            raise InputError("gate table must be square")
        self.codes = codes

    def __call__(self, left, right) -> np.ndarray:
        return self.table[self.codes(left)[:, None], self.codes(right)[None, :]]

    def onehot(self, tags, weights) -> np.ndarray:
        codes = self.codes(tags)
        out = np.zeros((codes.size, self.table.shape[0]))
        out[np.arange(codes.size), codes] = weights
        return out


@dataclass(frozen=True)
class CcsdConfig:
    """Numerical safeguards for the estimator.

    Attributes
    ----------
    epsilon : float
        Ridge added to each Gram expectation inside the logarithms.
    loo : bool
        Drop exact self-terms ``i == i'`` when both sides share one
        conditioning sample; the remaining pair weights of each reference
        row are rescaled to total mass 1.
    keep_fraction : float
        Fraction of the trace kept when rank-truncating ``Lpp`` and ``Lqq``;
        1 disables truncation.
    """

    epsilon: float = DEFAULT_EPSILON
    loo: bool = False
    keep_fraction: float = 1.0

    def __post_init__(self):
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ParameterError(f"keep_fraction must lie in (0, 1], got {self.keep_fraction!r}")


@dataclass(frozen=True)
class CcsdTerms:
    """The three Gram expectations entering the divergence."""

    i_pp: float
    i_qq: float
    i_pq: float


@dataclass
class MixtureWeights:
    """Normalized weights over a subset of some reference window set."""

    indices: np.ndarray
    weights: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.indices.shape != self.weights.shape:
            raise InputError("indices and weights must have the same length")

    def __len__(self):
        return self.weights.size


def nw_weights(ref_conditions, sample_conditions, tau: float) -> np.ndarray:
    """Nadaraya-Watson weight matrix.

    Row ``l`` holds ``K_tau(ref[l], sample[i]) / sum_i' K_tau(ref[l], sample[i'])``,
    so the result has shape ``(n_ref, n_sample)`` and is row-stochastic.
    """
    K = gram(ref_conditions, sample_conditions, check_bandwidth(tau, "tau"))
    row_sums = K.sum(axis=1)
    if np.any(row_sums <= 0.0):
        raise DegenerateKernelError(
            f"condition kernel underflowed for {int(np.sum(row_sums <= 0.0))} reference rows; tau={tau} is too small"
        )
    return K / row_sums[:, None]


def pair_weights(A, B, loo: bool = False) -> np.ndarray:
    """Aggregate weight ``W[i, j]`` such that ``I = sum(L * W)``.

    Without LOO this is ``A.T @ B / n_r``, i.e. ``sum_l a_li b_lj / n_r``.
    With LOO the diagonal ``i == j`` is zeroed and every reference row is
    rescaled by its remaining mass ``1 - sum_i a_li b_li``; rows left with
    no off-diagonal mass are dropped from the average.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n_r = A.shape[0]
    if not loo:
        return A.T @ B / n_r
    if A.shape != B.shape:
        raise InputError("LOO needs both sides to share the conditioning sample")
    mass = 1.0 - np.einsum("li,li->l", A, B)
    keep = mass > 1e-12
    if not np.any(keep):
        raise DegenerateKernelError("no reference row has weight outside the self-terms")
    W = (A[keep] / mass[keep, None]).T @ B[keep] / np.count_nonzero(keep)
    np.fill_diagonal(W, 0.0)
    return W


def ccsd_terms(A, B, Lpp, Lqq, Lpq, cfg: Optional[CcsdConfig] = None, shared_sample: bool = False) -> CcsdTerms:
    """Gram-trace expectations ``Ipp``, ``Iqq``, ``Ipq``.

    ``Ipq = (1/n_r) sum_l a_l^T Lpq b_l``, which equals the trace
    ``tr(Lpq B^T A) / n_r``; ``Ipp`` and ``Iqq`` follow the same pattern.

    Parameters
    ----------
    A, B : array-like, shape (n_r, n_p) and (n_r, n_q)
        Row-stochastic condition weights for each side.
    Lpp, Lqq, Lpq : array-like
        Output-space Gram blocks of shapes (n_p, n_p), (n_q, n_q), (n_p, n_q).
    cfg : CcsdConfig, optional
    shared_sample : bool
        Both sides were conditioned on the identical sample; only then is
        ``cfg.loo`` honoured.
    """
    cfg = cfg or CcsdConfig()
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Lpp = np.asarray(Lpp, dtype=float)
    Lqq = np.asarray(Lqq, dtype=float)
    Lpq = np.asarray(Lpq, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0]:
        raise InputError(f"A and B must be 2-D with equal row counts, got {A.shape} and {B.shape}")
    n_p, n_q = A.shape[1], B.shape[1]
    expected = {"Lpp": (n_p, n_p), "Lqq": (n_q, n_q), "Lpq": (n_p, n_q)}
    for name, mat in (("Lpp", Lpp), ("Lqq", Lqq), ("Lpq", Lpq)):
        if mat.shape != expected[name]:
            raise InputError(f"{name} has shape {mat.shape}, expected {expected[name]}")
    if cfg.keep_fraction < 1.0:
        Lpp = rank_truncate(Lpp, cfg.keep_fraction)
        Lqq = rank_truncate(Lqq, cfg.keep_fraction)
    loo = cfg.loo and shared_sample
    Wpp = pair_weights(A, A, loo)
    Wqq = Wpp if (loo or B is A) else pair_weights(B, B, loo)
    Wpq = pair_weights(A, B, loo)
    return CcsdTerms(
        i_pp=float(np.sum(Lpp * Wpp)),
        i_qq=float(np.sum(Lqq * Wqq)),
        i_pq=float(np.sum(Lpq * Wpq)),
    )


def ccsd_score(terms: CcsdTerms, epsilon: float = DEFAULT_EPSILON) -> float:
    """Ridged symmetric log score.

    With ``epsilon == 0`` and ``i_pq == 0`` the ratio is undefined and
    ``math.inf`` is returned so that rankings stay total.
    """
    if epsilon < 0.0:
        raise ParameterError("epsilon must be >= 0")
    pp, qq, pq = terms.i_pp + epsilon, terms.i_qq + epsilon, terms.i_pq + epsilon
    if pq <= 0.0 or pp <= 0.0 or qq <= 0.0:
        return math.inf
    return 0.5 * (math.log(pp) + math.log(qq)) - math.log(pq)


def time_grid(T: int) -> np.ndarray:
    return np.arange(1, T + 1, dtype=float)


def ccsd_pair_series(a, b, tau: float, sigma: float, cfg: Optional[CcsdConfig] = None, grid=None) -> float:
    """Divergence between two series conditioned on their shared time index.

    Both sides use the conditions ``1..T``, so ``A == B``; the reference set
    is the same grid unless ``grid`` is supplied.
    """
    cfg = cfg or CcsdConfig()
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise InputError(f"series lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise InputError("empty series")
    x = time_grid(a.size)
    ref = x if grid is None else np.asarray(grid, dtype=float)
    A = nw_weights(ref, x, tau)
    terms = ccsd_terms(A, A, gram(a, a, sigma), gram(b, b, sigma), gram(a, b, sigma), cfg, shared_sample=True)
    return ccsd_score(terms, cfg.epsilon)


def _weights_of(m) -> np.ndarray:
    if isinstance(m, MixtureWeights):
        return m.weights
    return np.asarray(m, dtype=float).ravel()


def mixture_terms(p, q, y_p, y_q, sigma_y: float, gate: Optional[Gate] = None, tags_p=None, tags_q=None) -> CcsdTerms:
    """Double-sum expectations of a (gated) output kernel under two mixtures."""
    wp, wq = _weights_of(p), _weights_of(q)
    y_p = np.asarray(y_p, dtype=float).ravel()
    y_q = np.asarray(y_q, dtype=float).ravel()
    if wp.size == 0 or wq.size == 0:
        raise InsufficientReferenceError("empty mixture")
    if wp.size != y_p.size or wq.size != y_q.size:
        raise InputError("weights and outputs must be aligned")
    Lpp = gram(y_p, y_p, sigma_y)
    Lqq = gram(y_q, y_q, sigma_y)
    Lpq = gram(y_p, y_q, sigma_y)
    if isinstance(gate, GroupGate):
        if tags_p is None or tags_q is None:
            raise InputError("a gate needs tags for both mixtures")
        P, Q = gate.onehot(tags_p, wp), gate.onehot(tags_q, wq)
        return CcsdTerms(
            i_pp=float(np.sum(gate.table * (P.T @ Lpp @ P))),
            i_qq=float(np.sum(gate.table * (Q.T @ Lqq @ Q))),
            i_pq=float(np.sum(gate.table * (P.T @ Lpq @ Q))),
        )
    if gate is not None:
        if tags_p is None or tags_q is None:
            raise InputError("a gate needs tags for both mixtures")
        Lpp = Lpp * gate(tags_p, tags_p)
        Lqq = Lqq * gate(tags_q, tags_q)
        Lpq = Lpq * gate(tags_p, tags_q)
    return CcsdTerms(i_pp=float(wp @ Lpp @ wp), i_qq=float(wq @ Lqq @ wq), i_pq=float(wp @ Lpq @ wq))


def ccsd_mixture(
    p,
    q,
    y_p,
    y_q,
    sigma_y: float,
    gate: Optional[Gate] = None,
    tags_p=None,
    tags_q=None,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Divergence between two weighted sets of scalar outputs.

    ``gate(tags_left, tags_right)`` returns a matrix of multipliers applied
    to every kernel value ``L(y_i, y_j)`` in all three blocks. A gate that is
    itself a PSD kernel (such as a per-flag mismatch discount) keeps the
    score non-negative.
    """
    return ccsd_score(mixture_terms(p, q, y_p, y_q, sigma_y, gate, tags_p, tags_q), epsilon)
