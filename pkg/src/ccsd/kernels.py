"""Gaussian kernels, Gram matrices, bandwidth heuristics and spectral diagnostics.

All kernels here are the RBF form ``exp(-||u - v||^2 / (2 sigma^2))``; Gram
blocks for both the condition space and the output space are built from it.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateScaleError, InputError, NumericalError, ParameterError

DEFAULT_MAX_PAIRS = 2_000_000
IQR_TO_SIGMA = 1.349
_PAIR_CHUNK = 200_000
_NEG_EIG_RTOL = 1e-8


def check_bandwidth(sigma: float, name: str = "sigma") -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise ParameterError(f"{name} must be positive and finite, got {sigma!r}")
    return sigma


def _as_points(X, name: str) -> np.ndarray:
    """Coerce a list of vectors (or of scalars) to a 2-D float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"{name} must be a list of vectors, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InputError(f"{name} is empty")
    return arr


def rbf(u, v, sigma: float) -> float:
    """Gaussian kernel value between two vectors.

    >>> round(rbf([0.0], [1.0], 1.0), 5)
    0.60653
    """
    sigma = check_bandwidth(sigma)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise InputError(f"dimension mismatch: {u.shape} vs {v.shape}")
    diff = u - v
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma * sigma)))


def sq_dists(X, Y) -> np.ndarray:
    """Pairwise squared Euclidean distances by explicit differencing.

    Differencing (instead of the ``|x|^2 + |y|^2 - 2xy`` expansion) keeps
    ``sq_dists(X, Y).T == sq_dists(Y, X)`` bit-for-bit and the diagonal of
    ``sq_dists(X, X)`` exactly zero.
    """
    X = _as_points(X, "X")
    Y = _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[1] == 1:
        d = X[:, 0][:, None] - Y[:, 0][None, :]
        return d * d
    d = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def gram(X, Y, sigma: float) -> np.ndarray:
    """RBF Gram matrix with ``G[i, j] = rbf(X[i], Y[j], sigma)``.

    Parameters
    ----------
    X, Y : array-like, shape (n, d) and (m, d)
        Point sets. 1-D input is read as ``n`` scalar points.
    sigma : float
        Kernel bandwidth.

    Returns
    -------
    numpy.ndarray, shape (n, m)
    """
    sigma = check_bandwidth(sigma)
    return np.exp(-sq_dists(X, Y) / (2.0 * sigma * sigma))


def _pair_indices(n: int, max_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """All unordered pairs i<j, or a seeded uniform subsample of them."""
    total = n * (n - 1) // 2
    if total <= max_pairs:
        return np.triu_indices(n, k=1)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=max_pairs)
    j = rng.integers(0, n - 1, size=max_pairs)
    # shift j past i so that i != j while keeping j uniform over the rest
    j = j + (j >= i)
    return np.minimum(i, j), np.maximum(i, j)


def pairwise_abs_differences(values, max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise InputError("need at least two values")
    i, j = _pair_indices(v.size, max_pairs, seed)
    return np.abs(v[i] - v[j])


def iqr_bandwidth(values, max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0) -> float:
    """Robust scale ``IQR / 1.349`` of the pairwise absolute differences.

    Quartiles use linear interpolation between order statistics (numpy's
    default rule). When there are more than ``max_pairs`` pairs, a seeded
    uniform subsample of pairs is used.

    Raises
    ------
    DegenerateScaleError
        If the interquartile range of the differences is zero.
    """
    diffs = pairwise_abs_differences(values, max_pairs, seed)
    q1, q3 = np.percentile(diffs, [25.0, 75.0])
    iqr = float(q3 - q1)
    if not iqr > 0.0:
        raise DegenerateScaleError("pairwise differences have zero interquartile range")
    return iqr / IQR_TO_SIGMA


def median_heuristic(X, max_pairs: int = DEFAULT_MAX_PAIRS, seed: int = 0) -> float:
    """Median pairwise Euclidean distance over (a seeded subsample of) pairs."""
    X = _as_points(X, "X")
    n = X.shape[0]
    if n < 2:
        raise InputError("need at least two vectors")
    i, j = _pair_indices(n, max_pairs, seed)
    dists = np.empty(i.size)
    for start in range(0, i.size, _PAIR_CHUNK):
        stop = start + _PAIR_CHUNK
        d = X[i[start:stop]] - X[j[start:stop]]
        dists[start:stop] = np.sqrt(np.einsum("ij,ij->i", d, d))
    sigma = float(np.median(dists))
    if not sigma > 0.0:
        raise DegenerateScaleError("median pairwise distance is zero")
    return sigma


def _psd_eigh(G) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InputError(f"expected a square matrix, got shape {G.shape}")
    if G.shape[0] == 0:
        raise InputError("empty matrix")
    G = 0.5 * (G + G.T)
    lam, vecs = np.linalg.eigh(G)
    trace = float(np.trace(G))
    tol = _NEG_EIG_RTOL * max(abs(trace), np.finfo(float).tiny)
    if lam[0] < -tol:
        raise NumericalError(f"matrix is not PSD: eigenvalue {lam[0]:.3e} below -{tol:.3e}")
    return np.clip(lam, 0.0, None), vecs


def effective_rank(G) -> float:
    """Spectral-entropy effective rank ``exp(H(lambda / sum(lambda)))``.

    Lies in ``[1, n]``: 1 for a rank-one matrix, ``n`` for a flat spectrum.
    """
    lam, _ = _psd_eigh(G)
    total = lam.sum()
    if not total > 0.0:
        raise NumericalError("matrix has zero trace")
    p = lam[lam > 0.0] / total
    erank = float(np.exp(-np.sum(p * np.log(p))))
    return min(max(erank, 1.0), float(lam.size))


def rank_truncate(G, keep_fraction: float) -> np.ndarray:
    """Keep the leading eigenpairs that carry ``keep_fraction`` of the trace.

    The retained set is the smallest prefix (by decreasing eigenvalue) whose
    eigenvalue sum reaches ``keep_fraction * trace``.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ParameterError(f"keep_fraction must lie in (0, 1], got {keep_fraction!r}")
    lam, vecs = _psd_eigh(G)
    lam, vecs = lam[::-1], vecs[:, ::-1]
    total = lam.sum()
    if keep_fraction == 1.0 or not total > 0.0:
        n_keep = int(np.count_nonzero(lam > 0.0)) or 1
    else:
        cum = np.cumsum(lam)
        # relative slack so a component sitting exactly on the target is kept
        n_keep = int(np.searchsorted(cum, keep_fraction * total * (1.0 - 1e-12))) + 1
        n_keep = min(n_keep, lam.size)
    V = vecs[:, :n_keep]
    out = (V * lam[:n_keep]) @ V.T
    return 0.5 * (out + out.T)
