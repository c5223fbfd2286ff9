"""Unsupervised account-level fraud scoring with gated C-CSD.

Each account's standardized amount series is cut into windows. A query
window is compared through two mixtures of reference windows:

* a *global* mixture over a library of windows from known-normal accounts,
  weighted by window similarity, category/merchant agreement and a rarity
  prior, truncated to the top ``J`` atoms;
* a *local* mixture over the same account's strictly earlier windows,
  weighted by similarity, agreement, recency decay and change-flag matches.

The window score is the C-CSD between the two mixtures in the ``|dz|``
output space with a flag-consistency gate; an account's score is the
maximum of its window scores.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InputError, InsufficientReferenceError, ParameterError, SplitSizeError
from .estimator import DEFAULT_EPSILON, GroupGate, MixtureWeights, ccsd_mixture
from .kernels import DEFAULT_MAX_PAIRS, median_heuristic
from .metrics import best_f1_threshold, evaluate

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_rarity", "no_decay", "no_flag")

# split proportions of the reference corpus: 2561 normal, 1111 fraud accounts
NORMAL_SPLIT = (1793, 384, 384)
FRAUD_SPLIT = (389, 722)


@dataclass(frozen=True)
class TransactionRecord:
    step: int
    customer: str
    merchant: str
    category: str
    amount: float
    fraud: int = 0


@dataclass
class AccountSeries:
    customer: str
    steps: np.ndarray
    amounts: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    cat_codes: np.ndarray
    mer_codes: np.ndarray
    f_cat: np.ndarray
    f_mer: np.ndarray
    label: Optional[int] = None
    degenerate: bool = False

    def __len__(self):
        return self.z.size


@dataclass(frozen=True)
class WindowRecord:
    """One length-K window of an account.

    ``end_step`` is the 1-based position of the window's last transaction
    within its account; ``step`` is that transaction's raw time stamp.
    ``y``, the flags and the (category, merchant) codes all refer to the
    last transaction.
    """

    customer: str
    end_step: int
    step: int
    x: np.ndarray
    y: float
    f_cat: int
    f_mer: int
    cat: int
    mer: int

    @property
    def pair_key(self) -> tuple:
        return (self.cat, self.mer)


@dataclass(frozen=True)
class FraudParams:
    K: int = 50
    stride_normal: int = 15
    stride_fraud: int = 1
    L_local: int = 120
    J: int = 600
    rho_cat: float = 0.25
    rho_mer: float = 0.25
    eta_cat: float = 1.7
    eta_mer: float = 1.7
    rho_y_cat: float = 0.6
    rho_y_mer: float = 0.6
    half_life: float = 48.0
    prior_alpha: float = 10.0
    prior_beta: float = 0.5
    ablation: str = "full"
    y_mode: str = "last"
    min_length: int = 80
    epsilon: float = DEFAULT_EPSILON
    max_pairs: int = DEFAULT_MAX_PAIRS
    bandwidth_seed: int = 0

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ParameterError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.y_mode not in ("last", "mean"):
            raise ParameterError("y_mode must be 'last' or 'mean'")
        if min(self.stride_normal, self.stride_fraud, self.K, self.L_local, self.J) < 1:
            raise ParameterError("K, strides, L_local and J must be >= 1")
        multipliers = (self.rho_cat, self.rho_mer, self.eta_cat, self.eta_mer, self.rho_y_cat, self.rho_y_mer, self.half_life)
        if min(multipliers) <= 0:
            raise ParameterError("multipliers and half-life must be positive")


@dataclass(frozen=True)
class SplitPlan:
    lib_normal: frozenset
    val_normal: frozenset
    test_normal: frozenset
    val_fraud: frozenset
    test_fraud: frozenset
    seed: int

    def parts(self) -> dict:
        return {
            "lib_normal": self.lib_normal,
            "val_normal": self.val_normal,
            "test_normal": self.test_normal,
            "val_fraud": self.val_fraud,
            "test_fraud": self.test_fraud,
        }

    def assert_disjoint(self):
        parts = list(self.parts().items())
        for a in range(len(parts)):
            for b in range(a + 1, len(parts)):
                common = parts[a][1] & parts[b][1]
                if common:
                    raise AssertionError(f"splits {parts[a][0]} and {parts[b][0]} share {sorted(common)[:5]}")

    def sizes(self) -> dict:
        return {k: len(v) for k, v in self.parts().items()}


@dataclass
class NormalLibrary:
    windows: list
    sigma_x: float
    sigma_y: float
    rarity: dict
    customers: frozenset
    X: np.ndarray = field(repr=False)
    sqnorm: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    flags: np.ndarray = field(repr=False)
    cat: np.ndarray = field(repr=False)
    mer: np.ndarray = field(repr=False)
    pair_count: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.windows)


@dataclass
class AccountScore:
    customer: str
    score: Optional[float]
    window_scores: list
    n_skipped: int = 0
    n_fallback: int = 0


# ----------------------------------------------------------------------------
# preprocessing and windows
# ----------------------------------------------------------------------------

def _encode(values: Sequence[str]) -> dict:
    return {v: i for i, v in enumerate(sorted(set(values)))}


def _change_flags(codes: np.ndarray) -> np.ndarray:
    flags = np.zeros(codes.size, dtype=np.int8)
    flags[1:] = codes[1:] != codes[:-1]
    return flags


def preprocess(records: Iterable[TransactionRecord], min_length: int = 80) -> list:
    """Group transactions into per-account series.

    Rows are ordered by (customer, step), keeping file order within a step.
    Accounts with ``min_length`` or fewer transactions are dropped. Codes
    follow the sorted order of the raw category/merchant strings. An
    account is labelled fraudulent if any of its transactions is.
    """
    records = list(records)
    if not records:
        raise InputError("no transactions")
    cat_code = _encode(r.category for r in records)
    mer_code = _encode(r.merchant for r in records)
    by_customer: dict = {}
    for pos, r in enumerate(records):
        by_customer.setdefault(r.customer, []).append((r.step, pos, r))
    accounts = []
    for customer in sorted(by_customer):
        rows = sorted(by_customer[customer], key=lambda t: (t[0], t[1]))
        if len(rows) <= min_length:
            continue
        amounts = np.array([r.amount for _, _, r in rows], dtype=float)
        if not np.all(np.isfinite(amounts)):
            raise InputError(f"non-finite amount for customer {customer!r}")
        sd = amounts.std()
        degenerate = not sd > 0.0
        z = np.zeros_like(amounts) if degenerate else (amounts - amounts.mean()) / sd
        cats = np.array([cat_code[r.category] for _, _, r in rows], dtype=np.int64)
        mers = np.array([mer_code[r.merchant] for _, _, r in rows], dtype=np.int64)
        accounts.append(
            AccountSeries(
                customer=customer,
                steps=np.array([s for s, _, _ in rows], dtype=np.int64),
                amounts=amounts,
                z=z,
                dz=np.diff(z),
                cat_codes=cats,
                mer_codes=mers,
                f_cat=_change_flags(cats),
                f_mer=_change_flags(mers),
                label=int(any(r.fraud for _, _, r in rows)),
                degenerate=degenerate,
            )
        )
    return accounts


def stride_for(acc: AccountSeries, params: FraudParams) -> int:
    """Sampling stride: dense for fraud-labelled accounts, sparse otherwise."""
    return params.stride_fraud if acc.label == 1 else params.stride_normal


def make_windows(acc: AccountSeries, params: FraudParams, stride: Optional[int] = None) -> list:
    """Windows ending at positions K, K+s, K+2s, ... (1-based, inclusive).

    ``stride`` defaults to :func:`stride_for`. Scoring code passes it
    explicitly so that no label is read on the scoring path.
    """
    K = params.K
    s = stride_for(acc, params) if stride is None else int(stride)
    if s < 1:
        raise ParameterError("stride must be >= 1")
    T = len(acc)
    if T < K:
        log.warning("account %s has %d < K=%d transactions; no windows", acc.customer, T, K)
        return []
    abs_dz = np.abs(acc.dz)
    out = []
    for end in range(K, T + 1, s):
        last = end - 1
        if params.y_mode == "last":
            y = float(abs_dz[last - 1]) if last >= 1 else 0.0
        else:
            seg = abs_dz[max(end - K, 0):last]
            y = float(seg.mean()) if seg.size else 0.0
        out.append(
            WindowRecord(
                customer=acc.customer,
                end_step=end,
                step=int(acc.steps[last]),
                x=acc.z[end - K:end].copy(),
                y=y,
                f_cat=int(acc.f_cat[last]),
                f_mer=int(acc.f_mer[last]),
                cat=int(acc.cat_codes[last]),
                mer=int(acc.mer_codes[last]),
            )
        )
    return out


def _split_counts(n: int, proportions: Sequence[int]) -> list:
    total = sum(proportions)
    counts = [int(round(n * p / total)) for p in proportions[1:]]
    return [n - sum(counts)] + counts


def split_accounts(accounts: Sequence[AccountSeries], seed: int = 0) -> SplitPlan:
    """Disjoint, seeded account splits in the reference proportions.

    Normal accounts go to LIB/VAL/TEST in the ratio 1793:384:384 and fraud
    accounts to VAL/TEST in the ratio 389:722 (rounded; the first part takes
    the remainder).
    """
    normal = sorted(a.customer for a in accounts if a.label == 0)
    fraud = sorted(a.customer for a in accounts if a.label == 1)
    if len(normal) + len(fraud) != len(accounts):
        raise InputError("every account needs a 0/1 label to be split")
    n_lib, n_vn, n_tn = _split_counts(len(normal), NORMAL_SPLIT)
    n_vf, n_tf = _split_counts(len(fraud), FRAUD_SPLIT)
    if min(n_lib, n_vn, n_tn) < 1:
        raise SplitSizeError(f"{len(normal)} normal accounts are too few for LIB/VAL/TEST")
    if min(n_vf, n_tf) < 1:
        raise SplitSizeError(f"{len(fraud)} fraud accounts are too few for VAL/TEST")
    rng = np.random.default_rng(seed)
    normal = [normal[i] for i in rng.permutation(len(normal))]
    fraud = [fraud[i] for i in rng.permutation(len(fraud))]
    plan = SplitPlan(
        lib_normal=frozenset(normal[:n_lib]),
        val_normal=frozenset(normal[n_lib:n_lib + n_vn]),
        test_normal=frozenset(normal[n_lib + n_vn:]),
        val_fraud=frozenset(fraud[:n_vf]),
        test_fraud=frozenset(fraud[n_vf:]),
        seed=seed,
    )
    plan.assert_disjoint()
    return plan


def rarity_weight(f, alpha: float = 10.0, beta: float = 0.5):
    """Prior ``(f + alpha) ** -beta`` favouring rare (category, merchant) pairs."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ParameterError("frequency must be non-negative")
    out = (f + alpha) ** (-beta)
    return float(out) if out.ndim == 0 else out


def build_library(lib_accounts: Sequence[AccountSeries], params: FraudParams) -> NormalLibrary:
    """Reference windows, bandwidths and pair frequencies from normal accounts."""
    windows = []
    for acc in lib_accounts:
        windows.extend(make_windows(acc, params, stride=params.stride_normal))
    if not windows:
        raise InputError("library accounts produced no windows")
    X = np.vstack([w.x for w in windows])
    y = np.array([w.y for w in windows])
    sigma_x = median_heuristic(X, params.max_pairs, params.bandwidth_seed)
    sigma_y = median_heuristic(y, params.max_pairs, params.bandwidth_seed)
    rarity = Counter(w.pair_key for w in windows)
    return NormalLibrary(
        windows=windows,
        sigma_x=sigma_x,
        sigma_y=sigma_y,
        rarity=dict(rarity),
        customers=frozenset(a.customer for a in lib_accounts),
        X=X,
        sqnorm=np.einsum("ij,ij->i", X, X),
        y=y,
        flags=np.array([(w.f_cat, w.f_mer) for w in windows], dtype=np.int8),
        cat=np.array([w.cat for w in windows]),
        mer=np.array([w.mer for w in windows]),
        pair_count=np.array([rarity[w.pair_key] for w in windows], dtype=float),
    )


# ----------------------------------------------------------------------------
# mixtures and scoring
# ----------------------------------------------------------------------------

def _flags(windows) -> np.ndarray:
    return np.array([(w.f_cat, w.f_mer) for w in windows], dtype=np.int8).reshape(-1, 2)


def _mismatch(params: FraudParams, cat_q, mer_q, cat_r, mer_r) -> np.ndarray:
    return np.where(cat_q != cat_r, params.rho_cat, 1.0) * np.where(mer_q != mer_r, params.rho_mer, 1.0)


def _global_from_raw(raw: np.ndarray, d2: np.ndarray, J: int) -> MixtureWeights:
    n = raw.size
    if J < n:
        top = np.argpartition(-raw, J - 1)[:J]
        top = top[np.lexsort((top, -raw[top]))]
    else:
        top = np.arange(n)
    w = raw[top]
    total = w.sum()
    if total > 0.0:
        return MixtureWeights(top, w / total)
    nearest = np.argsort(d2, kind="stable")[: min(J, n)]
    return MixtureWeights(nearest, np.full(nearest.size, 1.0 / nearest.size), fallback=True)


def global_weights_batch(queries: Sequence[WindowRecord], lib: NormalLibrary, params: FraudParams) -> list:
    """:func:`global_mixture` for many queries sharing one distance product."""
    if not len(lib):
        raise InsufficientReferenceError("empty library")
    if not queries:
        return []
    Q = np.vstack([q.x for q in queries])
    d2 = np.einsum("ij,ij->i", Q, Q)[:, None] + lib.sqnorm[None, :] - 2.0 * (Q @ lib.X.T)
    np.maximum(d2, 0.0, out=d2)
    sim = np.exp(-d2 / (2.0 * lib.sigma_x**2))
    prior = 1.0 if params.ablation == "no_rarity" else rarity_weight(lib.pair_count, params.prior_alpha, params.prior_beta)
    out = []
    for r, q in enumerate(queries):
        raw = sim[r] * _mismatch(params, q.cat, q.mer, lib.cat, lib.mer) * prior
        out.append(_global_from_raw(raw, d2[r], params.J))
    return out


def global_mixture(x: WindowRecord, lib: NormalLibrary, params: FraudParams) -> MixtureWeights:
    """Top-``J`` renormalized weights over library windows for query ``x``.

    Raw weight of library window ``w``: ``rbf(x, w; sigma_x)``, times
    ``rho_cat``/``rho_mer`` for each code that differs from the query's,
    times the rarity prior of ``w``'s (category, merchant) pair (unless the
    ``no_rarity`` ablation is active). If every weight underflows, the ``J``
    nearest windows get uniform weight and the result is flagged.
    """
    return global_weights_batch([x], lib, params)[0]


def local_mixture(x: WindowRecord, history: Sequence[WindowRecord], params: FraudParams, sigma_x: float) -> MixtureWeights:
    """Weights over the most recent ``L_local`` windows strictly before ``x``.

    Indices refer to positions in ``history``.
    """
    cand = [i for i, h in enumerate(history) if h.end_step < x.end_step]
    if any(history[i].customer != x.customer for i in cand):
        raise InputError("local history must come from the query's own account")
    if not cand:
        raise InsufficientReferenceError(f"no past windows before end_step {x.end_step}")
    cand.sort(key=lambda i: history[i].end_step)
    cand = np.array(cand[-params.L_local:])
    H = np.vstack([history[i].x for i in cand])
    diff = H - x.x[None, :]
    w = np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * sigma_x**2))
    cats = np.array([history[i].cat for i in cand])
    mers = np.array([history[i].mer for i in cand])
    w = w * _mismatch(params, x.cat, x.mer, cats, mers)
    if params.ablation != "no_decay":
        dt = np.array([x.end_step - history[i].end_step for i in cand], dtype=float)
        w = w * np.exp2(-dt / params.half_life)
    if params.ablation != "no_flag":
        fl = _flags([history[i] for i in cand])
        w = w * np.where(fl[:, 0] == x.f_cat, params.eta_cat, 1.0) * np.where(fl[:, 1] == x.f_mer, params.eta_mer, 1.0)
    total = w.sum()
    if total > 0.0:
        return MixtureWeights(cand, w / total)
    return MixtureWeights(cand, np.full(cand.size, 1.0 / cand.size), fallback=True)


def _flag_codes(tags) -> np.ndarray:
    tags = np.asarray(tags)
    return 2 * tags[:, 0].astype(np.intp) + tags[:, 1].astype(np.intp)


def flag_gate(params: FraudParams) -> GroupGate:
    """Pairwise multiplier ``rho_y^[flags differ]`` per flag channel.

    Tags are ``(f_cat, f_mer)`` rows; the four joint flag values index a
    4x4 multiplier table.
    """
    bits = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
    table = (
        np.where(bits[:, 0][:, None] != bits[:, 0][None, :], params.rho_y_cat, 1.0)
        * np.where(bits[:, 1][:, None] != bits[:, 1][None, :], params.rho_y_mer, 1.0)
    )
    return GroupGate(table, _flag_codes)


def score_window(
    x: WindowRecord,
    p: MixtureWeights,
    q: MixtureWeights,
    history: Sequence[WindowRecord],
    lib: NormalLibrary,
    params: FraudParams,
) -> float:
    """Gated C-CSD between the local mixture ``p`` and the global mixture ``q``."""
    if len(p) == 0 or len(q) == 0:
        raise InsufficientReferenceError("empty mixture")
    past = [history[i] for i in p.indices]
    if any(h.end_step >= x.end_step for h in past):
        raise AssertionError(f"local mixture of {x.customer}@{x.end_step} reaches into the future")
    y_p = np.array([h.y for h in past])
    y_q = lib.y[q.indices]
    if params.ablation == "no_flag":
        return ccsd_mixture(p, q, y_p, y_q, lib.sigma_y, epsilon=params.epsilon)
    return ccsd_mixture(
        p, q, y_p, y_q, lib.sigma_y,
        gate=flag_gate(params), tags_p=_flags(past), tags_q=lib.flags[q.indices],
        epsilon=params.epsilon,
    )


def score_account(acc: AccountSeries, lib: NormalLibrary, params: FraudParams, stride: int) -> AccountScore:
    """Max window score over an account's windows that have some past.

    No label is consulted; ``stride`` is supplied by the caller.
    """
    windows = make_windows(acc, params, stride=stride)
    queries = windows[1:]
    skipped = 1 if windows else 0
    q_mix = global_weights_batch(queries, lib, params)
    scores = []
    n_fallback = 0
    for x, q in zip(queries, q_mix):
        try:
            p = local_mixture(x, windows, params, lib.sigma_x)
        except InsufficientReferenceError:
            skipped += 1
            continue
        n_fallback += int(p.fallback) + int(q.fallback)
        scores.append((x.end_step, score_window(x, p, q, windows, lib, params)))
    account = max((s for _, s in scores), default=None)
    return AccountScore(acc.customer, account, scores, n_skipped=skipped, n_fallback=n_fallback)


# ----------------------------------------------------------------------------
# pipeline
# ----------------------------------------------------------------------------

@dataclass
class PipelineResult:
    plan: SplitPlan
    sigma_x: float
    sigma_y: float
    n_library_windows: int
    threshold: float
    reports: dict
    scores: dict
    audit: list

    def to_dict(self) -> dict:
        return {
            "split_sizes": self.plan.sizes(),
            "split_seed": self.plan.seed,
            "sigma_x": self.sigma_x,
            "sigma_y": self.sigma_y,
            "n_library_windows": self.n_library_windows,
            "threshold": self.threshold,
            "reports": {v: {s: r.to_dict() for s, r in splits.items()} for v, splits in self.reports.items()},
            "audit": self.audit,
        }


def score_accounts(accounts: Sequence[AccountSeries], lib: NormalLibrary, params: FraudParams, strides: dict) -> dict:
    return {a.customer: score_account(a, lib, params, strides[a.customer]) for a in accounts}


def run_pipeline(
    accounts: Sequence[AccountSeries],
    params: Optional[FraudParams] = None,
    seed: int = 0,
    variants: Sequence[str] = ("full",),
) -> PipelineResult:
    """Split, build the library, score VAL/TEST, pick the threshold, evaluate.

    The F1-optimal threshold is chosen on VAL for the full model and reused
    unchanged for every variant on both VAL and TEST.
    """
    params = params or FraudParams()
    variants = list(dict.fromkeys(["full", *variants]))
    audit = []
    plan = split_accounts(accounts, seed)
    audit.append({"stage": "split", "sizes": plan.sizes(), "disjoint": True})
    by_id = {a.customer: a for a in accounts}
    lib_accounts = [by_id[c] for c in sorted(plan.lib_normal)]
    library_params = replace(params, ablation="full")
    lib = build_library(lib_accounts, library_params)
    provenance = all(w.customer in plan.lib_normal for w in lib.windows)
    if not provenance:
        raise AssertionError("library contains windows from outside LIB_NORMAL")
    audit.append({
        "stage": "library",
        "n_windows": len(lib),
        "sigma_x": lib.sigma_x,
        "sigma_y": lib.sigma_y,
        "provenance_lib_normal_only": provenance,
    })
    split_members = {
        "val": sorted(plan.val_normal | plan.val_fraud),
        "test": sorted(plan.test_normal | plan.test_fraud),
    }
    # windowing density is fixed from the split membership before scoring
    strides = {c: (params.stride_fraud if c in plan.val_fraud | plan.test_fraud else params.stride_normal)
               for members in split_members.values() for c in members}
    reports, all_scores = {}, {}
    threshold = None
    for variant in variants:
        vparams = replace(params, ablation=variant)
        reports[variant], all_scores[variant] = {}, {}
        per_split = {}
        for split, members in split_members.items():
            audit.append({"stage": "score", "variant": variant, "split": split, "after_library": True})
            result = score_accounts([by_id[c] for c in members], lib, vparams, strides)
            excluded = [c for c, r in result.items() if r.score is None]
            if excluded:
                audit.append({"stage": "exclude", "variant": variant, "split": split, "customers": excluded})
            kept = [c for c in members if result[c].score is not None]
            s = np.array([result[c].score for c in kept])
            y = np.array([by_id[c].label for c in kept])
            per_split[split] = (kept, s, y)
            all_scores[variant][split] = result
        if variant == "full":
            _, s_val, y_val = per_split["val"]
            threshold, f1 = best_f1_threshold(s_val, y_val)
            audit.append({"stage": "threshold", "split": "val", "threshold": threshold, "val_f1": f1})
        for split, (_, s, y) in per_split.items():
            reports[variant][split] = evaluate(s, y, threshold)
    return PipelineResult(plan, lib.sigma_x, lib.sigma_y, len(lib), threshold, reports, all_scores, audit)
