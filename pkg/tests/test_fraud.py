from dataclasses import replace

import numpy as np
import pytest

import oracles
from ccsd.errors import InsufficientReferenceError, ParameterError, SplitSizeError
from ccsd.estimator import MixtureWeights, ccsd_mixture
from ccsd.fraud import (
    ABLATIONS,
    FraudParams,
    TransactionRecord,
    WindowRecord,
    build_library,
    flag_gate,
    global_mixture,
    local_mixture,
    make_windows,
    preprocess,
    rarity_weight,
    score_account,
    score_window,
    split_accounts,
)
from ccsd.kernels import rbf


def _records(customer, n, fraud=0, seed=0, cats=("a", "b"), mers=("m1", "m2")):
    rng = np.random.default_rng(seed)
    return [
        TransactionRecord(
            t, customer, mers[int(rng.integers(len(mers)))], cats[int(rng.integers(len(cats)))],
            float(np.round(rng.uniform(5, 50), 2)), fraud,
        )
        for t in range(n)
    ]


def _account(n, seed=0, customer="C1", fraud=0, **kw):
    return preprocess(_records(customer, n, fraud, seed, **kw), min_length=0)[0]


def _window(end, x, y=0.0, f=(0, 0), cat=0, mer=0, customer="C1"):
    return WindowRecord(customer, end, end, np.asarray(x, dtype=float), y, f[0], f[1], cat, mer)


# -- preprocessing and windows --------------------------------------------------------------

def test_preprocess_length_boundary():
    recs = _records("A", 80) + _records("B", 81, seed=1)
    kept = preprocess(recs)
    assert [a.customer for a in kept] == ["B"]


def test_preprocess_fields():
    recs = [TransactionRecord(t, "A", "m", "c" if t % 3 else "d", float(t + 1), int(t == 4)) for t in range(6)][::-1]
    acc = preprocess(recs, min_length=0)[0]
    assert list(acc.steps) == list(range(6))
    assert abs(acc.z.mean()) < 1e-12 and abs(acc.z.std() - 1) < 1e-12
    np.testing.assert_allclose(acc.dz, np.diff(acc.z))
    assert list(acc.f_cat) == [0, 1, 0, 1, 1, 0]
    assert list(acc.f_mer) == [0] * 6
    assert acc.label == 1
    flat = preprocess([TransactionRecord(t, "F", "m", "c", 3.0) for t in range(5)], min_length=0)[0]
    assert flat.degenerate and np.all(flat.z == 0)


def test_make_windows_counts():
    p = FraudParams(K=50)
    assert len(make_windows(_account(50), p, stride=1)) == 1
    w = make_windows(_account(80), p, stride=15)
    assert [x.end_step for x in w] == [50, 65, 80]
    acc = _account(130)
    assert len(make_windows(acc, p, stride=15)) == (130 - 50) // 15 + 1
    assert make_windows(_account(30), p, stride=1) == []
    last = w[-1]
    acc80 = _account(80)
    assert np.array_equal(last.x, acc80.z[30:80])
    assert last.y == abs(acc80.dz[78])
    assert (last.f_cat, last.cat) == (acc80.f_cat[79], acc80.cat_codes[79])


def test_make_windows_mean_mode():
    acc = _account(60)
    w = make_windows(acc, FraudParams(K=50, y_mode="mean"), stride=10)
    assert w[0].y == pytest.approx(np.abs(acc.dz[:49]).mean())


def test_params_validation():
    with pytest.raises(ParameterError):
        FraudParams(ablation="nope")
    with pytest.raises(ParameterError):
        FraudParams(stride_normal=0)
    with pytest.raises(ParameterError):
        FraudParams(rho_cat=0.0)


# -- splits -----------------------------------------------------------------------------------

def _labelled(n_normal, n_fraud):
    accs = [_account(20, seed=i, customer=f"N{i:03d}") for i in range(n_normal)]
    accs += [_account(20, seed=i, customer=f"F{i:03d}", fraud=1) for i in range(n_fraud)]
    return accs


def test_split_disjoint_deterministic_proportional():
    accs = _labelled(40, 20)
    plan = split_accounts(accs, seed=3)
    plan.assert_disjoint()
    assert plan == split_accounts(accs, seed=3)
    assert plan != split_accounts(accs, seed=4)
    sizes = plan.sizes()
    assert sum(sizes.values()) == 60
    assert sizes["val_normal"] == round(40 * 384 / 2561)
    assert sizes["val_fraud"] == 20 - round(20 * 722 / 1111)


def test_split_reference_sizes():
    from ccsd.fraud import _split_counts

    assert _split_counts(2561, (1793, 384, 384)) == [1793, 384, 384]
    assert _split_counts(1111, (389, 722)) == [389, 722]


def test_split_too_small():
    with pytest.raises(SplitSizeError):
        split_accounts(_labelled(2, 5))


# -- rarity and library -------------------------------------------------------------------------

def test_rarity_weight():
    assert rarity_weight(0) == pytest.approx(0.31623, abs=1e-5)
    assert rarity_weight(90) == pytest.approx(0.1, abs=1e-15)
    w = rarity_weight(np.arange(50))
    assert np.all(np.diff(w) < 0)
    with pytest.raises(ParameterError):
        rarity_weight(-1)


def test_library_counts_and_provenance():
    accs = [_account(120, seed=i, customer=f"L{i}") for i in range(3)]
    lib = build_library(accs, FraudParams())
    assert sum(lib.rarity.values()) == len(lib)
    assert all(w.customer in lib.customers for w in lib.windows)
    assert lib.sigma_x > 0 and lib.sigma_y > 0
    assert np.allclose(lib.sqnorm, (lib.X**2).sum(1))


# -- mixtures -------------------------------------------------------------------------------------

def _toy_library(params, n=5, seed=0):
    accs = [_account(50 + 15 * (n - 1), seed=seed, customer="L0", cats=("a", "b", "c"), mers=("m1", "m2"))]
    lib = build_library(accs, params)
    assert len(lib) == n
    return lib


def _subset(lib, idx):
    idx = np.asarray(idx)
    return replace(
        lib, windows=[lib.windows[i] for i in idx], X=lib.X[idx], sqnorm=lib.sqnorm[idx], y=lib.y[idx],
        flags=lib.flags[idx], cat=lib.cat[idx], mer=lib.mer[idx], pair_count=lib.pair_count[idx],
    )


def test_global_single_window_library():
    p = FraudParams()
    lib = _subset(_toy_library(p, n=5), [3])
    q = global_mixture(_window(50, np.zeros(50), cat=99, mer=99), lib, p)
    assert q.weights.tolist() == [1.0]


def test_global_matches_multiplier_chain():
    p = FraudParams(J=600)
    lib = _toy_library(p, n=5)
    rng = np.random.default_rng(1)
    x = _window(50, lib.windows[2].x + 0.3 * rng.normal(size=50), cat=lib.windows[0].cat, mer=lib.windows[1].mer)
    raw = []
    for w in lib.windows:
        v = rbf(x.x, w.x, lib.sigma_x)
        v *= p.rho_cat if w.cat != x.cat else 1.0
        v *= p.rho_mer if w.mer != x.mer else 1.0
        v *= (lib.rarity[w.pair_key] + p.prior_alpha) ** (-p.prior_beta)
        raw.append(v)
    expected = np.array(raw) / sum(raw)
    q = global_mixture(x, lib, p)
    assert sorted(q.indices.tolist()) == list(range(5))
    got = np.zeros(5)
    got[q.indices] = q.weights
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-15)
    assert abs(q.weights.sum() - 1.0) <= 1e-12
    # truncation keeps the J largest raw weights
    top2 = global_mixture(x, lib, replace(p, J=2))
    assert set(top2.indices.tolist()) == set(np.argsort(-np.array(raw))[:2].tolist())
    no_prior = global_mixture(x, lib, replace(p, ablation="no_rarity"))
    assert not np.allclose(np.sort(no_prior.weights), np.sort(q.weights))


def test_global_underflow_fallback():
    p = FraudParams(J=3)
    lib = _toy_library(p, n=5)
    far = _window(50, np.full(50, 1e3))
    q = global_mixture(far, lib, p)
    assert q.fallback and len(q) == 3
    np.testing.assert_allclose(q.weights, 1 / 3)


def test_local_single_past_and_strict_past():
    p = FraudParams()
    hist = [_window(50, np.zeros(3)), _window(65, np.ones(3)), _window(80, np.ones(3))]
    m = local_mixture(hist[1], hist, p, 1.0)
    assert m.indices.tolist() == [0] and m.weights.tolist() == [1.0]
    m = local_mixture(hist[2], hist, p, 1.0)
    assert all(hist[i].end_step < 80 for i in m.indices)
    with pytest.raises(InsufficientReferenceError):
        local_mixture(hist[0], hist, p, 1.0)


def test_local_decay_halves_after_half_life():
    p = FraudParams(eta_cat=1.0, eta_mer=1.0)
    x = _window(200, np.zeros(3))
    hist = [_window(104, np.ones(3)), _window(152, np.ones(3)), x]
    m = local_mixture(x, hist, p, 1.0)
    w = dict(zip(m.indices.tolist(), m.weights.tolist()))
    assert w[0] / w[1] == pytest.approx(0.5, rel=1e-12)
    flat = local_mixture(x, hist, replace(p, ablation="no_decay"), 1.0)
    np.testing.assert_allclose(flat.weights, 0.5)


def test_local_boosts_and_history_cap():
    p = FraudParams(L_local=2, half_life=1e9)
    x = _window(100, np.zeros(3), f=(1, 0))
    hist = [_window(10, np.zeros(3), f=(0, 0)), _window(20, np.zeros(3), f=(1, 0)), _window(30, np.zeros(3), f=(0, 1)), x]
    m = local_mixture(x, hist, p, 1.0)
    assert m.indices.tolist() == [1, 2]
    # index 1 matches both flags, index 2 matches neither
    assert m.weights[0] / m.weights[1] == pytest.approx(1.7**2, rel=1e-6)
    m = local_mixture(x, hist, replace(p, ablation="no_flag"), 1.0)
    np.testing.assert_allclose(m.weights, 0.5)


def test_local_rejects_other_accounts():
    from ccsd.errors import InputError

    x = _window(100, np.zeros(3))
    with pytest.raises(InputError):
        local_mixture(x, [_window(10, np.zeros(3), customer="other"), x], FraudParams(), 1.0)


# -- window scoring -------------------------------------------------------------------------------

def test_score_window_toy_gated():
    p = FraudParams()
    lib = _toy_library(p, n=5)
    hist = [_window(10 * (i + 1), np.zeros(50), y=0.3 * i, f=(i % 2, (i // 2) % 2)) for i in range(3)]
    x = _window(40, np.zeros(50), f=(1, 0))
    hist.append(x)
    pw = MixtureWeights([0, 1, 2], [0.2, 0.3, 0.5])
    qw = MixtureWeights([0, 3, 4], [0.5, 0.25, 0.25])
    got = score_window(x, pw, qw, hist, lib, p)
    tp = [(h.f_cat, h.f_mer) for h in hist[:3]]
    tq = [tuple(lib.flags[i]) for i in (0, 3, 4)]

    def g(s, t):
        return (0.6 if s[0] != t[0] else 1.0) * (0.6 if s[1] != t[1] else 1.0)

    pp, qq, pq = oracles.gated_double_sum(
        [0.2, 0.3, 0.5], [0.5, 0.25, 0.25], [h.y for h in hist[:3]], lib.y[[0, 3, 4]].tolist(), lib.sigma_y, tp, tq, g
    )
    assert got == pytest.approx(oracles.score(pp, qq, pq, p.epsilon), abs=1e-12)
    assert got >= 0.0


def test_score_window_closed_forms():
    p = FraudParams()
    gate = flag_gate(p)
    same = ccsd_mixture([1.0], [1.0], [0.0], [2.0], 1.0, gate, np.array([[0, 1]]), np.array([[0, 1]]), epsilon=0.0)
    assert same == pytest.approx(2.0, abs=1e-15)
    w = MixtureWeights([0, 1], [0.4, 0.6])
    tags = np.array([[0, 1], [1, 1]])
    assert ccsd_mixture(w, w, [0.2, 1.0], [0.2, 1.0], 0.5, gate, tags, tags) == 0.0


def test_score_window_refuses_future_support():
    p = FraudParams()
    lib = _toy_library(p, n=2)
    hist = [_window(10, np.zeros(50)), _window(20, np.zeros(50))]
    with pytest.raises(AssertionError):
        score_window(hist[0], MixtureWeights([1], [1.0]), MixtureWeights([0], [1.0]), hist, lib, p)


def test_ablation_consistency_when_flags_equal():
    """With every flag equal, no_flag and full coincide on the same mixtures."""
    p = FraudParams()
    lib = _toy_library(p, n=3)
    lib.flags[:] = 0
    hist = [_window(10 * (i + 1), np.zeros(50), y=0.2 * i) for i in range(4)]
    x = hist[-1]
    pw = local_mixture(x, hist, p, lib.sigma_x)
    # uniform flag matches only rescale every boost, so the normalized weights agree
    np.testing.assert_allclose(pw.weights, local_mixture(x, hist, replace(p, ablation="no_flag"), lib.sigma_x).weights, rtol=1e-12)
    qw = MixtureWeights([0, 1, 2], [0.3, 0.3, 0.4])
    full = score_window(x, pw, qw, hist, lib, p)
    nof = score_window(x, pw, qw, hist, lib, replace(p, ablation="no_flag"))
    assert full == nof


# -- account scoring ----------------------------------------------------------------------------------

def test_score_account_is_max_of_window_oracle():
    p = FraudParams(K=50)
    lib = build_library([_account(140, seed=i, customer=f"L{i}") for i in range(2)], p)
    for seed in (5, 6):
        acc = _account(110, seed=seed, customer="Q")
        res = score_account(acc, lib, p, stride=10)
        windows = make_windows(acc, p, stride=10)
        expected = []
        for x in windows[1:]:
            pw = local_mixture(x, windows, p, lib.sigma_x)
            qw = global_mixture(x, lib, p)
            expected.append(score_window(x, pw, qw, windows, lib, p))
        # batched and single-query distance products agree to rounding
        np.testing.assert_allclose([s for _, s in res.window_scores], expected, rtol=1e-12, atol=1e-14)
        assert res.score == pytest.approx(max(expected), rel=1e-12)
        assert res.n_skipped == 1


def test_score_account_max_is_monotone():
    p = FraudParams(K=50)
    lib = build_library([_account(140, seed=i, customer=f"L{i}") for i in range(2)], p)
    acc = _account(110, seed=7, customer="Q")
    sparse = score_account(acc, lib, p, stride=20)
    dense = score_account(acc, lib, p, stride=10)
    # stride 10 windows are a superset of stride 20 ones, with at least as much history
    assert dense.score >= min(s for _, s in sparse.window_scores)
    short = score_account(_account(50, seed=1, customer="S"), lib, p, stride=1)
    assert short.score is None


# -- pipeline on the bundled fixture -------------------------------------------------------------------

def test_pipeline_audit(toy_pipeline):
    r = toy_pipeline
    r.plan.assert_disjoint()
    stages = [a["stage"] for a in r.audit]
    assert stages[:2] == ["split", "library"]
    assert r.audit[1]["provenance_lib_normal_only"] is True
    assert stages.index("threshold") > stages.index("score")
    assert set(r.reports) == set(ABLATIONS)
    for variant in ABLATIONS:
        assert r.reports[variant]["val"].threshold == r.threshold
        assert r.reports[variant]["test"].threshold == r.threshold


def test_pipeline_fixture_values(toy_pipeline):
    r = toy_pipeline
    assert r.plan.sizes() == {"lib_normal": 14, "val_normal": 3, "test_normal": 3, "val_fraud": 4, "test_fraud": 6}
    full = r.reports["full"]
    assert full["test"].auc == 1.0 and full["test"].recall == 1.0
    assert full["val"].auc == 1.0
    assert r.threshold == pytest.approx(2.8413643585785695, rel=1e-9)


def test_label_shuffle_leaves_scores_identical(toy_accounts, toy_pipeline):
    rng = np.random.default_rng(0)
    lib_accs = [a for a in toy_accounts if a.customer in toy_pipeline.plan.lib_normal]
    lib = build_library(lib_accs, FraudParams())
    strides = {}
    for c in toy_pipeline.plan.val_fraud | toy_pipeline.plan.test_fraud:
        strides[c] = 1
    for c in toy_pipeline.plan.val_normal | toy_pipeline.plan.test_normal:
        strides[c] = 15
    for acc in toy_accounts:
        if acc.customer not in strides:
            continue
        shuffled = replace(acc, label=int(rng.integers(2)))
        a = score_account(acc, lib, FraudParams(), strides[acc.customer])
        b = score_account(shuffled, lib, FraudParams(), strides[acc.customer])
        assert a.score == b.score and a.window_scores == b.window_scores
