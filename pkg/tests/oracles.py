"""Slow, loop-based reference implementations used as test oracles.

Nothing here imports from the package: each function re-derives its
quantity from the definition so that agreement is meaningful.
"""

import itertools
import math


def k(u, v, s):
    if isinstance(u, (int, float)):
        d2 = (u - v) ** 2
    else:
        d2 = sum((a - b) ** 2 for a, b in zip(u, v))
    return math.exp(-d2 / (2.0 * s * s))


def nw(ref, sample, tau):
    rows = []
    for r in ref:
        w = [k(r, x, tau) for x in sample]
        tot = sum(w)
        rows.append([v / tot for v in w])
    return rows


def quad_sum(A, B, L):
    """(1/n_r) sum_l sum_i sum_j a_li b_lj L_ij."""
    n_r = len(A)
    tot = 0.0
    for l in range(n_r):
        for i in range(len(A[l])):
            for j in range(len(B[l])):
                tot += A[l][i] * B[l][j] * L[i][j]
    return tot / n_r


def gram(X, Y, s):
    return [[k(x, y, s) for y in Y] for x in X]


def score(pp, qq, pq, eps):
    pp, qq, pq = pp + eps, qq + eps, pq + eps
    if pq <= 0:
        return math.inf
    return -math.log(pq / math.sqrt(pp * qq))


def ccsd_series(a, b, tau, sigma, eps):
    T = len(a)
    x = [float(t) for t in range(1, T + 1)]
    A = nw(x, x, tau)
    pp = quad_sum(A, A, gram(a, a, sigma))
    qq = quad_sum(A, A, gram(b, b, sigma))
    pq = quad_sum(A, A, gram(a, b, sigma))
    return score(pp, qq, pq, eps)


def gated_double_sum(p, q, yp, yq, sy, tp, tq, gate):
    def s(w1, w2, y1, y2, t1, t2):
        return sum(
            w1[i] * w2[j] * k(y1[i], y2[j], sy) * gate(t1[i], t2[j])
            for i in range(len(w1))
            for j in range(len(w2))
        )

    return s(p, p, yp, yp, tp, tp), s(q, q, yq, yq, tq, tq), s(p, q, yp, yq, tp, tq)


def dtw_paths(a, b, window=None):
    """Minimum over all monotone, continuous alignment paths (brute force)."""
    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, cost):
        nonlocal best
        if window is not None and abs(i - j) > window:
            return
        cost += abs(a[i] - b[j])
        if i == n - 1 and j == m - 1:
            best = min(best, cost)
            return
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best


def kmedoids_optimum(D, k_):
    n = len(D)
    return min(
        sum(min(D[i][m] for m in med) for i in range(n))
        for med in itertools.combinations(range(n), k_)
    )


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    tot = 0.0
    for p in pos:
        for q in neg:
            tot += 1.0 if p > q else 0.5 if p == q else 0.0
    return tot / (len(pos) * len(neg))


def ap_prefix(scores, labels):
    """Step-wise AP over a stable descending sort (ties by original index)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(labels)
    tp = 0
    terms = []
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            tp += 1
            terms.append(tp / rank)
    return math.fsum(terms) / n_pos


def f1_at(scores, labels, thr):
    tp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s < thr and y == 1)
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def best_f1_scan(scores, labels):
    """Highest F1 over observed thresholds; the lowest threshold wins ties."""
    best = (-1.0, None)
    for thr in sorted(set(scores)):
        f = f1_at(scores, labels, thr)
        if f > best[0]:
            best = (f, thr)
    return best[1], best[0]
