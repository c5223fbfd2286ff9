"""Small seeded synthetic corpora used by the tests, the CLI fixtures and the
demo scripts."""

from __future__ import annotations

import numpy as np

from .cluster import LabeledSeries
from .fraud import TransactionRecord

CATEGORIES = (
    "es_transportation", "es_food", "es_health", "es_wellnessandbeauty", "es_fashion",
    "es_barsandrestaurants", "es_hyper", "es_sportsandtoys", "es_tech", "es_home",
)
RARE_CATEGORIES = ("es_travel", "es_leisure", "es_hotelservices")


def sine_square_series(n_per_class: int = 3, length: int = 40, noise: float = 0.1, seed: int = 0, prefix: str = "s") -> list:
    """Two classes: a noisy sine wave (label 1) and a noisy square wave (label 2)."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 2.0 * np.pi, length)
    out = []
    for k in range(n_per_class):
        phase = rng.uniform(-0.2, 0.2)
        out.append(LabeledSeries(f"{prefix}{len(out)}", np.sin(t + phase) + noise * rng.standard_normal(length), 1))
        out.append(LabeledSeries(f"{prefix}{len(out)}", np.sign(np.sin(2 * (t + phase))) + noise * rng.standard_normal(length), 2))
    return out


def write_ucr(path, series, delimiter: str = "\t"):
    with open(path, "w") as fh:
        for s in series:
            fh.write(delimiter.join([str(s.label)] + [repr(float(v)) for v in s.values]) + "\n")


def _habits(rng, n_merchants: int = 40):
    cats = rng.choice(len(CATEGORIES), size=3, replace=False)
    mers = rng.choice(n_merchants, size=3, replace=False)
    base = rng.uniform(20.0, 60.0)
    return cats, mers, base


def transactions(
    n_normal: int = 20,
    n_fraud: int = 10,
    length_range: tuple = (100, 140),
    n_spikes: int = 15,
    spike_scale: float = 10.0,
    stay: float = 0.9,
    ar: float = 0.95,
    volatility: float = 0.1,
    seed: int = 0,
) -> list:
    """BankSim-like transactions with known anomalies.

    Every account moves between three habitual (category, merchant) pairs
    (staying put with probability ``stay``) and spends amounts whose log
    follows a slow AR(1) around an account-level base. Fraud accounts also
    get ``n_spikes`` non-adjacent transactions in the second half of their history with
    amounts ``spike_scale`` times the base, at one category and merchant
    (drawn per account) that no normal account uses; those rows carry ``fraud=1``.
    """
    rng = np.random.default_rng(seed)
    records = []
    for a in range(n_normal + n_fraud):
        is_fraud = a >= n_normal
        customer = f"C{1000 + a}"
        T = int(rng.integers(length_range[0], length_range[1] + 1))
        steps = np.sort(rng.integers(0, 180, size=T))
        cats, mers, base = _habits(rng)
        spikes = set()
        rare_cat = RARE_CATEGORIES[int(rng.integers(len(RARE_CATEGORIES)))]
        rare_mer = f"M9{int(rng.integers(100)):03d}"
        if is_fraud:
            # never adjacent, so every spike is a jump up from ordinary spending
            slots = np.arange(T // 2, T, 2)
            spikes = set(rng.choice(slots, size=min(n_spikes, slots.size), replace=False).tolist())
        h = int(rng.integers(3))
        u = 0.0
        for t in range(T):
            if rng.random() > stay:
                h = int(rng.integers(3))
            u = ar * u + volatility * rng.standard_normal()
            if t in spikes:
                cat, mer = rare_cat, rare_mer
                amount = spike_scale * base * rng.uniform(0.8, 1.2)
                fraud = 1
            else:
                cat = CATEGORIES[cats[h]]
                mer = f"M{mers[h]:04d}"
                amount = base * np.exp(u)
                fraud = 0
            records.append(TransactionRecord(int(steps[t]), customer, mer, cat, round(float(amount), 2), fraud))
    return records


def write_banksim(path, records):
    """Write records in the quoted BankSim CSV layout (with extra columns)."""
    with open(path, "w") as fh:
        fh.write('"step","customer","age","gender","zipcodeOri","merchant","zipMerchant","category","amount","fraud"\n')
        for r in records:
            fh.write(
                f"{r.step},'{r.customer}','3','F','28007','{r.merchant}','28007','{r.category}',{r.amount},{r.fraud}\n"
            )
