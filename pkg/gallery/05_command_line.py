"""Driving both experiments from the command line interface.

The same runs are available as ``python -m ccsd cluster`` and
``python -m ccsd fraud``. Each writes a JSON report into ``--out``. This
script writes small synthetic inputs to a temporary directory, calls the
entry point in-process and prints the headline numbers.
"""

import json
import tempfile
from pathlib import Path

from ccsd.cli import main
from ccsd.synthetic import sine_square_series, transactions, write_banksim, write_ucr

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    write_ucr(tmp / "toy_TRAIN.tsv", sine_square_series(4, seed=1, prefix="tr"))
    write_ucr(tmp / "toy_TEST.tsv", sine_square_series(4, seed=2, prefix="te"))
    write_banksim(tmp / "bank.csv", transactions(seed=0))

    rc = main(["cluster", "--train", str(tmp / "toy_TRAIN.tsv"), "--test", str(tmp / "toy_TEST.tsv"),
               "--method", "dtw", "--windows", "none,5", "--out", str(tmp / "cluster")])
    report = json.loads((tmp / "cluster" / "cluster_report.json").read_text())
    print(f"cluster exit {rc}: test NMI {report['test']['nmi_mean']:.3f} with {report['chosen']}")

    # A JSON config supplies defaults and explicit flags override it.
    cfg = tmp / "fraud.json"
    cfg.write_text(json.dumps({"data": str(tmp / "bank.csv"), "params": {"J": 200}}))
    rc = main(["fraud", "--config", str(cfg), "--variant", "no_decay", "--scores", "--out", str(tmp / "fraud")])
    report = json.loads((tmp / "fraud" / "fraud_report.json").read_text())
    print(f"fraud exit {rc}: TEST AUC {report['reports']['full']['test']['auc']:.3f}, "
          f"no_decay AUC {report['reports']['no_decay']['test']['auc']:.3f}")
    print("written:", sorted(p.name for p in (tmp / "fraud").iterdir()))

    # Errors map to distinct exit codes: 2 configuration, 3 data, 4 numerical.
    rc = main(["fraud", "--data", str(tmp / "missing.csv"), "--out", str(tmp)])
    print(f"missing input exits with {rc}")
