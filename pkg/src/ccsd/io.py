"""Readers for UCR-style series files and BankSim-style transaction CSVs, plus
deterministic report writers."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .cluster import LabeledSeries
from .errors import ParseError, SchemaError
from .fraud import TransactionRecord

BANKSIM_COLUMNS = ("step", "customer", "merchant", "category", "amount", "fraud")


def _sniff_delimiter(line: str) -> Optional[str]:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # any whitespace


def _parse_label(cell: str, path, lineno: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: label {cell!r} is not numeric") from None
    if not value.is_integer():
        raise ParseError(f"{path}:{lineno}: label {cell!r} is not an integer")
    return int(value)


def read_ucr_file(path, split: str = "", allow_ragged: bool = False) -> list:
    """One series per row: integer label, then the values.

    Tab, comma and whitespace delimiters are recognised from the first
    non-blank row. Rows of differing length raise :class:`ParseError`
    unless ``allow_ragged``; then trailing NaN padding is also stripped.
    """
    path = Path(path)
    out = []
    width = None
    delim = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if delim is None and width is None:
                delim = _sniff_delimiter(line)
            cells = [c.strip() for c in (line.split(delim) if delim else line.split())]
            if len(cells) < 2:
                raise ParseError(f"{path}:{lineno}: row has no values")
            label = _parse_label(cells[0], path, lineno)
            try:
                values = np.array([float(c) for c in cells[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if allow_ragged:
                finite = np.flatnonzero(~np.isnan(values))
                values = values[: finite[-1] + 1] if finite.size else values[:0]
            if np.isnan(values).any() or values.size < 2:
                raise ParseError(f"{path}:{lineno}: missing values or fewer than 2 points")
            if width is None:
                width = values.size
            elif values.size != width and not allow_ragged:
                raise ParseError(f"{path}:{lineno}: expected {width} values, found {values.size}")
            out.append(LabeledSeries(id=f"{split or path.stem}:{len(out)}", values=values, label=label))
    if not out:
        raise ParseError(f"{path}: no series found")
    return out


def load_ucr(train_path, test_path, allow_ragged: bool = False) -> tuple:
    return (
        read_ucr_file(train_path, "train", allow_ragged),
        read_ucr_file(test_path, "test", allow_ragged),
    )


def _clean(cell: str) -> str:
    return cell.strip().strip("'\"").strip()


def load_banksim(path) -> list:
    """Read transactions; header names are matched case-insensitively.

    Extra columns are ignored and surrounding quotes are stripped from every
    cell (BankSim wraps ids in single quotes).
    """
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        names = [_clean(h).lower() for h in header]
        missing = [c for c in BANKSIM_COLUMNS if c not in names]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
        idx = {c: names.index(c) for c in BANKSIM_COLUMNS}
        for row in reader:
            lineno = reader.line_num
            if not row or not any(c.strip() for c in row):
                continue
            try:
                cell = {c: _clean(row[i]) for c, i in idx.items()}
            except IndexError:
                raise ParseError(f"{path}:{lineno}: row has {len(row)} cells, header has {len(header)}") from None
            try:
                step = int(float(cell["step"]))
                amount = float(cell["amount"])
                fraud = int(float(cell["fraud"]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(amount):
                raise ParseError(f"{path}:{lineno}: non-finite amount")
            if step < 0:
                raise ParseError(f"{path}:{lineno}: negative step")
            records.append(TransactionRecord(step, cell["customer"], cell["merchant"], cell["category"], amount, fraud))
    return records


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, payload: dict):
    """Write ``payload`` as sorted, indented JSON via temp file + rename."""
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_scores_csv(path, rows):
    """``rows``: iterable of (customer, score, label)."""
    lines = ["customer,score,label"]
    for customer, score, label in rows:
        lines.append(f"{customer},{float(score)!r},{int(label)}")
    _atomic_write(path, "\n".join(lines) + "\n")
