"""Readers and writers for the prediction, group, label and dataset CSV formats.

Lines starting with ``#`` are comments and skipped on read. Values are
written with ``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import PredictionMatrix, ValidationError, validate_labels


def _rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    return list(csv.reader(lines))


def _float(text: str, where: str) -> float:
    text = text.strip()
    if text == "" or text.upper() in ("NA", "NAN", "?"):
        raise ValidationError(f"missing value at {where}")
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"non-numeric value {text!r} at {where}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_out(path, comment: str | None):
    fh = open(path, "w", newline="")
    if comment:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
    return fh


def read_groups(path) -> dict[str, str]:
    """Read a ``classifier_id<TAB>group`` sidecar file."""
    groups: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"{path}:{lineno}: expected 'classifier_id<TAB>group'")
        cid, group = parts[0].strip(), parts[1].strip()
        if cid in groups:
            raise ValidationError(f"{path}:{lineno}: classifier {cid!r} assigned twice")
        groups[cid] = group
    return groups


def write_groups(path, group_of, comment: str | None = None) -> None:
    with _open_out(path, comment) as fh:
        for cid, group in group_of.items():
            fh.write(f"{cid}\t{group}\n")


def read_predictions(path, groups_path=None, clip: bool = False) -> PredictionMatrix:
    """Read a prediction CSV (``instance_id,<classifier ids...>``).

    ``clip`` clamps values into [0, 1] at ingestion; by default an
    out-of-range value is an error.
    """
    rows = _rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty prediction file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "instance_id":
        raise ValidationError(f"{path}: header must start with 'instance_id'")
    cids = header[1:]
    iids = []
    values = np.empty((len(rows) - 1, len(cids)))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ValidationError(
                f"{path}: dimension mismatch at row {r}: {len(row)} fields, expected {len(header)}"
            )
        iids.append(row[0].strip())
        for c, text in enumerate(row[1:]):
            values[r, c] = _float(text, f"({r}, {c})")
    if clip:
        values = np.clip(values, 0.0, 1.0)
    group_of = read_groups(groups_path) if groups_path else {}
    return PredictionMatrix(values, tuple(cids), tuple(iids), group_of)


def write_predictions(path, matrix: PredictionMatrix, comment: str | None = None) -> None:
    with _open_out(path, comment) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", *matrix.classifier_ids])
        for iid, row in zip(matrix.instance_ids, matrix.values):
            w.writerow([iid, *map(_fmt, row)])


def read_labels(path, instance_ids: Sequence[str] | None = None) -> np.ndarray:
    """Read an ``instance_id,label`` CSV; if ``instance_ids`` is given, order must match."""
    rows = _rows(path)
    if not rows or [h.strip() for h in rows[0]] != ["instance_id", "label"]:
        raise ValidationError(f"{path}: header must be 'instance_id,label'")
    ids = [r[0].strip() for r in rows[1:]]
    raw = []
    for i, r in enumerate(rows[1:]):
        text = r[1].strip()
        if text not in ("0", "1"):
            raise ValidationError(f"non-binary label at index {i}: {text!r}")
        raw.append(int(text))
    if instance_ids is not None and list(instance_ids) != ids:
        raise ValidationError(f"{path}: instance ids do not match the prediction matrix")
    return validate_labels(np.array(raw, dtype=np.int8))


def write_labels(path, instance_ids: Iterable[str], labels, comment: str | None = None) -> None:
    with _open_out(path, comment) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "label"])
        for iid, y in zip(instance_ids, labels):
            w.writerow([iid, int(y)])


def read_dataset(path):
    """Read a feature dataset CSV (``instance_id,f1..fm,label``).

    Returns ``(instance_ids, X, y, feature_names)``; ``y`` holds -1 for rows
    labelled ``?`` (prediction-only rows).
    """
    rows = _rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty dataset")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0] != "instance_id" or header[-1] != "label":
        raise ValidationError(f"{path}: header must be 'instance_id,<features...>,label'")
    features = header[1:-1]
    ids, X, y = [], np.empty((len(rows) - 1, len(features))), np.empty(len(rows) - 1, dtype=np.int8)
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ValidationError(f"{path}: dimension mismatch at row {r}")
        ids.append(row[0].strip())
        for c, text in enumerate(row[1:-1]):
            X[r, c] = _float(text, f"({r}, {c})")
        lab = row[-1].strip()
        if lab not in ("0", "1", "?"):
            raise ValidationError(f"non-binary label at index {r}: {lab!r}")
        y[r] = -1 if lab == "?" else int(lab)
    return ids, X, y, features


def write_dataset(path, instance_ids, X, y, feature_names=None) -> None:
    X = np.asarray(X, dtype=float)
    names = feature_names or [f"f{j + 1}" for j in range(X.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", *names, "label"])
        for iid, row, lab in zip(instance_ids, X, y):
            w.writerow([iid, *map(_fmt, row), "?" if lab < 0 else int(lab)])


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    """Write a generic CSV table; floats are written with ``repr``."""
    with _open_out(path, comment) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])

