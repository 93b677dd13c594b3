"""Dataset ingestion and export.

Two on-disk formats are supported: dense CSV (feature columns followed by
a label column) and the sparse ``label index:value ...`` format with
1-based indices.  Ingested rows become an empirical spec: uniform row
weights, the exact least-squares fit as optimum, residual noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .moments import ProblemSpec

MAX_REPORTED_CLASSES = 20


@dataclass(frozen=True)
class IngestReport:
    dim: int
    rows: int
    trace_h: float
    class_counts: dict | None

    def lines(self) -> list[str]:
        out = [
            f"rows: {self.rows}",
            f"dim: {self.dim}",
            f"trace_h: {self.trace_h:.17g}",
        ]
        if self.class_counts is not None:
            balance = ", ".join(f"{k:g}: {v}" for k, v in sorted(self.class_counts.items()))
            out.append(f"class balance: {balance}")
        return out


def _parse_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    xs_rows: list[list[float]] = []
    ys_rows: list[float] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise DataFormatError("need at least one feature and a label", line=lineno)
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataFormatError(
                    f"row has {len(parts)} columns, expected {width}", line=lineno
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise DataFormatError(str(exc), line=lineno) from None
            xs_rows.append(vals[:-1])
            ys_rows.append(vals[-1])
    if not xs_rows:
        raise DataFormatError(f"no data rows in {path!r}")
    return np.array(xs_rows), np.array(ys_rows)


def _parse_libsvm(path: str, dim: int | None) -> tuple[np.ndarray, np.ndarray]:
    entries: list[list[tuple[int, float]]] = []
    labels: list[float] = []
    max_idx = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise DataFormatError(f"bad label {parts[0]!r}", line=lineno) from None
            row = []
            for tok in parts[1:]:
                if ":" not in tok:
                    raise DataFormatError(f"expected index:value, got {tok!r}", line=lineno)
                idx_s, val_s = tok.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataFormatError(f"bad pair {tok!r}", line=lineno) from None
                if idx < 1:
                    raise DataFormatError(f"indices are 1-based, got {idx}", line=lineno)
                row.append((idx, val))
                max_idx = max(max_idx, idx)
            entries.append(row)
    if not entries:
        raise DataFormatError(f"no data rows in {path!r}")
    d = dim if dim is not None else max_idx
    if max_idx > d:
        raise DataFormatError(f"feature index {max_idx} exceeds declared dimension {d}")
    xs = np.zeros((len(entries), d))
    for t, row in enumerate(entries):
        for idx, val in row:
            xs[t, idx - 1] = val
    return xs, np.array(labels)


def ingest(path: str, fmt: str = "csv-dense", dim: int | None = None,
           w0=None) -> tuple[ProblemSpec, IngestReport]:
    """Load a data file into an empirical spec plus a summary report."""
    if fmt in ("csv", "csv-dense"):
        xs, ys = _parse_csv(path)
    elif fmt in ("libsvm", "libsvm-sparse"):
        xs, ys = _parse_libsvm(path, dim)
    else:
        raise DataFormatError(f"unknown format {fmt!r} (use csv-dense or libsvm-sparse)")
    spec = ProblemSpec.empirical(xs, ys, w0=w0)
    hmat = np.einsum("ti,tj->ij", xs, xs) / xs.shape[0]
    uniq, counts = np.unique(ys, return_counts=True)
    class_counts = (
        {float(u): int(c) for u, c in zip(uniq, counts)}
        if len(uniq) <= MAX_REPORTED_CLASSES
        else None
    )
    report = IngestReport(
        dim=xs.shape[1],
        rows=xs.shape[0],
        trace_h=float(np.trace(hmat)),
        class_counts=class_counts,
    )
    return spec, report


def export_csv(spec: ProblemSpec, path: str) -> None:
    """Write a labelled discrete/empirical spec as dense CSV rows."""
    design = spec.design
    if not hasattr(design, "xs") or design.ys is None:
        raise DataFormatError("only labelled discrete or empirical specs can be exported")
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(design.xs, design.ys):
            fh.write(",".join(f"{v:.17g}" for v in x) + f",{y:.17g}\n")
