"""Match rule and Precision@theta reporting.

A candidate thumbnail counts as a true positive when its MSE to the ground
truth is at or below theta. Comparison runs either in pixel space (both
images resized to a fixed evaluation resolution and quantized to 8-bit RGB,
so theta is on the 0..255 value scale) or in feature space (same-shape
vectors compared as-is). The space, resolution, and value range are recorded
in every report header for auditability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, UsageError
from .images import bilinear_resize, to_uint8
from .tensor import Tensor

SPACES = ("pixel", "feature")


@dataclass
class MatchRule:
    theta: float
    space: str = "feature"
    resolution: int = 224

    def __post_init__(self):
        if self.theta < 0:
            raise UsageError(f"theta must be nonnegative, got {self.theta}")
        if self.space not in SPACES:
            raise UsageError(f"space must be one of {SPACES}, got {self.space!r}")
        if self.space == "pixel" and self.resolution < 1:
            raise UsageError("pixel comparison needs a positive resolution")

    def mse(self, candidate, ground_truth) -> float:
        a = candidate.data if isinstance(candidate, Tensor) else np.asarray(candidate)
        b = ground_truth.data if isinstance(ground_truth, Tensor) \
            else np.asarray(ground_truth)
        if self.space == "pixel":
            a = to_uint8(bilinear_resize(a, self.resolution, self.resolution))
            b = to_uint8(bilinear_resize(b, self.resolution, self.resolution))
            diff = a.astype(np.float64) - b.astype(np.float64)
            return float(np.mean(diff * diff))
        if a.shape != b.shape:
            raise DimensionError(
                f"feature comparison requires equal shapes, got {a.shape} vs "
                f"{b.shape}")
        diff = a.astype(np.float64) - b.astype(np.float64)
        return float(np.mean(diff * diff))

    def value_range(self) -> str:
        return "uint8 0..255" if self.space == "pixel" else "raw feature values"


def true_positive(candidate, ground_truth, rule: MatchRule) -> bool:
    """Eq-style threshold match: MSE(candidate, ground truth) <= theta."""
    return rule.mse(candidate, ground_truth) <= rule.theta


@dataclass
class ReportRow:
    theta: float
    precision: float
    true_positives: int
    total: int
    other_precision: Optional[float] = None
    pct_diff: Optional[float] = None


@dataclass
class EvalReport:
    space: str
    rows: list = field(default_factory=list)
    resolution: Optional[int] = None
    value_range: str = "raw feature values"

    def thetas(self) -> list:
        return [r.theta for r in self.rows]

    def to_text(self) -> str:
        has_cmp = any(r.other_precision is not None for r in self.rows)
        head = f"Precision @ theta  ({self.space} space"
        if self.space == "pixel":
            head += f", {self.resolution}x{self.resolution}, {self.value_range}"
        head += ")"
        cols = ["theta", "precision", "TP/total"]
        if has_cmp:
            cols += ["baseline", "% difference"]
        lines = [head, "  ".join(f"{c:>12}" for c in cols)]
        for r in self.rows:
            cells = [f"{r.theta:>12g}", f"{r.precision:>12.3f}",
                     f"{r.true_positives}/{r.total}".rjust(12)]
            if has_cmp:
                cells.append(f"{r.other_precision:>12.3f}"
                             if r.other_precision is not None else " " * 12)
                cells.append(f"{r.pct_diff:>+11.1f}%"
                             if r.pct_diff is not None else "n/a".rjust(12))
            lines.append("  ".join(cells))
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        rows = []
        for r in self.rows:
            row = {"theta": r.theta, "precision": r.precision,
                   "true_positives": r.true_positives, "total": r.total}
            if r.other_precision is not None:
                row["other_precision"] = r.other_precision
            if r.pct_diff is not None:
                row["pct_diff"] = r.pct_diff
            rows.append(row)
        out = {"space": self.space, "value_range": self.value_range,
               "rows": rows}
        if self.resolution is not None:
            out["resolution"] = self.resolution
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        rows = [ReportRow(theta=r["theta"], precision=r["precision"],
                          true_positives=r["true_positives"], total=r["total"],
                          other_precision=r.get("other_precision"),
                          pct_diff=r.get("pct_diff"))
                for r in doc["rows"]]
        return cls(space=doc["space"], rows=rows,
                   resolution=doc.get("resolution"),
                   value_range=doc.get("value_range", "raw feature values"))

    def save_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path: str) -> "EvalReport":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def precision_at(results: Sequence[tuple], thetas: Sequence[float],
                 space: str = "feature", resolution: int = 224) -> EvalReport:
    """Precision over (candidate, ground_truth) pairs for each theta, rows
    sorted ascending. Precision is exactly TP/total."""
    if len(results) == 0:
        raise UsageError("precision_at needs at least one result pair")
    if len(thetas) == 0:
        raise UsageError("precision_at needs at least one theta")
    ordered = sorted(float(t) for t in thetas)
    report = EvalReport(space=space,
                        resolution=resolution if space == "pixel" else None,
                        value_range=MatchRule(0.0, space, resolution).value_range())
    # distances do not depend on theta, compute them once
    base_rule = MatchRule(0.0, space, resolution)
    distances = [base_rule.mse(c, g) for c, g in results]
    total = len(distances)
    for theta in ordered:
        tp = sum(1 for d in distances if d <= theta)
        report.rows.append(ReportRow(theta=theta, precision=tp / total,
                                     true_positives=tp, total=total))
    return report


def compare_reports(ours: EvalReport, other: EvalReport) -> EvalReport:
    """Attach a comparator column: per-theta percent difference
    (ours - other) / other * 100."""
    if ours.thetas() != other.thetas():
        raise UsageError(
            f"theta lists differ: {ours.thetas()} vs {other.thetas()}")
    merged = EvalReport(space=ours.space, resolution=ours.resolution,
                        value_range=ours.value_range)
    for a, b in zip(ours.rows, other.rows):
        pct = None
        if b.precision != 0:
            pct = (a.precision - b.precision) / b.precision * 100.0
        merged.rows.append(ReportRow(
            theta=a.theta, precision=a.precision,
            true_positives=a.true_positives, total=a.total,
            other_precision=b.precision, pct_diff=pct))
    return merged
