"""RMSE metrics, per-split evaluation reports and result tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRange, EmptySplit, ShapeMismatch

MODEL_TAGS = ("gru", "bigru", "gan")
CSV_FIELDS = ("subject", "condition", "feature_set", "model", "avg_rmse", "avg_norm_rmse", "n_utterances")


def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"shapes differ: {pred.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def normalized_rmse(pred, truth, value_range: float | None = None) -> float:
    """RMSE divided by the ground-truth range (``max - min``), or by ``value_range``."""
    truth = np.asarray(truth, dtype=np.float64)
    span = float(truth.max() - truth.min()) if value_range is None else float(value_range)
    if not span > 0:
        raise DegenerateRange("ground truth has zero range")
    return rmse(pred, truth) / span


@dataclass
class EvalReport:
    per_utterance_rmse: list[float]
    average_rmse: float
    normalized_rmse: float
    feature_set: int
    model_tag: str
    subject: str = "all"
    condition: str = "all"
    truth_range: float = float("nan")
    utterance_ids: list[str] = field(default_factory=list)

    @property
    def n_utterances(self) -> int:
        return len(self.per_utterance_rmse)

    def csv_row(self) -> dict:
        return {
            "subject": self.subject,
            "condition": self.condition,
            "feature_set": self.feature_set,
            "model": self.model_tag,
            "avg_rmse": repr(self.average_rmse),
            "avg_norm_rmse": repr(self.normalized_rmse),
            "n_utterances": self.n_utterances,
        }


def evaluate_predictions(preds, truths, feature_set: int, model_tag: str,
                         subject: str = "all", condition: str = "all", ids=()) -> EvalReport:
    """Average RMSE is the mean of per-utterance RMSEs.

    Normalised RMSE divides that average by the truth range over the whole split.
    """
    if not truths:
        raise EmptySplit("nothing to evaluate")
    per = [rmse(p, t) for p, t in zip(preds, truths)]
    lo = min(float(t.min()) for t in truths)
    hi = max(float(t.max()) for t in truths)
    if not hi > lo:
        raise DegenerateRange("ground truth has zero range over the split")
    avg = float(np.mean(per))
    return EvalReport(per, avg, avg / (hi - lo), feature_set, model_tag, subject, condition,
                      hi - lo, list(ids))


def evaluate_model(model, manifest, split: str = "test", stats=None, model_tag: str = "bigru",
                   group_by_subject: bool = False) -> list[EvalReport]:
    """Evaluate ``model.predict`` on ``split`` in the z-scored feature space.

    Returns one pooled report, followed by one per (subject, condition) when
    ``group_by_subject`` is set.
    """
    from .dataset import load_pairs

    utts = manifest.in_split(split)
    pairs = load_pairs(manifest, split)
    if not pairs:
        raise EmptySplit(f"split {split!r} is empty")
    if stats is not None:
        pairs = stats.apply(pairs)
    preds = [model.predict(m) for m, _ in pairs]
    truths = [e for _, e in pairs]
    ids = [u.id for u in utts]
    reports = [evaluate_predictions(preds, truths, manifest.feature_set, model_tag, ids=ids)]
    if group_by_subject:
        groups = sorted({(u.subject, u.condition) for u in utts})
        for subject, condition in groups:
            sel = [i for i, u in enumerate(utts) if (u.subject, u.condition) == (subject, condition)]
            reports.append(evaluate_predictions(
                [preds[i] for i in sel], [truths[i] for i in sel], manifest.feature_set,
                model_tag, subject, condition, [ids[i] for i in sel],
            ))
    return reports


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def read_reports_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        row["feature_set"] = int(row["feature_set"])
        row["avg_rmse"] = float(row["avg_rmse"])
        row["avg_norm_rmse"] = float(row["avg_norm_rmse"])
        row["n_utterances"] = int(row["n_utterances"])
        rows.append(row)
    return rows


def export_table(reports, condition: str | None = None, subject: str | None = None) -> tuple[str, str]:
    """Render reports as a feature-set x model table.

    Returns ``(text, csv)``. Missing (set, model) cells print as ``-``.
    """
    if not reports:
        raise ValueError("export_table needs at least one report")
    subject = subject or reports[0].subject
    condition = condition or reports[0].condition
    cells = {(r.feature_set, r.model_tag): r.average_rmse for r in reports}
    sets = sorted({r.feature_set for r in reports})
    models = [m for m in MODEL_TAGS if any(r.model_tag == m for r in reports)]
    models += sorted({r.model_tag for r in reports} - set(models))

    header = ["EEG Feature Set"] + [f"Average RMSE {m.upper() if m != 'bigru' else 'Bi-GRU'} Model" for m in models]
    rows = []
    for s in sets:
        rows.append([f"Set {s}"] + [
            f"{cells[(s, m)]:.3f}" if (s, m) in cells else "-" for m in models
        ])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    fmt = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    caption = f"Results for predicting {condition} EEG from {condition} MFCC for subject {subject}"
    text = "\n".join([caption, fmt(header), "-+-".join("-" * w for w in widths)] + [fmt(r) for r in rows]) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature_set"] + list(models))
    for s in sets:
        w.writerow([s] + [repr(cells[(s, m)]) if (s, m) in cells else "-" for m in models])
    return text, buf.getvalue()
