"""Accuracy and per-class precision/recall/F1 with SARCASTIC as the positive
class, plus the evaluation-table rendering used by reports."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Label
from .errors import DataError


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    non_sarcastic: ClassMetrics
    sarcastic: ClassMetrics
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def csv_fields(self) -> list[float]:
        return [
            self.accuracy,
            self.non_sarcastic.precision,
            self.non_sarcastic.recall,
            self.non_sarcastic.f1,
            self.sarcastic.precision,
            self.sarcastic.recall,
            self.sarcastic.f1,
        ]


def _prf(tp: int, fp: int, fn: int) -> ClassMetrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(precision=precision, recall=recall, f1=f1)


def _as_label(value) -> Label:
    label = Label(value) if not isinstance(value, Label) else value
    if label is Label.AMBIGUOUS:
        raise DataError("metrics require binary labels")
    return label


def compute_metrics(predictions, golds) -> MetricsReport:
    """Confusion counts and the derived metrics; SARCASTIC is positive."""
    if len(predictions) != len(golds):
        raise DataError(
            f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds"
        )
    if not golds:
        raise DataError("metrics require at least one sample")
    tp = fp = tn = fn = 0
    for pred, gold in zip(predictions, golds):
        pred, gold = _as_label(pred), _as_label(gold)
        if pred is Label.SARCASTIC:
            if gold is Label.SARCASTIC:
                tp += 1
            else:
                fp += 1
        else:
            if gold is Label.SARCASTIC:
                fn += 1
            else:
                tn += 1
    return MetricsReport(
        accuracy=(tp + tn) / len(golds),
        non_sarcastic=_prf(tn, fn, fp),
        sarcastic=_prf(tp, fp, fn),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


TABLE_HEADER = (
    f"{'Model':<24} {'Acc.':>8} | {'Pre.':>8} {'Rec.':>8} {'F1':>8} | "
    f"{'Pre.':>8} {'Rec.':>8} {'F1':>8}"
)
TABLE_GROUPS = f"{'':<24} {'':>8} | {'Non-sarcastic':^26} | {'Sarcastic':^26}"


def format_table(rows: dict[str, MetricsReport]) -> str:
    """Evaluation table: accuracy, then per-class precision/recall/F1 columns."""
    lines = [TABLE_GROUPS, TABLE_HEADER, "-" * len(TABLE_HEADER)]
    for name, rep in rows.items():
        ns, s = rep.non_sarcastic, rep.sarcastic
        lines.append(
            f"{name:<24} {rep.accuracy:>8.4f} | "
            f"{ns.precision:>8.4f} {ns.recall:>8.4f} {ns.f1:>8.4f} | "
            f"{s.precision:>8.4f} {s.recall:>8.4f} {s.f1:>8.4f}"
        )
    return "\n".join(lines)
