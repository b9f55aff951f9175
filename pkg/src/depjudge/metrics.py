"""Evaluation: multi-label F1, penalty log-distance, penalty bins, PMI.

Conventions fixed here so runs stay comparable: log-distance is the natural
log with a +1 offset; macro-F1 averages over the full label set and counts
zero-support labels as 0; PMI uses natural log with never-co-occurring
pairs clamped to ``PMI_FLOOR``.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Case, encode_penalty
from .prompting import TaskKind, TaskPredictions, task_surface

PMI_FLOOR = -20.0

PENALTY_BIN_EDGES = (0, 6, 9, 12, 24, 36, 60, 84, 120, 300)
N_PENALTY_BINS = 11


def micro_f1(preds: Sequence[set], golds: Sequence[set]) -> float:
    """F1 over TP/FP/FN pooled across all cases; 0 when nothing matches."""
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    tp = fp = fn = 0
    for p, g in zip(preds, golds):
        p, g = set(p), set(g)
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def macro_f1(preds: Sequence[set], golds: Sequence[set], label_set: Iterable[str]) -> float:
    """Per-label F1 averaged uniformly; unseen-and-unpredicted labels score 0."""
    labels = list(label_set)
    if not labels:
        raise ValueError("label_set must be nonempty")
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    total = 0.0
    for label in labels:
        tp = fp = fn = 0
        for p, g in zip(preds, golds):
            hit_p, hit_g = label in p, label in g
            tp += hit_p and hit_g
            fp += hit_p and not hit_g
            fn += hit_g and not hit_p
        if 2 * tp + fp + fn > 0:
            total += 2 * tp / (2 * tp + fp + fn)
    return total / len(labels)


def log_distance(pred_months: float, gold_months: float) -> float:
    """|ln(pred+1) - ln(gold+1)| on the month scale."""
    if pred_months < 0 or gold_months < 0:
        raise ValueError("month counts must be >= 0")
    return abs(math.log(pred_months + 1.0) - math.log(gold_months + 1.0))


def mean_log_distance(pred_months: Sequence[int | None], gold_months: Sequence[int]) -> float:
    """Mean per-case log-distance; an absent prediction scores as 0 months."""
    if len(pred_months) != len(gold_months):
        raise ValueError("length mismatch")
    if not gold_months:
        raise ValueError("no cases to score")
    return sum(log_distance(p if p is not None else 0, g)
               for p, g in zip(pred_months, gold_months)) / len(gold_months)


def bin_penalty(months: float) -> int:
    """11 fixed right-closed bins over the month scale: {0}, (0,6], ... (300,inf)."""
    if months < 0:
        raise ValueError("months must be >= 0")
    for i, edge in enumerate(PENALTY_BIN_EDGES):
        if months <= edge:
            return i
    return N_PENALTY_BINS - 1


def token_accuracy(pred_text: str, gold_text: str) -> float:
    """Position-aligned whitespace-token match rate, normalized by the longer side."""
    p, g = pred_text.split(), gold_text.split()
    if not p and not g:
        return 1.0
    matches = sum(a == b for a, b in zip(p, g))
    return matches / max(len(p), len(g))


# ---------------------------------------------------------------------------
# pointwise mutual information


@dataclass(frozen=True)
class PMIMatrix:
    values: np.ndarray  # shape (len(labels_x), len(labels_y))
    labels_x: tuple[str, ...]
    labels_y: tuple[str, ...]

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([""] + list(self.labels_y))
            for label, row in zip(self.labels_x, self.values):
                writer.writerow([label] + [f"{v:.6f}" for v in row])


def _top_labels(pairs: Sequence[tuple[set, set]], side: int, k: int) -> tuple[str, ...]:
    joint_mass: Counter[str] = Counter()
    for x_set, y_set in pairs:
        own = (x_set, y_set)[side]
        other = (y_set, x_set)[side]
        for label in own:
            joint_mass[label] += len(other)
    ranked = sorted(joint_mass, key=lambda l: (-joint_mass[l], l))
    return tuple(ranked[:k])


def pmi_from_label_sets(pairs: Sequence[tuple[set, set]],
                        top_k: int | tuple[int, int],
                        labels_x: Sequence[str] | None = None,
                        labels_y: Sequence[str] | None = None) -> PMIMatrix:
    """PMI(x, y) = ln[p(x,y) / (p(x) p(y))] from per-case label-set pairs.

    Probabilities are co-occurrence counts over cases divided by the case
    count. Axes default to the ``top_k`` labels per side with the highest
    joint-occurrence mass; pass explicit label lists to pin them.
    """
    if not pairs:
        raise ValueError("no cases to count")
    kx, ky = (top_k, top_k) if isinstance(top_k, int) else top_k
    lx = tuple(labels_x) if labels_x is not None else _top_labels(pairs, 0, kx)
    ly = tuple(labels_y) if labels_y is not None else _top_labels(pairs, 1, ky)
    n = len(pairs)
    cx: Counter[str] = Counter()
    cy: Counter[str] = Counter()
    cxy: Counter[tuple[str, str]] = Counter()
    for x_set, y_set in pairs:
        for x in x_set:
            cx[x] += 1
        for y in y_set:
            cy[y] += 1
        for x in x_set:
            for y in y_set:
                cxy[(x, y)] += 1
    values = np.full((len(lx), len(ly)), PMI_FLOOR)
    for i, x in enumerate(lx):
        for j, y in enumerate(ly):
            joint = cxy[(x, y)]
            if joint > 0 and cx[x] > 0 and cy[y] > 0:
                values[i, j] = math.log(joint * n / (cx[x] * cy[y]))
    return PMIMatrix(values, lx, ly)


def case_labels_for_task(case: Case, task: TaskKind) -> set[str]:
    """A case's labels for a PMI side; penalty is binned into 11 classes."""
    if task is TaskKind.ARTICLE:
        return set(case.articles)
    if task is TaskKind.CHARGE:
        return set(case.charges)
    if task is TaskKind.PENALTY:
        return {f"bin_{bin_penalty(encode_penalty(case.penalty))}"}
    raise ValueError(f"PMI is defined over label-valued tasks, not {task}")


def predicted_labels_for_task(pred: TaskPredictions, task: TaskKind) -> set[str]:
    if task is TaskKind.ARTICLE:
        return set(pred.articles or ())
    if task is TaskKind.CHARGE:
        return set(pred.charges or ())
    if task is TaskKind.PENALTY:
        months = pred.penalty_months if pred.penalty_months is not None else 0
        return {f"bin_{bin_penalty(months)}"}
    raise ValueError(f"PMI is defined over label-valued tasks, not {task}")


def pmi_matrix(cases: Sequence[Case], task_x: TaskKind, task_y: TaskKind,
               top_k: int | tuple[int, int],
               labels_x: Sequence[str] | None = None,
               labels_y: Sequence[str] | None = None) -> PMIMatrix:
    """PMI between two tasks' gold labels over a case collection."""
    pairs = [(case_labels_for_task(c, task_x), case_labels_for_task(c, task_y)) for c in cases]
    return pmi_from_label_sets(pairs, top_k, labels_x, labels_y)


# ---------------------------------------------------------------------------
# error slicing and reports


def error_slice(preds: Sequence[TaskPredictions], golds: Sequence[Case],
                penalty_error_threshold_months: int = 12) -> list[str]:
    """Ids of cases whose penalty is off by at least the threshold (in months)."""
    if len(preds) != len(golds):
        raise ValueError("length mismatch")
    out = []
    for pred, case in zip(preds, golds):
        months = pred.penalty_months if pred.penalty_months is not None else 0
        if abs(months - encode_penalty(case.penalty)) >= penalty_error_threshold_months:
            out.append(case.id)
    return out


@dataclass
class MetricsReport:
    """Per-task scores plus bookkeeping for one evaluation run."""

    case_count: int
    malformed_count: int
    per_task: dict[str, dict[str, float]]
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "case_count": self.case_count,
            "malformed_count": self.malformed_count,
            "per_task": self.per_task,
            "wall_clock_s": self.wall_clock_s,
        }


def build_report(preds: Sequence[TaskPredictions], golds: Sequence[Case],
                 catalog, tasks: Iterable[TaskKind], wall_clock_s: float = 0.0) -> MetricsReport:
    """Score predictions task by task against gold cases."""
    if len(preds) != len(golds):
        raise ValueError("length mismatch")
    if not golds:
        raise ValueError("no cases to score")
    per_task: dict[str, dict[str, float]] = {}
    for task in tasks:
        name = task.name.lower()
        if task is TaskKind.ARTICLE:
            p = [set(x.articles or ()) for x in preds]
            g = [set(c.articles) for c in golds]
            per_task[name] = {"micro_f1": micro_f1(p, g),
                              "macro_f1": macro_f1(p, g, catalog.article_ids)}
        elif task is TaskKind.CHARGE:
            p = [set(x.charges or ()) for x in preds]
            g = [set(c.charges) for c in golds]
            per_task[name] = {"micro_f1": micro_f1(p, g),
                              "macro_f1": macro_f1(p, g, catalog.charges)}
        elif task is TaskKind.PENALTY:
            dist = mean_log_distance([x.penalty_months for x in preds],
                                     [encode_penalty(c.penalty) for c in golds])
            per_task[name] = {"log_distance": dist}
        elif task is TaskKind.COURT_VIEW:
            accs = [token_accuracy(x.court_view or "", c.court_view) for x, c in zip(preds, golds)]
            per_task[name] = {"token_accuracy": sum(accs) / len(accs)}
        else:
            accs = [token_accuracy(x.article_content or "",
                                   task_surface(c, catalog, TaskKind.ARTICLE_CONTENT))
                    for x, c in zip(preds, golds)]
            per_task[name] = {"token_accuracy": sum(accs) / len(accs)}
    return MetricsReport(
        case_count=len(golds),
        malformed_count=sum(x.malformed for x in preds),
        per_task=per_task,
        wall_clock_s=wall_clock_s,
    )


__all__ = [
    "MetricsReport", "N_PENALTY_BINS", "PENALTY_BIN_EDGES", "PMIMatrix", "PMI_FLOOR",
    "bin_penalty", "build_report", "case_labels_for_task", "error_slice",
    "log_distance", "macro_f1", "mean_log_distance", "micro_f1",
    "pmi_from_label_sets", "pmi_matrix", "predicted_labels_for_task", "token_accuracy",
]
