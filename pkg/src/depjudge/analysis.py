"""Interpretability artifacts: attention dumps, PMI scenarios, counterfactuals.

Everything here is read-only over a trained model and produces plain
records (dicts, CSV-able matrices) meant for external plotting.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Case, LabelCatalog
from .metrics import (PMIMatrix, case_labels_for_task, error_slice,
                      pmi_from_label_sets, predicted_labels_for_task)
from .model import Seq2SeqTransformer
from .prompting import (OrderSpec, TaskKind, TaskPredictions, build_prompt,
                        normalize_label, parse_decoded, parse_penalty_surface,
                        split_at_sentinels)
from .tokenizer import SEP_TOKEN, Vocab, sentinel_token


def dump_attention(model: Seq2SeqTransformer, vocab: Vocab, catalog: LabelCatalog,
                   case: Case, order: OrderSpec, max_out_len: int = 256) -> dict:
    """Greedy-decode one case and export the cross-attention map aligned to
    input/output token strings."""
    pt = build_prompt(case, catalog, order)
    x = vocab.encode(pt.input_text).ids
    y, truncated = model.greedy_decode(x, max_out_len)
    matrix = model.cross_attention_map(x, y).tolist() if y else []
    return {
        "case_id": case.id,
        "order": str(order),
        "input_tokens": [vocab.symbol_of(i) for i in x],
        "output_tokens": [vocab.symbol_of(i) for i in y],
        "matrix": matrix,
        "truncated": truncated,
    }


@dataclass
class PMIScenarios:
    """PMI over gold labels, predicted labels, and the mispredicted slice.

    All three matrices share the gold matrix's label axes so cells are
    directly comparable. ``mispredicted`` is None (with a notice) when no
    case crosses the penalty-error threshold.
    """

    gold: PMIMatrix
    predicted: PMIMatrix
    mispredicted: PMIMatrix | None
    notice: str | None = None


def pmi_scenarios(gold_cases: list[Case], predictions: list[TaskPredictions],
                  task_x: TaskKind = TaskKind.ARTICLE, task_y: TaskKind = TaskKind.CHARGE,
                  top_k: int | tuple[int, int] = 10,
                  penalty_error_threshold_months: int = 12) -> PMIScenarios:
    if len(gold_cases) != len(predictions):
        raise ValueError("predictions must align with gold cases")
    gold_pairs = [(case_labels_for_task(c, task_x), case_labels_for_task(c, task_y))
                  for c in gold_cases]
    gold = pmi_from_label_sets(gold_pairs, top_k)
    pred_pairs = [(predicted_labels_for_task(p, task_x), predicted_labels_for_task(p, task_y))
                  for p in predictions]
    predicted = pmi_from_label_sets(pred_pairs, top_k, gold.labels_x, gold.labels_y)
    slice_ids = set(error_slice(predictions, gold_cases, penalty_error_threshold_months))
    sliced = [pair for c, pair in zip(gold_cases, pred_pairs) if c.id in slice_ids]
    if sliced:
        mis = pmi_from_label_sets(sliced, top_k, gold.labels_x, gold.labels_y)
        return PMIScenarios(gold, predicted, mis)
    return PMIScenarios(gold, predicted, None,
                        notice="no case exceeds the penalty error threshold; "
                               "mispredicted-slice matrix omitted")


@dataclass
class CounterfactualResult:
    before: TaskPredictions
    after: TaskPredictions
    before_text: str
    after_text: str
    changed: dict[str, tuple]  # task name -> (before value, after value)


def _validate_forced_span(task: TaskKind, span: str) -> None:
    if "⟨extra_" in span:  # a sentinel inside the span would break segmentation
        raise ValueError("forced span must not contain sentinel tokens")
    if task is TaskKind.PENALTY:
        if parse_penalty_surface(span) is None:
            raise ValueError(f"forced penalty span {span!r} is not a month count or life/death")
    elif task in (TaskKind.ARTICLE, TaskKind.CHARGE):
        labels = [normalize_label(p) for p in span.split(SEP_TOKEN)]
        if not any(labels):
            raise ValueError(f"forced label span {span!r} holds no labels")


def counterfactual_replace(model: Seq2SeqTransformer, vocab: Vocab, catalog: LabelCatalog,
                           case: Case, order: OrderSpec, task: TaskKind, forced_span: str,
                           max_out_len: int = 256) -> CounterfactualResult:
    """Re-decode with one task's span teacher-forced to ``forced_span``.

    The decoder keeps its own spans for the tasks before ``task``, emits the
    forced span for ``task`` itself, and continues greedy decoding for the
    rest. Forcing the span the model already produced is an exact no-op.
    """
    if task not in order.tasks:
        raise ValueError(f"task {task} is not part of order {order}")
    _validate_forced_span(task, forced_span)
    pt = build_prompt(case, catalog, order)
    x = vocab.encode(pt.input_text).ids
    before_ids, _ = model.greedy_decode(x, max_out_len)
    before_text = vocab.decode(before_ids)

    k = order.tasks.index(task)
    marker = sentinel_token(k)
    pos = before_text.find(marker)
    if pos < 0:
        raise ValueError(f"decoded output lacks sentinel {marker}; cannot force task {task}")
    prefix_text = before_text[: pos + len(marker)] + forced_span
    after_ids, _ = model.greedy_decode(x, max_out_len,
                                       forced_prefix=vocab.encode(prefix_text).ids)
    after_text = vocab.decode(after_ids)

    before = parse_decoded(before_text, order, catalog)
    after = parse_decoded(after_text, order, catalog)
    changed = {}
    for t in order:
        b, a = _value(before, t), _value(after, t)
        if b != a:
            changed[t.name.lower()] = (b, a)
    return CounterfactualResult(before, after, before_text, after_text, changed)


def _value(pred: TaskPredictions, task: TaskKind):
    return {
        TaskKind.ARTICLE: pred.articles,
        TaskKind.CHARGE: pred.charges,
        TaskKind.PENALTY: pred.penalty_months,
        TaskKind.COURT_VIEW: pred.court_view,
        TaskKind.ARTICLE_CONTENT: pred.article_content,
    }[task]


__all__ = [
    "CounterfactualResult", "PMIScenarios",
    "counterfactual_replace", "dump_attention", "pmi_scenarios",
]
