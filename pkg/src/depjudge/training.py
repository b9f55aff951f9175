"""Training loops: span-corruption pretraining, ordered finetuning, sweeps.

Three finetuning modes share one fit loop: ``dependent`` serializes all
tasks of an order into one target per case, ``stl`` trains a single task,
and ``mtl_independent`` shares parameters across tasks by sampling one
task per case per epoch, with no conditioning between tasks. Batches use
gradient accumulation with sum-then-normalize reduction so a macro batch
equals one large batch up to float noise.
"""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Iterable, Sequence

import torch

from .corpus import Case, Corpus, LabelCatalog, encode_penalty
from .metrics import build_report, mean_log_distance, micro_f1, token_accuracy
from .model import (ModelConfig, Seq2SeqTransformer, greedy_decode_batch,
                    token_cross_entropy_sum)
from .prompting import (FULL_ORDER, MAIN_TASKS, OrderSpec, TaskKind, TaskPredictions,
                        build_prompt, parse_decoded, render_document, span_corrupt)
from .tokenizer import END_ID, PAD_ID, Vocab, sentinel_token

logger = logging.getLogger("depjudge.training")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    accumulation_steps: int = 4
    max_epochs: int = 30
    patience: int = 3
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    rng_seed: int = 0
    max_input_len: int = 512
    max_target_len: int = 256
    val_cases_cap: int = 512

    def __post_init__(self) -> None:
        if self.batch_size <= 0 or self.accumulation_steps <= 0:
            raise ValueError("batch sizes must be positive")
        if self.batch_size % self.accumulation_steps != 0:
            raise ValueError("batch_size must be divisible by accumulation_steps")
        if not (0 <= self.patience < self.max_epochs):
            raise ValueError("need 0 <= patience < max_epochs")

    @property
    def micro_batch(self) -> int:
        return self.batch_size // self.accumulation_steps


@dataclass(frozen=True)
class TrainMode:
    """Which target format finetuning builds for each case."""

    kind: str  # "dependent" | "stl" | "mtl_independent"
    order: OrderSpec | None = None
    task_pool: tuple[TaskKind, ...] = ()

    @classmethod
    def dependent(cls, order: OrderSpec) -> "TrainMode":
        return cls("dependent", order=order)

    @classmethod
    def stl(cls, task: TaskKind) -> "TrainMode":
        return cls("stl", order=OrderSpec((task,)))

    @classmethod
    def mtl_independent(cls, tasks: Sequence[TaskKind] = MAIN_TASKS) -> "TrainMode":
        return cls("mtl_independent", task_pool=tuple(tasks))

    @property
    def tasks(self) -> tuple[TaskKind, ...]:
        if self.kind == "mtl_independent":
            return self.task_pool
        assert self.order is not None
        return self.order.tasks


class EarlyStopper:
    """Strict-improvement tracker; stops once the non-improving streak
    exceeds the patience."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.streak = 0

    def update(self, value: float) -> bool:
        if value > self.best:
            self.best = value
            self.streak = 0
            return True
        self.streak += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.streak > self.patience


# ---------------------------------------------------------------------------
# example preparation and batching

Example = tuple[list[int], list[int]]  # input ids, target ids (END-terminated)


def _truncate_text_tokens(text: str, max_chars: int) -> str:
    if len(text) <= max_chars:
        return text
    cut = text.rfind(" ", 0, max_chars)
    return text[:cut] if cut > 0 else text[:max_chars]


def prompt_example(case: Case, catalog: LabelCatalog, order: OrderSpec, vocab: Vocab,
                   max_input_len: int, max_target_len: int) -> Example:
    """Encode one case prompt; over-length inputs lose fact characters, never
    the field sentinels."""
    pt = build_prompt(case, catalog, order)
    fact_ids = vocab.encode(case.fact).ids
    rest_ids = vocab.encode(pt.input_text[len(case.fact):]).ids
    keep = max(8, max_input_len - len(rest_ids))
    x = fact_ids[:keep] + rest_ids
    t = vocab.encode(pt.target_text).ids[: max_target_len - 1] + [END_ID]
    return x, t


def corruption_example(doc: str, mask_ratio: float, mean_span: float, rng: Random,
                       vocab: Vocab, max_target_len: int) -> Example:
    pt = span_corrupt(doc, mask_ratio, mean_span, rng)
    x = vocab.encode(pt.input_text).ids
    t = vocab.encode(pt.target_text).ids[: max_target_len - 1] + [END_ID]
    return x, t


def _collate(examples: Sequence[Example]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-pad a micro batch into (x, x_pad, y_in, y_out) tensors."""
    s_max = max(len(x) for x, _ in examples)
    t_max = max(len(t) for _, t in examples)
    bsz = len(examples)
    x = torch.full((bsz, s_max), PAD_ID, dtype=torch.long)
    x_pad = torch.ones((bsz, s_max), dtype=torch.bool)
    y_in = torch.full((bsz, t_max), PAD_ID, dtype=torch.long)
    y_out = torch.full((bsz, t_max), PAD_ID, dtype=torch.long)
    for i, (xi, ti) in enumerate(examples):
        x[i, : len(xi)] = torch.tensor(xi, dtype=torch.long)
        x_pad[i, : len(xi)] = False
        y_in[i, 0] = PAD_ID  # decoder-start token
        y_in[i, 1: len(ti)] = torch.tensor(ti[:-1], dtype=torch.long)
        y_out[i, : len(ti)] = torch.tensor(ti, dtype=torch.long)
    return x, x_pad, y_in, y_out


def make_micro_batches(examples: Sequence[Example], micro_batch: int, rng: Random) -> list[tuple]:
    """Length-bucketed micro batches in a shuffled order."""
    order = sorted(range(len(examples)), key=lambda i: len(examples[i][0]))
    chunks = [order[i: i + micro_batch] for i in range(0, len(order), micro_batch)]
    rng.shuffle(chunks)
    return [_collate([examples[i] for i in chunk]) for chunk in chunks]


def accumulation_step(model: Seq2SeqTransformer, optimizer: torch.optim.Optimizer,
                      micros: Sequence[tuple], grad_clip: float) -> tuple[float, int]:
    """One optimizer step over a group of micro batches.

    Losses are summed over all non-pad tokens of the group and normalized
    once, so the step matches a single large batch regardless of the split.
    """
    total_tokens = sum(int((y_out != PAD_ID).sum()) for _, _, _, y_out in micros)
    if total_tokens == 0:
        raise ValueError("accumulation group contains only padding")
    optimizer.zero_grad()
    loss_value = 0.0
    for x, x_pad, y_in, y_out in micros:
        logits = model(x, x_pad, y_in)
        loss_sum, _ = token_cross_entropy_sum(logits, y_out)
        (loss_sum / total_tokens).backward()
        loss_value += float(loss_sum.detach())
    if grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    optimizer.step()
    return loss_value, total_tokens


# ---------------------------------------------------------------------------
# the shared fit loop


def fit(model: Seq2SeqTransformer, config: TrainConfig,
        examples_for_epoch: Callable[[int], Sequence[Example]],
        evaluate: Callable[[Seq2SeqTransformer], float],
        label: str = "train") -> tuple[Seq2SeqTransformer, list[dict]]:
    """Train with early stopping; returns the best-validation checkpoint."""
    torch.manual_seed(config.rng_seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate,
                                  weight_decay=config.weight_decay)
    stopper = EarlyStopper(config.patience)
    best_state: dict | None = None
    history: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        examples = examples_for_epoch(epoch)
        if not examples:
            raise ValueError("no training examples")
        rng = Random(config.rng_seed * 1_000_003 + epoch)
        micros = make_micro_batches(examples, config.micro_batch, rng)
        model.train()
        t0 = time.perf_counter()
        loss_total, token_total = 0.0, 0
        for i in range(0, len(micros), config.accumulation_steps):
            loss_value, n_tokens = accumulation_step(
                model, optimizer, micros[i: i + config.accumulation_steps], config.grad_clip)
            loss_total += loss_value
            token_total += n_tokens
        train_loss = loss_total / token_total
        if not math.isfinite(train_loss):
            raise TrainingDivergedError(
                f"{label}: non-finite training loss at epoch {epoch} "
                f"(lr={config.learning_rate}, batch={config.batch_size})")
        val_metric = evaluate(model)
        improved = stopper.update(val_metric)
        if improved:
            best_state = copy.deepcopy(model.state_dict())
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_metric": val_metric, "best_so_far": stopper.best})
        logger.info("%s epoch %d: train_loss=%.4f val_metric=%.4f best=%.4f (%.1fs)",
                    label, epoch, train_loss, val_metric, stopper.best,
                    time.perf_counter() - t0)
        if stopper.should_stop:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    return model, history


# ---------------------------------------------------------------------------
# decoding-based evaluation


def decode_cases(model: Seq2SeqTransformer, cases: Sequence[Case], catalog: LabelCatalog,
                 vocab: Vocab, order: OrderSpec, *, max_input_len: int = 512,
                 max_target_len: int = 256, micro_batch: int = 64) -> tuple[list[TaskPredictions], float]:
    """Greedy-decode every case under one order; returns (preds, seconds)."""
    examples = [prompt_example(c, catalog, order, vocab, max_input_len, max_target_len)
                for c in cases]
    out_cap = min(max_target_len, max(len(t) for _, t in examples) + 16)
    t0 = time.perf_counter()
    preds: list[TaskPredictions] = []
    for i in range(0, len(examples), micro_batch):
        chunk = examples[i: i + micro_batch]
        ids, _ = greedy_decode_batch(model, [x for x, _ in chunk], out_cap)
        preds.extend(parse_decoded(vocab.decode(seq), order, catalog) for seq in ids)
    return preds, time.perf_counter() - t0


def decode_cases_teacher_forced(model: Seq2SeqTransformer, cases: Sequence[Case],
                                catalog: LabelCatalog, vocab: Vocab, order: OrderSpec, *,
                                max_input_len: int = 512, max_target_len: int = 256,
                                micro_batch: int = 64) -> tuple[list[TaskPredictions], float]:
    """Per-task decoding with gold predecessor spans forced into the decoder.

    For the k-th task, the decoder is fed the gold serialization of tasks
    0..k-1 plus the k-th sentinel, then decodes freely; only the k-th
    segment is kept. Per-task values are then recombined per case.
    """
    t0 = time.perf_counter()
    gold_targets = [build_prompt(c, catalog, order).target_text for c in cases]
    per_task_values: list[dict[TaskKind, object]] = [dict() for _ in cases]
    malformed = [False] * len(cases)
    inputs = [prompt_example(c, catalog, order, vocab, max_input_len, max_target_len)[0]
              for c in cases]
    for k, task in enumerate(order):
        marker = sentinel_token(k)
        prefixes = [t[: t.index(marker) + len(marker)] for t in gold_targets]
        forced = [vocab.encode(p).ids for p in prefixes]
        out_cap = min(max_target_len, max(len(f) for f in forced) + 96)
        for i in range(0, len(cases), micro_batch):
            ids, _ = greedy_decode_batch(model, inputs[i: i + micro_batch], out_cap,
                                         forced_prefixes=forced[i: i + micro_batch])
            for j, seq in enumerate(ids):
                parsed = parse_decoded(vocab.decode(seq), order, catalog)
                value = _task_value(parsed, task)
                if value is None and task is not TaskKind.COURT_VIEW:
                    malformed[i + j] = True
                per_task_values[i + j][task] = value
    preds = [TaskPredictions(
        articles=v.get(TaskKind.ARTICLE),
        charges=v.get(TaskKind.CHARGE),
        penalty_months=v.get(TaskKind.PENALTY),
        court_view=v.get(TaskKind.COURT_VIEW),
        article_content=v.get(TaskKind.ARTICLE_CONTENT),
        malformed=m,
    ) for v, m in zip(per_task_values, malformed)]
    return preds, time.perf_counter() - t0


def _task_value(pred: TaskPredictions, task: TaskKind):
    return {
        TaskKind.ARTICLE: pred.articles,
        TaskKind.CHARGE: pred.charges,
        TaskKind.PENALTY: pred.penalty_months,
        TaskKind.COURT_VIEW: pred.court_view,
        TaskKind.ARTICLE_CONTENT: pred.article_content,
    }[task]


def _merge_predictions(per_task: dict[TaskKind, list[TaskPredictions]],
                       n: int) -> list[TaskPredictions]:
    merged = []
    for i in range(n):
        fields: dict[TaskKind, object] = {}
        malformed = False
        for task, preds in per_task.items():
            fields[task] = _task_value(preds[i], task)
            malformed = malformed or preds[i].malformed
        merged.append(TaskPredictions(
            articles=fields.get(TaskKind.ARTICLE),
            charges=fields.get(TaskKind.CHARGE),
            penalty_months=fields.get(TaskKind.PENALTY),
            court_view=fields.get(TaskKind.COURT_VIEW),
            article_content=fields.get(TaskKind.ARTICLE_CONTENT),
            malformed=malformed,
        ))
    return merged


def predict(model: Seq2SeqTransformer, cases: Sequence[Case], catalog: LabelCatalog,
            vocab: Vocab, mode: TrainMode, *, max_input_len: int = 512,
            max_target_len: int = 256, micro_batch: int = 64) -> tuple[list[TaskPredictions], float]:
    """Decode cases the way the mode was trained: one joint pass for
    dependent/stl, one single-task pass per task for mtl_independent."""
    if mode.kind in ("dependent", "stl"):
        assert mode.order is not None
        return decode_cases(model, cases, catalog, vocab, mode.order,
                            max_input_len=max_input_len, max_target_len=max_target_len,
                            micro_batch=micro_batch)
    per_task: dict[TaskKind, list[TaskPredictions]] = {}
    elapsed = 0.0
    for task in mode.task_pool:
        preds, dt = decode_cases(model, cases, catalog, vocab, OrderSpec((task,)),
                                 max_input_len=max_input_len, max_target_len=max_target_len,
                                 micro_batch=micro_batch)
        per_task[task] = preds
        elapsed += dt
    return _merge_predictions(per_task, len(cases)), elapsed


def selection_metric(preds: Sequence[TaskPredictions], golds: Sequence[Case],
                     catalog: LabelCatalog, tasks: Iterable[TaskKind]) -> float:
    """Mean of per-task normalized scores: micro-F1 for the label tasks,
    exp(-log-distance) for penalty, token accuracy for the generative ones."""
    from .prompting import task_surface

    scores = []
    for task in tasks:
        if task is TaskKind.ARTICLE:
            scores.append(micro_f1([set(p.articles or ()) for p in preds],
                                   [set(c.articles) for c in golds]))
        elif task is TaskKind.CHARGE:
            scores.append(micro_f1([set(p.charges or ()) for p in preds],
                                   [set(c.charges) for c in golds]))
        elif task is TaskKind.PENALTY:
            dist = mean_log_distance([p.penalty_months for p in preds],
                                     [encode_penalty(c.penalty) for c in golds])
            scores.append(math.exp(-dist))
        elif task is TaskKind.COURT_VIEW:
            scores.append(sum(token_accuracy(p.court_view or "", c.court_view)
                              for p, c in zip(preds, golds)) / len(golds))
        else:
            scores.append(sum(token_accuracy(p.article_content or "",
                                             task_surface(c, catalog, task))
                              for p, c in zip(preds, golds)) / len(golds))
    if not scores:
        raise ValueError("no tasks to score")
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# pretraining and finetuning


def _document_texts(corpus: Corpus, catalog: LabelCatalog, max_chars: int) -> list[str]:
    return [_truncate_text_tokens(render_document(c, catalog, FULL_ORDER), max_chars)
            for c in corpus]


def pretrain(model: Seq2SeqTransformer, corpus: Corpus, mask_ratio: float, mean_span: float,
             config: TrainConfig, vocab: Vocab, catalog: LabelCatalog,
             ) -> tuple[Seq2SeqTransformer, list[dict]]:
    """Span-corruption training over rendered case documents."""
    if len(corpus) < 2:
        raise ValueError("pretraining needs at least 2 documents")
    docs = _document_texts(corpus, catalog, config.max_input_len - 16)
    n_val = max(1, len(docs) // 10)
    order = list(range(len(docs)))
    Random(config.rng_seed).shuffle(order)
    val_docs = [docs[i] for i in order[:n_val]]
    train_docs = [docs[i] for i in order[n_val:]]

    def examples_for_epoch(epoch: int) -> list[Example]:
        rng = Random(config.rng_seed * 1_000_003 + 101 * epoch + 1)
        return [corruption_example(d, mask_ratio, mean_span, rng, vocab, config.max_target_len)
                for d in train_docs]

    val_rng = Random(config.rng_seed * 1_000_003 + 2)
    val_examples = [corruption_example(d, mask_ratio, mean_span, val_rng, vocab,
                                       config.max_target_len) for d in val_docs]

    def evaluate(m: Seq2SeqTransformer) -> float:
        return -held_out_loss(m, val_examples, config.micro_batch)

    return fit(model, config, examples_for_epoch, evaluate, label="pretrain")


def held_out_loss(model: Seq2SeqTransformer, examples: Sequence[Example],
                  micro_batch: int = 64) -> float:
    """Mean token cross-entropy of teacher-forced examples, without grads."""
    was_training = model.training
    model.eval()
    try:
        total, tokens = 0.0, 0
        with torch.no_grad():
            for i in range(0, len(examples), micro_batch):
                x, x_pad, y_in, y_out = _collate(examples[i: i + micro_batch])
                loss_sum, n = token_cross_entropy_sum(model(x, x_pad, y_in), y_out)
                total += float(loss_sum)
                tokens += n
        return total / tokens
    finally:
        model.train(was_training)


def finetune(model: Seq2SeqTransformer, train: Corpus, val: Corpus, mode: TrainMode,
             config: TrainConfig, vocab: Vocab, catalog: LabelCatalog,
             ) -> tuple[Seq2SeqTransformer, list[dict]]:
    """Ordered finetuning under one of the three modes."""
    if not train:
        raise ValueError("empty train set")

    def examples_for_epoch(epoch: int) -> list[Example]:
        if mode.kind == "mtl_independent":
            rng = Random(config.rng_seed * 1_000_003 + 101 * epoch + 3)
            orders = [OrderSpec((rng.choice(mode.task_pool),)) for _ in train]
        else:
            assert mode.order is not None
            orders = [mode.order] * len(train)
        return [prompt_example(c, catalog, o, vocab, config.max_input_len, config.max_target_len)
                for c, o in zip(train, orders)]

    val_sub = list(val)
    if len(val_sub) > config.val_cases_cap:
        val_sub = Random(config.rng_seed).sample(val_sub, config.val_cases_cap)

    def evaluate(m: Seq2SeqTransformer) -> float:
        preds, _ = predict(m, val_sub, catalog, vocab, mode,
                           max_input_len=config.max_input_len,
                           max_target_len=config.max_target_len)
        return selection_metric(preds, val_sub, catalog, mode.tasks)

    return fit(model, config, examples_for_epoch, evaluate, label=f"finetune[{mode.kind}]")


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepReport:
    rows: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": self.rows}


def run_order_sweep(splits: tuple[Corpus, Corpus, Corpus], orders: Sequence[OrderSpec],
                    config: TrainConfig, vocab: Vocab, catalog: LabelCatalog,
                    model_config: ModelConfig, pretrained: Seq2SeqTransformer | None = None,
                    eval_cap: int = 1000) -> SweepReport:
    """Finetune one model per order from a shared starting point; report
    self-predicted and teacher-forced metrics per task."""
    if not orders:
        raise ValueError("need at least one order")
    train, val, test = splits
    test_sub = test[:eval_cap]
    report = SweepReport()
    for order in orders:
        model = copy.deepcopy(pretrained) if pretrained is not None else Seq2SeqTransformer(model_config)
        model, history = finetune(model, train, val, TrainMode.dependent(order), config,
                                  vocab, catalog)
        self_preds, dt = decode_cases(model, test_sub, catalog, vocab, order,
                                      max_input_len=config.max_input_len,
                                      max_target_len=config.max_target_len)
        forced_preds, _ = decode_cases_teacher_forced(model, test_sub, catalog, vocab, order,
                                                      max_input_len=config.max_input_len,
                                                      max_target_len=config.max_target_len)
        report.rows.append({
            "order": str(order),
            "epochs": len(history),
            "metrics": build_report(self_preds, test_sub, catalog, order.tasks, dt).to_dict(),
            "teacher_forced": build_report(forced_preds, test_sub, catalog, order.tasks).to_dict(),
        })
    return report


def run_data_size_sweep(splits: tuple[Corpus, Corpus, Corpus], sizes: Sequence[int],
                        order: OrderSpec, config: TrainConfig, vocab: Vocab,
                        catalog: LabelCatalog, model_config: ModelConfig,
                        pretrained: Seq2SeqTransformer | None = None,
                        eval_cap: int = 1000) -> SweepReport:
    """Train on nested subsets of ascending size from an identical start."""
    if list(sizes) != sorted(sizes):
        raise ValueError("sizes must ascend")
    train, val, test = splits
    if sizes and sizes[-1] > len(train):
        raise ValueError(f"largest size {sizes[-1]} exceeds train set ({len(train)})")
    shuffled = list(train)
    Random(config.rng_seed).shuffle(shuffled)
    test_sub = test[:eval_cap]
    report = SweepReport()
    for size in sizes:
        model = copy.deepcopy(pretrained) if pretrained is not None else Seq2SeqTransformer(model_config)
        model, history = finetune(model, shuffled[:size], val, TrainMode.dependent(order),
                                  config, vocab, catalog)
        preds, dt = decode_cases(model, test_sub, catalog, vocab, order,
                                 max_input_len=config.max_input_len,
                                 max_target_len=config.max_target_len)
        report.rows.append({
            "size": size,
            "epochs": len(history),
            "metrics": build_report(preds, test_sub, catalog, order.tasks, dt).to_dict(),
            "selection_metric": selection_metric(preds, test_sub, catalog, order.tasks),
        })
    return report


__all__ = [
    "EarlyStopper", "Example", "SweepReport", "TrainConfig", "TrainMode",
    "TrainingDivergedError", "accumulation_step", "corruption_example",
    "decode_cases", "decode_cases_teacher_forced", "finetune", "fit",
    "held_out_loss", "make_micro_batches", "predict", "pretrain",
    "prompt_example", "run_data_size_sweep", "run_order_sweep", "selection_metric",
]
