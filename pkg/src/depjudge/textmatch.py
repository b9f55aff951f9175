"""Text-matching baseline: fact x article-content binary relevance.

Each (fact, content) pair is scored by the same encoder-decoder model; the
relevance probability is the softmax mass of the "1" character at the first
decode step. Predicting articles this way scans the whole catalog per case,
which is what the timing comparison against generative decoding measures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from random import Random
from typing import Sequence

import torch

from .corpus import Case, Corpus, LabelCatalog
from .metrics import build_report
from .model import Seq2SeqTransformer
from .prompting import OrderSpec, TaskKind, TaskPredictions
from .tokenizer import END_ID, PAD_ID, SEP_TOKEN, Vocab
from .training import Example, TrainConfig, decode_cases, fit, held_out_loss

RELEVANT = "1"
IRRELEVANT = "0"


@dataclass(frozen=True)
class MatchExample:
    fact: str
    article_id: str
    content: str
    label: int  # 1 relevant, 0 irrelevant


def build_matching_dataset(corpus: Corpus, catalog: LabelCatalog, neg_ratio: int = 31,
                           rng: Random | None = None) -> list[MatchExample]:
    """One positive pair per gold article per case plus ``neg_ratio``
    uniform negatives per positive, sampled without replacement from the
    case's non-gold articles."""
    if neg_ratio < 0:
        raise ValueError("neg_ratio must be >= 0")
    if neg_ratio >= len(catalog.articles):
        raise ValueError(f"neg_ratio {neg_ratio} >= catalog size {len(catalog.articles)}")
    rng = rng or Random(0)
    out: list[MatchExample] = []
    for case in corpus:
        non_gold = [a for a in catalog.article_ids if a not in case.articles]
        for aid in catalog.sort_articles(case.articles):
            out.append(MatchExample(case.fact, aid, catalog.content_of(aid), 1))
            for neg in rng.sample(non_gold, min(neg_ratio, len(non_gold))):
                out.append(MatchExample(case.fact, neg, catalog.content_of(neg), 0))
    return out


def match_input_text(fact: str, content: str, max_chars: int = 512) -> str:
    """Concatenate fact and content; the fact is truncated first when the
    pair would exceed the length budget."""
    sep = f" {SEP_TOKEN} "
    budget = max_chars - len(content) - len(sep)
    if len(fact) > budget:
        cut = fact.rfind(" ", 0, max(budget, 8))
        fact = fact[:cut] if cut > 0 else fact[: max(budget, 8)]
    return f"{fact}{sep}{content}"


def _matching_example(ex: MatchExample, vocab: Vocab, max_input_len: int) -> Example:
    x = vocab.encode(match_input_text(ex.fact, ex.content, max_input_len)).ids
    t = vocab.encode(RELEVANT if ex.label else IRRELEVANT).ids + [END_ID]
    return x, t


def train_matcher(model: Seq2SeqTransformer, dataset: Sequence[MatchExample],
                  config: TrainConfig, vocab: Vocab) -> tuple[Seq2SeqTransformer, list[dict]]:
    """Cross-entropy training on the relevance token; selection by held-out loss."""
    if not dataset:
        raise ValueError("empty matching dataset")
    examples = [_matching_example(ex, vocab, config.max_input_len) for ex in dataset]
    order = list(range(len(examples)))
    Random(config.rng_seed).shuffle(order)
    n_val = max(1, len(examples) // 10)
    val = [examples[i] for i in order[:n_val]]
    train = [examples[i] for i in order[n_val:]]
    return fit(model, config, lambda epoch: train,
               lambda m: -held_out_loss(m, val, config.micro_batch), label="matcher")


def match_score(model: Seq2SeqTransformer, vocab: Vocab, fact: str, content: str,
                max_input_len: int = 512) -> float:
    """P(relevant) as the first-step softmax mass of the relevance token."""
    ids = vocab.encode(match_input_text(fact, content, max_input_len)).ids
    logits = model.logits_for(ids, [PAD_ID])[0]
    probs = torch.softmax(logits, dim=-1)
    return float(probs[vocab.id_of(RELEVANT)])


def predict_articles_by_matching(model: Seq2SeqTransformer, vocab: Vocab, fact: str,
                                 catalog: LabelCatalog, threshold: float = 0.7,
                                 max_input_len: int = 512) -> tuple[set[str], float]:
    """Scan the catalog sequentially; keep articles scoring >= threshold,
    falling back to the single best article when none pass. Returns the
    predicted set and the wall-clock seconds of the full scan."""
    if not catalog.articles:
        raise ValueError("empty catalog")
    t0 = time.perf_counter()
    scores = {aid: match_score(model, vocab, fact, content, max_input_len)
              for aid, content in catalog.articles}
    elapsed = time.perf_counter() - t0
    chosen = {aid for aid, s in scores.items() if s >= threshold}
    if not chosen:
        chosen = {max(catalog.article_ids, key=lambda a: scores[a])}
    return chosen, elapsed


def speed_comparison(match_model: Seq2SeqTransformer, gen_model: Seq2SeqTransformer,
                     cases: Sequence[Case], catalog: LabelCatalog, vocab: Vocab,
                     threshold: float = 0.7, max_input_len: int = 512,
                     max_target_len: int = 64) -> dict:
    """Per-case latency of catalog-scan matching vs one generative decode of
    the article task, on the same cases and hardware."""
    order = OrderSpec((TaskKind.ARTICLE,))
    match_times, match_preds = [], []
    for case in cases:
        pred, dt = predict_articles_by_matching(match_model, vocab, case.fact, catalog,
                                                threshold, max_input_len)
        match_times.append(dt)
        match_preds.append(TaskPredictions(articles=frozenset(pred)))
    gen_times = []
    gen_preds = []
    for case in cases:  # one case at a time so the timing is per-case
        preds, dt = decode_cases(gen_model, [case], catalog, vocab, order,
                                 max_input_len=max_input_len, max_target_len=max_target_len,
                                 micro_batch=1)
        gen_times.append(dt)
        gen_preds.extend(preds)
    return {
        "catalog_size": len(catalog.articles),
        "match_seconds_per_case": sum(match_times) / len(match_times),
        "generative_seconds_per_case": sum(gen_times) / len(gen_times),
        "match_report": build_report(match_preds, list(cases), catalog, [TaskKind.ARTICLE],
                                     sum(match_times)).to_dict(),
        "generative_report": build_report(gen_preds, list(cases), catalog, [TaskKind.ARTICLE],
                                          sum(gen_times)).to_dict(),
    }


__all__ = [
    "IRRELEVANT", "MatchExample", "RELEVANT",
    "build_matching_dataset", "match_input_text", "match_score",
    "predict_articles_by_matching", "speed_comparison", "train_matcher",
]
