"""Masked prompts, ordered targets, decoding-order control, span corruption.

A case document is the fact followed by one short sentence per judgment
field. ``build_prompt`` replaces each requested field's value with a
numbered sentinel and serializes the values, in decode order, into the
target string. ``parse_decoded`` inverts that serialization on arbitrary
model output. ``span_corrupt`` applies the same sentinel scheme to random
token spans of any text.

Field sentences are fixed module-level templates so prompts are built the
same way regardless of the corpus language.
"""

from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass
from random import Random
from typing import Iterable, Iterator

from .corpus import Case, Corpus, LabelCatalog, PenaltyTerm, LIFE_MONTHS, DEATH_MONTHS
from .tokenizer import SEP_TOKEN, Vocab, build_vocab, sentinel_token


class TaskKind(enum.Enum):
    """The five decodable fields of a judgment document."""

    ARTICLE = "A"
    CHARGE = "C"
    PENALTY = "P"
    COURT_VIEW = "V"
    ARTICLE_CONTENT = "X"

    @classmethod
    def from_code(cls, code: str) -> "TaskKind":
        for kind in cls:
            if kind.value == code:
                return kind
        raise ValueError(f"unknown task code {code!r} (expected one of A C P V X)")


MAIN_TASKS = (TaskKind.ARTICLE, TaskKind.CHARGE, TaskKind.PENALTY)
AUX_TASKS = (TaskKind.COURT_VIEW, TaskKind.ARTICLE_CONTENT)

FIELD_SENTENCES = {
    TaskKind.ARTICLE: "The court cites {} .",
    TaskKind.CHARGE: "The conviction is {} .",
    TaskKind.PENALTY: "The penalty is {} .",
    TaskKind.COURT_VIEW: "Court view : {} .",
    TaskKind.ARTICLE_CONTENT: "Article content : {} .",
}

_SENTINEL_RE = re.compile(r"⟨extra_(\d{1,2})⟩")


@dataclass(frozen=True)
class OrderSpec:
    """An ordered, duplicate-free selection of tasks to decode."""

    tasks: tuple[TaskKind, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not (1 <= len(self.tasks) <= 5):
            raise ValueError("an order holds 1..5 tasks")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError("duplicate task in order")
        if TaskKind.ARTICLE_CONTENT in self.tasks and TaskKind.ARTICLE not in self.tasks:
            raise ValueError("article-content decoding requires the article task in the same order")

    @classmethod
    def from_string(cls, codes: str) -> "OrderSpec":
        return cls(tuple(TaskKind.from_code(c) for c in codes.strip().upper()))

    def __str__(self) -> str:
        return "".join(t.value for t in self.tasks)

    def __iter__(self) -> Iterator[TaskKind]:
        return iter(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True)
class PromptTarget:
    """A masked input text and its sentinel-delimited target serialization."""

    input_text: str
    target_text: str
    sentinel_map: tuple[tuple[int, TaskKind | None], ...]

    @property
    def n_spans(self) -> int:
        return len(self.sentinel_map)

    def spans(self) -> list[str]:
        """The raw span texts, in target order (end sentinel excluded)."""
        _, segments = split_at_sentinels(self.target_text)
        return segments[: self.n_spans]

    def reconstruct(self) -> str:
        """Substitute target spans back into the input sentinels."""
        spans = self.spans()
        if len(spans) < self.n_spans:
            raise ValueError("target does not carry one span per sentinel")
        by_index = {index: spans[pos] for pos, (index, _) in enumerate(self.sentinel_map)}
        return _SENTINEL_RE.sub(lambda m: by_index[int(m.group(1))], self.input_text)


@dataclass(frozen=True)
class TaskPredictions:
    """Per-task values recovered from one decoded sequence.

    A field is None when its task was not in the order or its span could
    not be parsed. ``malformed`` records any structural defect of the
    decoded sequence (missing sentinels, trailing junk, unparseable
    penalty); label values unknown to the catalog are kept verbatim.
    """

    articles: frozenset[str] | None = None
    charges: frozenset[str] | None = None
    penalty_months: int | None = None
    court_view: str | None = None
    article_content: str | None = None
    malformed: bool = False


def split_at_sentinels(text: str) -> tuple[str, list[str]]:
    """Return (text before the first sentinel, segment after each sentinel)."""
    matches = list(_SENTINEL_RE.finditer(text))
    if not matches:
        return text, []
    leading = text[: matches[0].start()]
    segments = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        segments.append(text[m.end(): end])
    return leading, segments


def normalize_label(text: str) -> str:
    return " ".join(text.split())


def penalty_surface(penalty: PenaltyTerm) -> str:
    if penalty.kind == "fixed":
        return str(penalty.months)
    return penalty.kind  # "life" | "death"


def parse_penalty_surface(text: str) -> int | None:
    s = normalize_label(text)
    if s == "life":
        return LIFE_MONTHS
    if s == "death":
        return DEATH_MONTHS
    if s.isdigit():
        return int(s)
    return None


def task_surface(case: Case, catalog: LabelCatalog, task: TaskKind) -> str:
    """The text a task span carries inside the document."""
    if task is TaskKind.ARTICLE:
        return f" {SEP_TOKEN} ".join(catalog.sort_articles(case.articles))
    if task is TaskKind.CHARGE:
        return f" {SEP_TOKEN} ".join(catalog.sort_charges(case.charges))
    if task is TaskKind.PENALTY:
        return penalty_surface(case.penalty)
    if task is TaskKind.COURT_VIEW:
        return case.court_view
    contents = []
    for aid in catalog.sort_articles(case.articles):
        contents.append(catalog.content_of(aid))  # raises KeyError for unknown ids
    return f" {SEP_TOKEN} ".join(contents)


def render_document(case: Case, catalog: LabelCatalog, order: OrderSpec) -> str:
    """The unmasked document: fact, then one field sentence per task."""
    parts = [case.fact]
    for task in order:
        parts.append(FIELD_SENTENCES[task].format(task_surface(case, catalog, task)))
    return " ".join(parts)


def build_prompt(case: Case, catalog: LabelCatalog, order: OrderSpec) -> PromptTarget:
    """Mask the order's field values with sentinels; serialize them in order.

    Sentinel k marks the k-th decoded task both in the input (fields are
    laid out in decode order after the fact) and in the target, so indices
    ascend on both sides. The target is ``⟨extra_0⟩span0⟨extra_1⟩span1...``
    closed by the next unused sentinel.
    """
    surfaces = [task_surface(case, catalog, task) for task in order]
    parts = [case.fact]
    for k, task in enumerate(order):
        parts.append(FIELD_SENTENCES[task].format(sentinel_token(k)))
    input_text = " ".join(parts)
    target_text = "".join(sentinel_token(k) + s for k, s in enumerate(surfaces)) + sentinel_token(len(surfaces))
    sentinel_map = tuple((k, task) for k, task in enumerate(order))
    return PromptTarget(input_text, target_text, sentinel_map)


def parse_decoded(decoded: str, order: OrderSpec, catalog: LabelCatalog) -> TaskPredictions:
    """Recover task values from arbitrary decoded text.

    The k-th sentinel-delimited segment belongs to the k-th task in the
    order. Missing sentinels leave the remaining tasks absent; a missing
    end sentinel still parses the last task from the trailing text. Both
    cases set ``malformed``.
    """
    leading, segments = split_at_sentinels(decoded)
    n_tasks = len(order)
    malformed = bool(leading.strip())
    if len(segments) != n_tasks + 1:
        malformed = True
    elif segments[n_tasks].strip():
        malformed = True

    values: dict[TaskKind, object] = {}
    for pos, task in enumerate(order):
        if pos >= len(segments):
            continue
        seg = segments[pos]
        if task in (TaskKind.ARTICLE, TaskKind.CHARGE):
            # catalog matching is exact after whitespace normalization, and
            # non-catalog labels are kept verbatim, so the kept value is the
            # normalized string either way
            labels = [normalize_label(p) for p in seg.split(SEP_TOKEN)]
            values[task] = frozenset(l for l in labels if l)
        elif task is TaskKind.PENALTY:
            months = parse_penalty_surface(seg)
            if months is None:
                malformed = True
            else:
                values[task] = months
        else:
            values[task] = seg.strip()

    return TaskPredictions(
        articles=values.get(TaskKind.ARTICLE),
        charges=values.get(TaskKind.CHARGE),
        penalty_months=values.get(TaskKind.PENALTY),
        court_view=values.get(TaskKind.COURT_VIEW),
        article_content=values.get(TaskKind.ARTICLE_CONTENT),
        malformed=malformed,
    )


def gold_predictions(case: Case, catalog: LabelCatalog, order: OrderSpec) -> TaskPredictions:
    """The case's own labels in TaskPredictions form, for the given order."""
    from .corpus import encode_penalty

    return TaskPredictions(
        articles=frozenset(case.articles) if TaskKind.ARTICLE in order.tasks else None,
        charges=frozenset(case.charges) if TaskKind.CHARGE in order.tasks else None,
        penalty_months=encode_penalty(case.penalty) if TaskKind.PENALTY in order.tasks else None,
        court_view=case.court_view if TaskKind.COURT_VIEW in order.tasks else None,
        article_content=(task_surface(case, catalog, TaskKind.ARTICLE_CONTENT)
                         if TaskKind.ARTICLE_CONTENT in order.tasks else None),
        malformed=False,
    )


# ---------------------------------------------------------------------------
# span corruption


def span_corrupt(text: str, mask_ratio: float, mean_span: float, rng: Random) -> PromptTarget:
    """Mask random non-overlapping token spans of ``text``.

    Span lengths follow a geometric distribution with the given mean,
    clamped at 10 tokens; the last span is trimmed so the masked token
    count is exactly ``round(mask_ratio * n_tokens)``. Replaced segments
    keep their original characters, so reconstruction is byte-exact even
    for irregular whitespace.
    """
    if not (0.0 <= mask_ratio < 1.0):
        raise ValueError("mask_ratio must be in [0, 1)")
    if mean_span < 1.0:
        raise ValueError("mean_span must be >= 1")
    tokens = list(re.finditer(r"\S+", text))
    n = len(tokens)
    if n < 8:
        raise ValueError(f"text too short to corrupt ({n} tokens, need >= 8)")
    if mask_ratio == 0.0:
        return PromptTarget(text, sentinel_token(0), ())

    num_noise = max(1, round(mask_ratio * n))
    max_spans = min(99, n - num_noise + 1)  # keep one unmasked token between spans
    lengths: list[int] = []
    total = 0
    while total < num_noise and len(lengths) < max_spans:
        if mean_span <= 1.0:
            length = 1
        else:
            u = rng.random()
            length = min(math.ceil(math.log(1.0 - u) / math.log(1.0 - 1.0 / mean_span)), 10)
        length = min(length, num_noise - total)
        lengths.append(length)
        total += length
    if total < num_noise:
        lengths[-1] += num_noise - total
    m = len(lengths)

    # spread the unmasked tokens over the m+1 gaps; interior gaps get >= 1
    free = (n - num_noise) - (m - 1)
    dividers = sorted(rng.sample(range(free + m), m))
    parts = []
    prev = -1
    for d in dividers:
        parts.append(d - prev - 1)
        prev = d
    parts.append(free + m - 1 - prev)
    gaps = [parts[0]] + [p + 1 for p in parts[1:m]] + [parts[m]]

    pieces: list[str] = []
    span_texts: list[str] = []
    pos = 0
    prev_char = 0
    for k in range(m):
        pos += gaps[k]
        start_char = tokens[pos].start()
        end_char = tokens[pos + lengths[k] - 1].end()
        pieces.append(text[prev_char:start_char])
        pieces.append(sentinel_token(k))
        span_texts.append(text[start_char:end_char])
        prev_char = end_char
        pos += lengths[k]
    pieces.append(text[prev_char:])

    input_text = "".join(pieces)
    target_text = "".join(sentinel_token(k) + s for k, s in enumerate(span_texts)) + sentinel_token(m)
    return PromptTarget(input_text, target_text, tuple((k, None) for k in range(m)))


# ---------------------------------------------------------------------------
# order enumeration


def enumerate_orders(tasks: Iterable[TaskKind],
                     first: Iterable[TaskKind] = (),
                     last: Iterable[TaskKind] = (),
                     before: Iterable[tuple[TaskKind, TaskKind]] = ()) -> list[OrderSpec]:
    """All orderings of ``tasks`` satisfying the positional constraints.

    ``first``/``last`` pin a subset to the leading/trailing positions (in
    any internal arrangement); ``before`` lists (a, b) precedence pairs.
    Contradictory constraints simply yield an empty list.
    """
    task_list = sorted(set(tasks), key=lambda t: t.value)
    if not task_list:
        raise ValueError("tasks must be nonempty")
    first_set, last_set = set(first), set(last)
    before_pairs = list(before)
    out: list[OrderSpec] = []
    for perm in itertools.permutations(task_list):
        if first_set and set(perm[: len(first_set)]) != first_set:
            continue
        if last_set and set(perm[len(perm) - len(last_set):]) != last_set:
            continue
        index = {t: i for i, t in enumerate(perm)}
        if any(a not in index or b not in index or index[a] >= index[b] for a, b in before_pairs):
            continue
        try:
            out.append(OrderSpec(perm))
        except ValueError:
            continue
    return out


# ---------------------------------------------------------------------------
# vocabulary over rendered documents


FULL_ORDER = OrderSpec((TaskKind.ARTICLE, TaskKind.CHARGE, TaskKind.PENALTY,
                        TaskKind.COURT_VIEW, TaskKind.ARTICLE_CONTENT))


def vocab_from_corpus(corpus: Corpus, catalog: LabelCatalog, min_count: int = 1) -> Vocab:
    """Character vocab over every document rendering plus the catalog texts."""
    def texts() -> Iterator[str]:
        for case in corpus:
            yield render_document(case, catalog, FULL_ORDER)
        for _, content in catalog.articles:
            yield content
        for charge in catalog.charges:
            yield charge
    return build_vocab(texts(), min_count=min_count, extra_characters="0123456789 lifedeath")


__all__ = [
    "AUX_TASKS", "FIELD_SENTENCES", "FULL_ORDER", "MAIN_TASKS", "OrderSpec",
    "PromptTarget", "TaskKind", "TaskPredictions",
    "build_prompt", "enumerate_orders", "gold_predictions", "normalize_label",
    "parse_decoded", "parse_penalty_surface", "penalty_surface",
    "render_document", "span_corrupt", "split_at_sentinels", "task_surface",
    "vocab_from_corpus",
]
