"""Synthetic judgment-case corpora: domain types, generation, IO, splits, stats.

A case couples a fact narrative with its judgment labels (law articles,
charges, a penalty term) and an explanatory court-view paragraph. The
generator plants noisy lexical cues for the true labels inside the fact so
that label difficulty is controllable, and can wire deterministic
dependencies between articles, charges and penalty.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from random import Random
from typing import Iterable

LIFE_MONTHS = 350
DEATH_MONTHS = 400
MAX_FIXED_MONTHS = 300

DEPENDENCY_MODES = ("independent", "article_determines_charge", "chained")
TEMPLATE_SETS = ("en", "cjk")


class CorpusFormatError(ValueError):
    """Raised when a corpus or catalog file cannot be parsed."""


@dataclass(frozen=True)
class PenaltyTerm:
    """A sentencing outcome: a fixed number of months, life, or death."""

    kind: str  # "fixed" | "life" | "death"
    months: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "fixed":
            if self.months is None or not (0 <= self.months <= MAX_FIXED_MONTHS):
                raise ValueError(f"fixed term must be 0..{MAX_FIXED_MONTHS} months, got {self.months}")
        elif self.kind in ("life", "death"):
            if self.months is not None:
                raise ValueError(f"{self.kind} term carries no month count")
        else:
            raise ValueError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def fixed(cls, months: int) -> "PenaltyTerm":
        return cls("fixed", months)

    @classmethod
    def life(cls) -> "PenaltyTerm":
        return cls("life")

    @classmethod
    def death(cls) -> "PenaltyTerm":
        return cls("death")


def encode_penalty(penalty: PenaltyTerm) -> int:
    """Map a penalty term onto the month scale (life=350, death=400)."""
    if penalty.kind == "fixed":
        assert penalty.months is not None
        return penalty.months
    if penalty.kind == "life":
        return LIFE_MONTHS
    return DEATH_MONTHS


@dataclass(frozen=True)
class Case:
    """One legal case: fact text plus its judgment labels."""

    id: str
    fact: str
    articles: frozenset[str]
    charges: frozenset[str]
    penalty: PenaltyTerm
    court_view: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "articles", frozenset(self.articles))
        object.__setattr__(self, "charges", frozenset(self.charges))
        if not self.fact:
            raise ValueError(f"case {self.id}: empty fact")
        if not self.articles:
            raise ValueError(f"case {self.id}: no articles")
        if not self.charges:
            raise ValueError(f"case {self.id}: no charges")


Corpus = list[Case]


def _natural_key(label: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", label))


@dataclass(frozen=True)
class LabelCatalog:
    """The closed label sets: (article id, content text) pairs and charge ids."""

    articles: tuple[tuple[str, str], ...]
    charges: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "articles", tuple((a, c) for a, c in self.articles))
        object.__setattr__(self, "charges", tuple(self.charges))
        ids = [a for a, _ in self.articles]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate article ids in catalog")
        if any(not content for _, content in self.articles):
            raise ValueError("every article needs nonempty content")
        if len(set(self.charges)) != len(self.charges):
            raise ValueError("duplicate charge ids in catalog")

    @property
    def article_ids(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.articles)

    def content_of(self, article_id: str) -> str:
        for aid, content in self.articles:
            if aid == article_id:
                return content
        raise KeyError(f"article {article_id!r} not in catalog")

    def sort_articles(self, labels: Iterable[str]) -> list[str]:
        """Canonical (catalog-order) sort; unknown labels go last, natural order."""
        order = {aid: i for i, aid in enumerate(self.article_ids)}
        return sorted(labels, key=lambda l: (order.get(l, len(order)), _natural_key(l)))

    def sort_charges(self, labels: Iterable[str]) -> list[str]:
        order = {c: i for i, c in enumerate(self.charges)}
        return sorted(labels, key=lambda l: (order.get(l, len(order)), _natural_key(l)))


@dataclass(frozen=True)
class PenaltyRule:
    """Deterministic article-set -> months map with optional relative noise.

    Base months come from a fixed table cycled by article index; a case's
    base is the maximum over its articles. ``life_fraction``/``death_fraction``
    reserve the highest article indices for life/death sentences.
    """

    relative_noise: float = 0.1
    life_fraction: float = 0.0
    death_fraction: float = 0.0

    BASE_TABLE = (4, 8, 11, 16, 20, 30, 42, 54, 72, 90, 110, 160, 200, 260, 300, 6, 12, 24, 36, 60)

    def base_months(self, article_index: int) -> int:
        return self.BASE_TABLE[article_index % len(self.BASE_TABLE)]

    def special_kind(self, article_index: int, n_articles: int) -> str | None:
        n_death = int(n_articles * self.death_fraction)
        n_life = int(n_articles * self.life_fraction)
        if article_index >= n_articles - n_death:
            return "death"
        if article_index >= n_articles - n_death - n_life:
            return "life"
        return None

    def apply(self, article_indices: Iterable[int], n_articles: int, rng: Random) -> PenaltyTerm:
        indices = list(article_indices)
        kinds = [self.special_kind(i, n_articles) for i in indices]
        if "death" in kinds:
            return PenaltyTerm.death()
        if "life" in kinds:
            return PenaltyTerm.life()
        base = max(self.base_months(i) for i in indices)
        months = round(base * (1.0 + rng.gauss(0.0, self.relative_noise)))
        return PenaltyTerm.fixed(min(max(months, 1), MAX_FIXED_MONTHS))


@dataclass(frozen=True)
class GeneratorSpec:
    """Knobs for synthetic corpus generation."""

    n_cases: int
    n_articles: int
    n_charges: int
    dependency_mode: str = "article_determines_charge"
    fact_noise_level: float = 0.0
    penalty_rule: PenaltyRule = field(default_factory=PenaltyRule)
    rng_seed: int = 0
    template: str = "en"
    multi_article_rate: float = 0.15

    def validate(self) -> None:
        if self.n_cases < 0:
            raise ValueError("n_cases must be >= 0")
        if self.n_articles < 1 or self.n_charges < 1:
            raise ValueError("label counts must be >= 1")
        if not (0.0 <= self.fact_noise_level <= 1.0):
            raise ValueError("fact_noise_level must be in [0, 1]")
        if self.dependency_mode not in DEPENDENCY_MODES:
            raise ValueError(f"dependency_mode must be one of {DEPENDENCY_MODES}")
        if self.template not in TEMPLATE_SETS:
            raise ValueError(f"template must be one of {TEMPLATE_SETS}")
        if not (0.0 <= self.multi_article_rate <= 1.0):
            raise ValueError("multi_article_rate must be in [0, 1]")


# ---------------------------------------------------------------------------
# word banks for fact templates

_CHARGE_NAMES = (
    "theft", "robbery", "fraud", "arson", "assault", "smuggling", "bribery",
    "kidnapping", "forgery", "embezzlement", "extortion", "vandalism",
    "poaching", "trespass", "perjury", "rioting", "looting", "blackmail",
    "piracy", "sabotage", "coercion", "swindling", "counterfeiting", "mutiny",
)
_ARTICLE_CUES = (
    "ledger", "furnace", "orchard", "harness", "anvil", "quarry", "lantern",
    "gable", "cistern", "plinth", "mortar", "spindle", "trellis", "bellows",
    "culvert", "gantry", "paddock", "sluice", "tannery", "wharf", "kiln",
    "rookery", "stile", "byre", "crag", "fenland", "garret", "hovel",
    "inglenook", "jetty", "keep", "loft", "maltings", "nook", "oast",
    "pantry", "quay", "rick", "smithy", "turret",
)
_CHARGE_CUES = (
    "grasping", "torching", "deceiving", "striking", "carrying", "bribing",
    "seizing", "copying", "diverting", "squeezing", "smashing", "snaring",
    "entering", "lying", "storming", "stripping", "menacing", "raiding",
    "wrecking", "forcing", "tricking", "minting", "rebelling", "prowling",
    "lifting", "burning", "duping", "beating", "ferrying", "greasing",
    "clutching", "tracing", "skimming", "crushing", "breaking", "trapping",
)
_CONFOUNDERS = (
    "paperwork", "weather", "traffic", "routine", "schedule", "luggage",
    "gossip", "scenery", "catering", "signage", "plumbing", "seating",
    "lighting", "parking", "queueing", "painting", "gardening", "printing",
)
_NAMES = ("Chen", "Li", "Wang", "Zhao", "Sun", "Zhou", "Wu", "Zheng", "Feng", "Qian", "Han", "Yang")
_PLACES = ("market", "harbor", "depot", "warehouse", "station", "mill", "garage", "arcade", "pier", "foundry")

_CJK_NAMES = ("陈某", "李某", "王某", "赵某", "孙某", "周某")
_CJK_PLACES = ("市场", "码头", "仓库", "车站", "工厂", "商铺")
_CJK_CHARGE_NAMES = ("盗窃", "抢劫", "诈骗", "纵火", "伤害", "走私", "受贿", "绑架", "伪造", "侵占", "敲诈", "破坏")
_CJK_SYLLABLES = ("金", "木", "水", "火", "土", "山", "石", "田", "禾", "竹", "丝", "瓦", "舟", "车", "门", "井")

_SYLLABLES = ("ba", "den", "vor", "mil", "tas", "ren", "kol", "fen", "sur", "gam", "lit", "pov", "zed", "nar", "usk", "oth")


def _pseudo_word(index: int, flavor: int) -> str:
    parts = []
    x = index * 7 + flavor * 3 + 11
    for _ in range(3):
        parts.append(_SYLLABLES[x % len(_SYLLABLES)])
        x //= len(_SYLLABLES)
    return "".join(parts)


def _cjk_pseudo_word(index: int, flavor: int) -> str:
    x = index * 5 + flavor * 2 + 7
    a = _CJK_SYLLABLES[x % len(_CJK_SYLLABLES)]
    b = _CJK_SYLLABLES[(x // len(_CJK_SYLLABLES) + flavor) % len(_CJK_SYLLABLES)]
    return a + b


def _bank(base: tuple[str, ...], n: int, flavor: int, cjk: bool = False) -> list[str]:
    out = list(base[:n])
    while len(out) < n:
        word = _cjk_pseudo_word(len(out), flavor) if cjk else _pseudo_word(len(out), flavor)
        if word not in out:
            out.append(word)
        else:
            out.append(word + ("之" if cjk else "ol"))
    return out


# ---------------------------------------------------------------------------
# generation


def _charge_of_article(article_index: int, n_charges: int) -> int:
    return article_index % n_charges


def _make_catalog(spec: GeneratorSpec) -> tuple[LabelCatalog, list[str], list[str]]:
    cjk = spec.template == "cjk"
    article_cues = _bank(_ARTICLE_CUES if not cjk else (), spec.n_articles, flavor=1, cjk=cjk)
    charge_names = _bank(_CHARGE_NAMES if not cjk else _CJK_CHARGE_NAMES, spec.n_charges, flavor=2, cjk=cjk)
    articles = []
    for i in range(spec.n_articles):
        aid = f"art_{i + 1}"
        base = spec.penalty_rule.base_months(i)
        special = spec.penalty_rule.special_kind(i, spec.n_articles)
        if cjk:
            term = {"life": "无期徒刑", "death": "死刑"}.get(special, f"约{base}个月")
            content = f"凡实施{article_cues[i]}行为者违反{aid}，处{term}。"
        else:
            term = {"life": "life imprisonment", "death": "the death penalty"}.get(special, f"about {base} months")
            content = f"whoever engages in {article_cues[i]} conduct violates {aid} and faces {term}"
        articles.append((aid, content))
    return LabelCatalog(tuple(articles), tuple(charge_names)), article_cues, charge_names


def _noised(cue: str, p: float, rng: Random, confounders: list[str]) -> str:
    if p > 0.0 and rng.random() < p:
        return rng.choice(confounders)
    return cue


def _build_fact(spec: GeneratorSpec, rng: Random, article_idx: list[int], charge_idx: list[int],
                article_cues: list[str], charge_cues: list[str]) -> str:
    # Article cues are mentioned twice but corrupted at the full noise rate;
    # charge cues once at half the rate. Conduct words survive noise better
    # than statute cues, which is what drives the order-dependence effects.
    p_article = spec.fact_noise_level
    p_charge = 0.5 * spec.fact_noise_level
    cjk = spec.template == "cjk"
    confounders = _bank(_CONFOUNDERS if not cjk else (), max(18, spec.n_articles // 2), flavor=3, cjk=cjk)
    a1 = [_noised(article_cues[i], p_article, rng, confounders) for i in article_idx]
    a2 = [_noised(article_cues[i], p_article, rng, confounders) for i in article_idx]
    cc = [_noised(charge_cues[j], p_charge, rng, confounders) for j in charge_idx]
    if cjk:
        name = rng.choice(list(_CJK_NAMES))
        place = rng.choice(list(_CJK_PLACES))
        day = f"{rng.randrange(1, 13)}月{rng.randrange(1, 29)}日"
        return (f"{day}，被告人{name}在{place}附近被查。证人称其行为涉及{'、'.join(cc)}。"
                f"证据提及{'、'.join(a1)}，随后再次记录{'、'.join(a2)}。")
    name = rng.choice(list(_NAMES))
    place = rng.choice(list(_PLACES))
    day = f"{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"
    return (f"On {day} defendant {name} was held near the {place} . "
            f"Reports cite {' and '.join(cc)} conduct . "
            f"Files note {' and '.join(a1)} then {' and '.join(a2)} .")


def _build_court_view(spec: GeneratorSpec, charges: list[str], penalty: PenaltyTerm) -> str:
    if spec.template == "cjk":
        term = {"life": "无期徒刑", "death": "死刑"}.get(penalty.kind, f"{penalty.months}个月")
        return f"本院认为被告人犯{'、'.join(charges)}，判处{term}。"
    term = {"life": "life imprisonment", "death": "the death penalty"}.get(penalty.kind, f"{penalty.months} months")
    return f"the court holds that the defendant committed {' and '.join(charges)} and imposes {term}"


def generate_synthetic_corpus(spec: GeneratorSpec) -> tuple[Corpus, LabelCatalog]:
    """Generate ``spec.n_cases`` cases plus the matching label catalog."""
    spec.validate()
    catalog, article_cues, charge_names = _make_catalog(spec)
    cjk = spec.template == "cjk"
    charge_cues = _bank(_CHARGE_CUES if not cjk else (), spec.n_charges, flavor=4, cjk=cjk)
    base_rng = Random(spec.rng_seed)
    case_seeds = [base_rng.randrange(2**62) for _ in range(spec.n_cases)]

    cases: Corpus = []
    for n, case_seed in enumerate(case_seeds):
        rng = Random(case_seed)
        article_idx = [rng.randrange(spec.n_articles)]
        if rng.random() < spec.multi_article_rate and spec.n_articles > 1:
            extra = rng.randrange(spec.n_articles - 1)
            article_idx.append(extra if extra < article_idx[0] else extra + 1)
        article_idx.sort()

        if spec.dependency_mode == "independent":
            charge_idx = sorted({rng.randrange(spec.n_charges)})
            penalty = spec.penalty_rule.apply([rng.randrange(spec.n_articles)], spec.n_articles, rng)
        else:
            charge_idx = sorted({_charge_of_article(i, spec.n_charges) for i in article_idx})
            if spec.dependency_mode == "chained":
                penalty = spec.penalty_rule.apply(charge_idx, spec.n_articles, rng)
            else:
                penalty = spec.penalty_rule.apply(article_idx, spec.n_articles, rng)

        charges = [charge_names[j] for j in charge_idx]
        fact = _build_fact(spec, rng, article_idx, charge_idx, article_cues, charge_cues)
        cases.append(Case(
            id=f"case_{n:06d}",
            fact=fact,
            articles=frozenset(f"art_{i + 1}" for i in article_idx),
            charges=frozenset(charges),
            penalty=penalty,
            court_view=_build_court_view(spec, charges, penalty),
        ))
    return cases, catalog


# ---------------------------------------------------------------------------
# persistence


def _penalty_to_obj(p: PenaltyTerm) -> dict:
    if p.kind == "fixed":
        return {"type": "fixed", "months": p.months}
    return {"type": p.kind}


def _penalty_from_obj(obj: dict) -> PenaltyTerm:
    kind = obj.get("type")
    if kind == "fixed":
        return PenaltyTerm.fixed(int(obj["months"]))
    if kind == "life":
        return PenaltyTerm.life()
    if kind == "death":
        return PenaltyTerm.death()
    raise ValueError(f"unknown penalty type {kind!r}")


def save_corpus(corpus: Corpus, path: str) -> None:
    """Write one JSON record per line, UTF-8, deterministic key order."""
    with open(path, "w", encoding="utf-8") as f:
        for case in corpus:
            record = {
                "id": case.id,
                "fact": case.fact,
                "articles": sorted(case.articles, key=_natural_key),
                "charges": sorted(case.charges, key=_natural_key),
                "penalty": _penalty_to_obj(case.penalty),
                "court_view": case.court_view,
            }
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            f.write("\n")


def load_corpus(path: str) -> Corpus:
    """Read a corpus file; malformed records fail with their line number."""
    cases: Corpus = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                case = Case(
                    id=str(obj["id"]),
                    fact=str(obj["fact"]),
                    articles=frozenset(str(a) for a in obj["articles"]),
                    charges=frozenset(str(c) for c in obj["charges"]),
                    penalty=_penalty_from_obj(obj["penalty"]),
                    court_view=str(obj.get("court_view", "")),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad corpus record: {exc}") from exc
            if case.id in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate case id {case.id!r}")
            seen.add(case.id)
            cases.append(case)
    return cases


def save_catalog(catalog: LabelCatalog, path: str) -> None:
    obj = {
        "articles": [{"article_id": a, "content": c} for a, c in catalog.articles],
        "charges": list(catalog.charges),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, sort_keys=True, indent=1)
        f.write("\n")


def load_catalog(path: str) -> LabelCatalog:
    with open(path, encoding="utf-8") as f:
        try:
            obj = json.load(f)
            return LabelCatalog(
                tuple((str(a["article_id"]), str(a["content"])) for a in obj["articles"]),
                tuple(str(c) for c in obj["charges"]),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise CorpusFormatError(f"{path}: bad catalog file: {exc}") from exc


# ---------------------------------------------------------------------------
# splits


def _case_labels(case: Case) -> frozenset[str]:
    return case.articles | frozenset(f"charge::{c}" for c in case.charges)


def split_corpus(corpus: Corpus, ratios: tuple[float, float, float], seed: int) -> tuple[Corpus, Corpus, Corpus]:
    """Seeded train/val/test split with train-side label coverage.

    After the raw split, a repair pass swaps cases so every article and
    charge label occurring anywhere in the corpus appears in train at least
    once (test coverage is the hard requirement; val is repaired the same
    way). Labels backed by a single case force that case into train, with a
    warning.
    """
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    if sum(ratios) > 1.0 + 1e-9:
        raise ValueError("ratios must sum to <= 1")
    ids = list(range(len(corpus)))
    Random(seed).shuffle(ids)
    n = len(corpus)
    n_train = round(ratios[0] * n)
    n_val = round(ratios[1] * n)
    n_test = min(round(ratios[2] * n), n - n_train - n_val)
    buckets = [ids[:n_train], ids[n_train:n_train + n_val], ids[n_train + n_val:n_train + n_val + n_test]]

    total = Counter(l for case in corpus for l in _case_labels(case))
    train_count = Counter(l for i in buckets[0] for l in _case_labels(corpus[i]))

    def pull_into_train(bucket: list[int], i: int, swap: bool) -> None:
        bucket.remove(i)
        if swap:
            # hand back a train case whose labels all stay covered
            for j in sorted(buckets[0]):
                if j != i and all(train_count[l] >= 2 for l in _case_labels(corpus[j])):
                    buckets[0].remove(j)
                    bucket.append(j)
                    for l in _case_labels(corpus[j]):
                        train_count[l] -= 1
                    break
        buckets[0].append(i)
        for l in _case_labels(corpus[i]):
            train_count[l] += 1

    # singleton labels cannot be covered any other way
    for bucket in buckets[1:]:
        for i in sorted(bucket):
            labels = _case_labels(corpus[i])
            if any(total[l] == 1 for l in labels):
                warnings.warn(f"label with a single case forced into train (case {corpus[i].id})")
                pull_into_train(bucket, i, swap=False)

    # coverage repair, test first then val
    for bucket in (buckets[2], buckets[1]):
        for i in sorted(bucket):
            if i not in bucket:
                continue
            if any(train_count[l] == 0 for l in _case_labels(corpus[i])):
                pull_into_train(bucket, i, swap=True)

    train, val, test = ([corpus[i] for i in sorted(b)] for b in buckets)
    return train, val, test


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class CorpusStats:
    case_count: int
    mean_articles_per_case: float
    mean_charges_per_case: float
    mean_fact_words: float
    article_histogram: dict[str, int]
    charge_histogram: dict[str, int]


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Counts and means over a nonempty corpus; word = whitespace token."""
    if not corpus:
        raise ValueError("corpus is empty")
    n = len(corpus)
    article_hist = Counter(a for c in corpus for a in c.articles)
    charge_hist = Counter(ch for c in corpus for ch in c.charges)
    return CorpusStats(
        case_count=n,
        mean_articles_per_case=sum(len(c.articles) for c in corpus) / n,
        mean_charges_per_case=sum(len(c.charges) for c in corpus) / n,
        mean_fact_words=sum(len(c.fact.split()) for c in corpus) / n,
        article_histogram=dict(sorted(article_hist.items(), key=lambda kv: _natural_key(kv[0]))),
        charge_histogram=dict(sorted(charge_hist.items(), key=lambda kv: _natural_key(kv[0]))),
    )


__all__ = [
    "LIFE_MONTHS", "DEATH_MONTHS", "MAX_FIXED_MONTHS",
    "Case", "Corpus", "CorpusFormatError", "CorpusStats", "GeneratorSpec",
    "LabelCatalog", "PenaltyRule", "PenaltyTerm",
    "corpus_stats", "encode_penalty", "generate_synthetic_corpus",
    "load_catalog", "load_corpus", "save_catalog", "save_corpus", "split_corpus",
]
