"""Command-line entry point for the full pipeline.

Every command writes fixed-name output files under --out, derives all
randomness from --seed, and exits 0 on success. Failures print one
machine-parsable JSON line to stderr and use distinct exit codes:
2 usage, 3 missing input file, 4 incompatible checkpoint version,
5 invalid input or configuration, 1 anything else.
The DEPJUDGE_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from random import Random

import torch

from . import analysis, corpus as corpus_mod, metrics, textmatch, training
from .corpus import (CorpusFormatError, GeneratorSpec, PenaltyRule, corpus_stats,
                     generate_synthetic_corpus, load_catalog, load_corpus,
                     save_catalog, save_corpus, split_corpus)
from .model import (CheckpointError, CheckpointVersionError, ModelConfig,
                    Seq2SeqTransformer, load_checkpoint, save_checkpoint)
from .prompting import (MAIN_TASKS, OrderSpec, TaskKind, TaskPredictions,
                        enumerate_orders, vocab_from_corpus)
from .tokenizer import Vocab
from .training import TrainConfig, TrainMode

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CHECKPOINT = 4
EXIT_INVALID = 5

logger = logging.getLogger("depjudge.cli")


def _setup_logging() -> None:
    level = os.environ.get("DEPJUDGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _fail_line(kind: str, detail: str) -> None:
    print(json.dumps({"error": kind, "detail": detail}, ensure_ascii=False), file=sys.stderr)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, sort_keys=True, indent=1)
        f.write("\n")


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    return path


def _load_config_overrides(path: str | None) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment."""
    if not path:
        return {}
    overrides: dict[str, str] = {}
    with open(_require_file(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            overrides[key.strip()] = value.strip()
    return overrides


def _dataclass_from(cls, base: dict, overrides: dict[str, str]):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = dict(base)
    for key, raw in overrides.items():
        if key not in fields:
            continue
        typ = fields[key].type
        if typ in ("int", int):
            kwargs[key] = int(raw)
        elif typ in ("float", float):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return cls(**kwargs)


def _train_config(args, overrides: dict[str, str]) -> TrainConfig:
    base = {"rng_seed": args.seed}
    for name, attr in (("max_epochs", "epochs"), ("batch_size", "batch_size"),
                       ("patience", "patience"), ("learning_rate", "lr"),
                       ("accumulation_steps", "accum"),
                       ("max_input_len", "max_input_len"),
                       ("max_target_len", "max_target_len")):
        value = getattr(args, attr, None)
        if value is not None:
            base[name] = value
    return _dataclass_from(TrainConfig, base, overrides)


def _model_config(args, vocab: Vocab, overrides: dict[str, str]) -> ModelConfig:
    base = {"vocab_size": vocab.size, "rng_seed": args.seed}
    for name, attr in (("d_model", "d_model"), ("n_heads", "n_heads"),
                       ("n_enc_layers", "enc_layers"), ("n_dec_layers", "dec_layers"),
                       ("d_ff", "d_ff"), ("max_len", "max_len"), ("dropout", "dropout")):
        value = getattr(args, attr, None)
        if value is not None:
            base[name] = value
    overrides = {k: v for k, v in overrides.items() if k != "vocab_size"}
    return _dataclass_from(ModelConfig, base, overrides)


def _load_inputs(args, need_vocab: bool = True):
    cases = load_corpus(_require_file(args.corpus))
    catalog = load_catalog(_require_file(args.catalog))
    vocab = Vocab.load(_require_file(args.vocab)) if need_vocab else None
    return cases, catalog, vocab


def _splits(cases, args):
    ratios = tuple(float(r) for r in args.ratios.split(","))
    if len(ratios) != 3:
        raise ValueError("--ratios needs three comma-separated numbers")
    return split_corpus(cases, ratios, args.seed)


def _init_model(args, vocab: Vocab, overrides: dict[str, str]) -> Seq2SeqTransformer:
    if getattr(args, "init", None):
        model, _ = load_checkpoint(_require_file(args.init))
        return model
    return Seq2SeqTransformer(_model_config(args, vocab, overrides))


def _write_history(path: Path, history: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in history:
            f.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_corpus(args) -> int:
    out = _out_dir(args)
    spec = GeneratorSpec(
        n_cases=args.n, n_articles=args.articles, n_charges=args.charges,
        dependency_mode=args.mode, fact_noise_level=args.noise,
        penalty_rule=PenaltyRule(relative_noise=args.penalty_noise,
                                 life_fraction=args.life_fraction,
                                 death_fraction=args.death_fraction),
        rng_seed=args.seed, template=args.template, multi_article_rate=args.multi_rate,
    )
    cases, catalog = generate_synthetic_corpus(spec)
    save_corpus(cases, str(out / "corpus.jsonl"))
    save_catalog(catalog, str(out / "catalog.json"))
    if cases:
        _write_json(out / "stats.json", dataclasses.asdict(corpus_stats(cases)))
    print(f"wrote {len(cases)} cases to {out / 'corpus.jsonl'}")
    return EXIT_OK


def cmd_build_vocab(args) -> int:
    out = _out_dir(args)
    cases = load_corpus(_require_file(args.corpus))
    catalog = load_catalog(_require_file(args.catalog))
    vocab = vocab_from_corpus(cases, catalog, min_count=args.min_count)
    vocab.save(str(out / "vocab.txt"))
    print(f"wrote vocab of {vocab.size} symbols to {out / 'vocab.txt'}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    out = _out_dir(args)
    overrides = _load_config_overrides(args.config)
    cases, catalog, vocab = _load_inputs(args)
    model = _init_model(args, vocab, overrides)
    config = _train_config(args, overrides)
    model, history = training.pretrain(model, cases, args.mask_ratio, args.mean_span,
                                       config, vocab, catalog)
    save_checkpoint(model, str(out / "pretrained.ckpt"),
                    extra={"stage": "pretrain", "seed": args.seed})
    _write_history(out / "pretrain_log.jsonl", history)
    print(f"pretrained {len(history)} epochs; best val metric "
          f"{max(h['val_metric'] for h in history):.4f}")
    return EXIT_OK


def _parse_mode(args) -> TrainMode:
    if args.mode == "dependent":
        if not args.order:
            raise ValueError("--order is required for dependent mode")
        return TrainMode.dependent(OrderSpec.from_string(args.order))
    if args.mode == "stl":
        if not args.task:
            raise ValueError("--task is required for stl mode")
        return TrainMode.stl(TaskKind.from_code(args.task))
    if args.mode == "mtl":
        tasks = tuple(TaskKind.from_code(c) for c in (args.tasks or "ACP"))
        return TrainMode.mtl_independent(tasks)
    raise ValueError(f"unknown mode {args.mode!r}")


def cmd_train(args) -> int:
    out = _out_dir(args)
    overrides = _load_config_overrides(args.config)
    cases, catalog, vocab = _load_inputs(args)
    train, val, test = _splits(cases, args)
    mode = _parse_mode(args)
    model = _init_model(args, vocab, overrides)
    config = _train_config(args, overrides)
    model, history = training.finetune(model, train, val, mode, config, vocab, catalog)
    save_checkpoint(model, str(out / "model.ckpt"),
                    extra={"stage": "finetune", "mode": mode.kind,
                           "order": str(mode.order) if mode.order else "",
                           "seed": args.seed})
    _write_history(out / "history.jsonl", history)
    if test:
        preds, dt = training.predict(model, test, catalog, vocab, mode,
                                     max_input_len=config.max_input_len,
                                     max_target_len=config.max_target_len)
        report = metrics.build_report(preds, test, catalog, mode.tasks, dt)
        _write_json(out / "eval_report.json", report.to_dict())
        print(json.dumps(report.per_task, sort_keys=True))
    return EXIT_OK


def _preds_from_file(path: str, cases) -> list[TaskPredictions]:
    by_id = {}
    with open(_require_file(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                by_id[str(obj["id"])] = TaskPredictions(
                    articles=frozenset(obj["articles"]) if obj.get("articles") is not None else None,
                    charges=frozenset(obj["charges"]) if obj.get("charges") is not None else None,
                    penalty_months=obj.get("penalty_months"),
                    court_view=obj.get("court_view"),
                    article_content=obj.get("article_content"),
                    malformed=bool(obj.get("malformed", False)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad prediction record: {exc}") from exc
    missing = [c.id for c in cases if c.id not in by_id]
    if missing:
        raise ValueError(f"predictions missing for {len(missing)} cases (first: {missing[0]})")
    return [by_id[c.id] for c in cases]


def cmd_eval(args) -> int:
    out = _out_dir(args)
    cases, catalog, vocab = _load_inputs(args, need_vocab=bool(args.model))
    order = OrderSpec.from_string(args.order)
    if args.model:
        model, _ = load_checkpoint(_require_file(args.model))
        preds, dt = training.decode_cases(model, cases, catalog, vocab, order)
    elif args.preds:
        preds, dt = _preds_from_file(args.preds, cases), 0.0
    else:
        raise ValueError("eval needs --model or --preds")
    report = metrics.build_report(preds, cases, catalog, order.tasks, dt)
    _write_json(out / "report.json", report.to_dict())
    print(json.dumps(report.per_task, sort_keys=True))
    return EXIT_OK


def cmd_order_sweep(args) -> int:
    out = _out_dir(args)
    overrides = _load_config_overrides(args.config)
    cases, catalog, vocab = _load_inputs(args)
    splits = _splits(cases, args)
    tasks = {TaskKind.from_code(c) for c in args.tasks}
    last = tuple(t for t in tasks if t not in MAIN_TASKS) if args.aux_last else ()
    orders = enumerate_orders(tasks, last=last)
    pretrained = None
    if args.init:
        pretrained, _ = load_checkpoint(_require_file(args.init))
    report = training.run_order_sweep(splits, orders, _train_config(args, overrides),
                                      vocab, catalog, _model_config(args, vocab, overrides),
                                      pretrained=pretrained, eval_cap=args.eval_cap)
    _write_json(out / "order_sweep.json", report.to_dict())
    print(f"swept {len(report.rows)} orders -> {out / 'order_sweep.json'}")
    return EXIT_OK


def cmd_size_sweep(args) -> int:
    out = _out_dir(args)
    overrides = _load_config_overrides(args.config)
    cases, catalog, vocab = _load_inputs(args)
    splits = _splits(cases, args)
    sizes = [int(s) for s in args.sizes.split(",")]
    pretrained = None
    if args.init:
        pretrained, _ = load_checkpoint(_require_file(args.init))
    report = training.run_data_size_sweep(splits, sizes, OrderSpec.from_string(args.order),
                                          _train_config(args, overrides), vocab, catalog,
                                          _model_config(args, vocab, overrides),
                                          pretrained=pretrained, eval_cap=args.eval_cap)
    _write_json(out / "size_sweep.json", report.to_dict())
    print(f"swept sizes {sizes} -> {out / 'size_sweep.json'}")
    return EXIT_OK


def cmd_match_baseline(args) -> int:
    out = _out_dir(args)
    overrides = _load_config_overrides(args.config)
    cases, catalog, vocab = _load_inputs(args)
    train, val, test = _splits(cases, args)
    dataset = textmatch.build_matching_dataset(train, catalog, args.neg_ratio,
                                               Random(args.seed))
    model = _init_model(args, vocab, overrides)
    config = _train_config(args, overrides)
    model, history = textmatch.train_matcher(model, dataset, config, vocab)
    save_checkpoint(model, str(out / "matcher.ckpt"), extra={"stage": "matcher"})
    _write_history(out / "matcher_log.jsonl", history)

    eval_cases = test[: args.eval_cap]
    result: dict = {"threshold": args.threshold, "neg_ratio": args.neg_ratio}
    if args.gen_model:
        gen_model, _ = load_checkpoint(_require_file(args.gen_model))
        result.update(textmatch.speed_comparison(model, gen_model, eval_cases, catalog,
                                                 vocab, args.threshold,
                                                 config.max_input_len))
    else:
        preds, times = [], []
        for case in eval_cases:
            pred, dt = textmatch.predict_articles_by_matching(
                model, vocab, case.fact, catalog, args.threshold, config.max_input_len)
            preds.append(TaskPredictions(articles=frozenset(pred)))
            times.append(dt)
        result["match_seconds_per_case"] = sum(times) / max(len(times), 1)
        result["match_report"] = metrics.build_report(
            preds, eval_cases, catalog, [TaskKind.ARTICLE], sum(times)).to_dict()
    _write_json(out / "match_report.json", result)
    print(f"matching baseline -> {out / 'match_report.json'}")
    return EXIT_OK


def cmd_analyze_pmi(args) -> int:
    out = _out_dir(args)
    cases, catalog, _ = _load_inputs(args, need_vocab=False)
    task_x, task_y = TaskKind.from_code(args.task_x), TaskKind.from_code(args.task_y)
    top_k = (args.top_k_x, args.top_k_y)
    if args.preds:
        preds = _preds_from_file(args.preds, cases)
        scenarios = analysis.pmi_scenarios(cases, preds, task_x, task_y, top_k,
                                           args.error_threshold)
        scenarios.gold.to_csv(str(out / "pmi_gold.csv"))
        scenarios.predicted.to_csv(str(out / "pmi_predicted.csv"))
        if scenarios.mispredicted is not None:
            scenarios.mispredicted.to_csv(str(out / "pmi_mispredicted.csv"))
        else:
            print(scenarios.notice)
    else:
        metrics.pmi_matrix(cases, task_x, task_y, top_k).to_csv(str(out / "pmi_gold.csv"))
    print(f"PMI matrices -> {out}")
    return EXIT_OK


def _find_case(cases, case_id: str):
    for case in cases:
        if case.id == case_id:
            return case
    raise ValueError(f"case id {case_id!r} not found in corpus")


def cmd_dump_attention(args) -> int:
    out = _out_dir(args)
    cases, catalog, vocab = _load_inputs(args)
    model, _ = load_checkpoint(_require_file(args.model))
    case = _find_case(cases, args.case_id)
    record = analysis.dump_attention(model, vocab, catalog, case,
                                     OrderSpec.from_string(args.order))
    _write_json(out / f"attention_{case.id}.json", record)
    print(f"attention map -> {out / f'attention_{case.id}.json'}")
    return EXIT_OK


def cmd_counterfactual(args) -> int:
    out = _out_dir(args)
    cases, catalog, vocab = _load_inputs(args)
    model, _ = load_checkpoint(_require_file(args.model))
    case = _find_case(cases, args.case_id)
    result = analysis.counterfactual_replace(model, vocab, catalog, case,
                                             OrderSpec.from_string(args.order),
                                             TaskKind.from_code(args.task), args.span)
    record = {
        "case_id": case.id,
        "task": args.task,
        "forced_span": args.span,
        "before_text": result.before_text,
        "after_text": result.after_text,
        "changed": {k: [_jsonable(v) for v in pair] for k, pair in result.changed.items()},
    }
    _write_json(out / f"counterfactual_{case.id}.json", record)
    print(f"counterfactual -> {out / f'counterfactual_{case.id}.json'}")
    return EXIT_OK


def _jsonable(value):
    if isinstance(value, frozenset):
        return sorted(value)
    return value


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=0, help="bound internal parallelism (torch threads)")
    p.add_argument("--config", default=None, help="flat key=value config file")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", dest="d_model", type=int, default=None)
    p.add_argument("--n-heads", dest="n_heads", type=int, default=None)
    p.add_argument("--enc-layers", dest="enc_layers", type=int, default=None)
    p.add_argument("--dec-layers", dest="dec_layers", type=int, default=None)
    p.add_argument("--d-ff", dest="d_ff", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--accum", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--max-input-len", dest="max_input_len", type=int, default=None)
    p.add_argument("--max-target-len", dest="max_target_len", type=int, default=None)


def _add_data_flags(p: argparse.ArgumentParser, vocab: bool = True) -> None:
    p.add_argument("--corpus", required=True)
    p.add_argument("--catalog", required=True)
    if vocab:
        p.add_argument("--vocab", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depjudge",
                                     description="dependency-ordered text-to-text "
                                                 "prediction on judgment-style documents")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus and catalog")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--articles", type=int, default=24)
    p.add_argument("--charges", type=int, default=16)
    p.add_argument("--mode", default="article_determines_charge",
                   choices=corpus_mod.DEPENDENCY_MODES)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--penalty-noise", dest="penalty_noise", type=float, default=0.1)
    p.add_argument("--life-fraction", dest="life_fraction", type=float, default=0.0)
    p.add_argument("--death-fraction", dest="death_fraction", type=float, default=0.0)
    p.add_argument("--multi-rate", dest="multi_rate", type=float, default=0.15)
    p.add_argument("--template", default="en", choices=corpus_mod.TEMPLATE_SETS)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("build-vocab", help="build the character vocab for a corpus")
    _add_common(p)
    _add_data_flags(p, vocab=False)
    p.add_argument("--min-count", dest="min_count", type=int, default=1)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("pretrain", help="span-corruption pretraining")
    _add_common(p)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--init", default=None, help="checkpoint to continue from")
    p.add_argument("--mask-ratio", dest="mask_ratio", type=float, default=0.15)
    p.add_argument("--mean-span", dest="mean_span", type=float, default=3.0)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="finetune under stl / mtl / dependent mode")
    _add_common(p)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--init", default=None)
    p.add_argument("--mode", required=True, choices=["dependent", "mtl", "stl"])
    p.add_argument("--order", default=None, help="task codes for dependent mode, e.g. ACP")
    p.add_argument("--task", default=None, help="task code for stl mode")
    p.add_argument("--tasks", default=None, help="task codes for mtl mode")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model or a predictions file")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--model", default=None)
    p.add_argument("--preds", default=None)
    p.add_argument("--order", default="ACP")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("order-sweep", help="train one model per decoding order")
    _add_common(p)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--init", default=None)
    p.add_argument("--tasks", required=True, help="task codes, e.g. ACP")
    p.add_argument("--aux-last", dest="aux_last", action="store_true",
                   help="pin auxiliary tasks to the end of every order")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--eval-cap", dest="eval_cap", type=int, default=1000)
    p.set_defaults(func=cmd_order_sweep)

    p = sub.add_parser("size-sweep", help="train on nested subsets of growing size")
    _add_common(p)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--init", default=None)
    p.add_argument("--sizes", required=True, help="comma-separated train sizes")
    p.add_argument("--order", default="ACP")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--eval-cap", dest="eval_cap", type=int, default=1000)
    p.set_defaults(func=cmd_size_sweep)

    p = sub.add_parser("match-baseline", help="text-matching article prediction baseline")
    _add_common(p)
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--init", default=None)
    p.add_argument("--neg-ratio", dest="neg_ratio", type=int, default=31)
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--gen-model", dest="gen_model", default=None,
                   help="generative checkpoint for the speed comparison")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--eval-cap", dest="eval_cap", type=int, default=50)
    p.set_defaults(func=cmd_match_baseline)

    p = sub.add_parser("analyze-pmi", help="PMI matrices over gold and predicted labels")
    _add_common(p)
    _add_data_flags(p, vocab=False)
    p.add_argument("--preds", default=None)
    p.add_argument("--task-x", dest="task_x", default="A")
    p.add_argument("--task-y", dest="task_y", default="C")
    p.add_argument("--top-k-x", dest="top_k_x", type=int, default=10)
    p.add_argument("--top-k-y", dest="top_k_y", type=int, default=11)
    p.add_argument("--error-threshold", dest="error_threshold", type=int, default=12)
    p.set_defaults(func=cmd_analyze_pmi)

    p = sub.add_parser("dump-attention", help="export a cross-attention map for one case")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--case-id", dest="case_id", required=True)
    p.add_argument("--order", default="ACP")
    p.set_defaults(func=cmd_dump_attention)

    p = sub.add_parser("counterfactual", help="re-decode with one task span forced")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--case-id", dest="case_id", required=True)
    p.add_argument("--order", default="ACP")
    p.add_argument("--task", required=True)
    p.add_argument("--span", required=True)
    p.set_defaults(func=cmd_counterfactual)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs and args.jobs > 0:
        torch.set_num_threads(args.jobs)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _fail_line("missing_file", str(exc))
        return EXIT_MISSING_FILE
    except CheckpointVersionError as exc:
        _fail_line("checkpoint_version", str(exc))
        return EXIT_BAD_CHECKPOINT
    except (CheckpointError, CorpusFormatError, ValueError) as exc:
        _fail_line("invalid_input", str(exc))
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - last resort
        _fail_line("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
