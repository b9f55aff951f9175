"""Dependency-ordered text-to-text structured prediction on judgment-style
documents, small enough to train and probe on a CPU."""

__version__ = "0.1.0"

from .corpus import (Case, GeneratorSpec, LabelCatalog, PenaltyRule, PenaltyTerm,
                     corpus_stats, encode_penalty, generate_synthetic_corpus,
                     load_catalog, load_corpus, save_catalog, save_corpus, split_corpus)
from .metrics import (MetricsReport, bin_penalty, build_report, error_slice,
                      log_distance, macro_f1, micro_f1, pmi_matrix)
from .model import ModelConfig, Seq2SeqTransformer, load_checkpoint, save_checkpoint
from .prompting import (OrderSpec, PromptTarget, TaskKind, TaskPredictions,
                        build_prompt, enumerate_orders, parse_decoded, span_corrupt,
                        vocab_from_corpus)
from .tokenizer import Vocab, build_vocab
from .training import TrainConfig, TrainMode, finetune, pretrain, run_data_size_sweep, run_order_sweep

__all__ = [
    "Case", "GeneratorSpec", "LabelCatalog", "MetricsReport", "ModelConfig",
    "OrderSpec", "PenaltyRule", "PenaltyTerm", "PromptTarget", "Seq2SeqTransformer",
    "TaskKind", "TaskPredictions", "TrainConfig", "TrainMode", "Vocab",
    "bin_penalty", "build_prompt", "build_report", "build_vocab", "corpus_stats",
    "encode_penalty", "enumerate_orders", "error_slice", "finetune",
    "generate_synthetic_corpus", "load_catalog", "load_checkpoint", "load_corpus",
    "log_distance", "macro_f1", "micro_f1", "parse_decoded", "pmi_matrix",
    "pretrain", "run_data_size_sweep", "run_order_sweep", "save_catalog",
    "save_checkpoint", "save_corpus", "span_corrupt", "split_corpus", "vocab_from_corpus",
]
