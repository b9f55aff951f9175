"""Encoder-decoder transformer built from basic tensor ops.

Pre-layer-norm residual blocks, learned absolute position embeddings, a
shared token embedding for both sides and a separate output projection.
The decoder starts from the pad token and ends sequences with the reserved
end-of-sequence token. Single-sequence inference helpers (`encode_sequence`,
`logits_for`, `greedy_decode`, `cross_attention_map`) run in eval mode under
`no_grad`; batched training entry points leave mode handling to the caller.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass
from random import Random
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .tokenizer import END_ID, PAD_ID

CHECKPOINT_MAGIC = b"DJCKPT1\n"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, corrupt, or mismatched checkpoint files."""


class CheckpointVersionError(CheckpointError):
    """Raised when a checkpoint's format version is not supported."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 3
    n_dec_layers: int = 3
    d_ff: int = 256
    max_len: int = 512
    dropout: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.vocab_size < 1 or self.max_len < 1:
            raise ValueError("vocab_size and max_len must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, q, k, v, blocked=None):
        """blocked: bool tensor broadcastable to (B, heads, Tq, Tk); True = no attention."""
        bsz, t_q, _ = q.shape
        t_k = k.shape[1]
        q = self.w_q(q).view(bsz, t_q, self.n_heads, self.d_head).transpose(1, 2)
        k = self.w_k(k).view(bsz, t_k, self.n_heads, self.d_head).transpose(1, 2)
        v = self.w_v(v).view(bsz, t_k, self.n_heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if blocked is not None:
            scores = scores.masked_fill(blocked, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = self.dropout(weights) @ v
        out = out.transpose(1, 2).reshape(bsz, t_q, -1)
        return self.w_o(out), weights


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.lin1 = nn.Linear(d_model, d_ff)
        self.lin2 = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        # gelu (exact erf form) keeps the loss surface smooth, which the
        # finite-difference gradient verification depends on
        return self.lin2(self.dropout(F.gelu(self.lin1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, blocked):
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, blocked)
        x = x + self.dropout(attn_out)
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, self_blocked, cross_blocked):
        h = self.norm1(x)
        attn_out, _ = self.self_attn(h, h, h, self_blocked)
        x = x + self.dropout(attn_out)
        h = self.norm2(x)
        cross_out, cross_weights = self.cross_attn(h, memory, memory, cross_blocked)
        x = x + self.dropout(cross_out)
        x = x + self.dropout(self.ff(self.norm3(x)))
        return x, cross_weights


class Seq2SeqTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.rng_seed)
        self.token_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.enc_pos = nn.Embedding(config.max_len, config.d_model)
        self.dec_pos = nn.Embedding(config.max_len, config.d_model)
        self.emb_dropout = nn.Dropout(config.dropout)
        self.enc_layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.n_enc_layers))
        self.enc_norm = nn.LayerNorm(config.d_model)
        self.dec_layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.n_dec_layers))
        self.dec_norm = nn.LayerNorm(config.d_model)
        self.out_proj = nn.Linear(config.d_model, config.vocab_size)
        self._init_weights()

    def _init_weights(self) -> None:
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.normal_(module.weight, std=0.02)

    # -- batched core -------------------------------------------------------

    def encode_batch(self, x: torch.Tensor, x_pad: torch.Tensor) -> torch.Tensor:
        """x: (B, S) token ids; x_pad: (B, S) bool, True at padding.

        Columns that are padding in every row are dropped up front, so
        appending pad tokens to a batch is exactly a no-op for the rest.
        """
        true_len = max(1, int((~x_pad).sum(dim=1).max()))
        if true_len < x.shape[1]:
            x, x_pad = x[:, :true_len], x_pad[:, :true_len]
        if x.shape[1] > self.config.max_len:
            raise ValueError(f"input length {x.shape[1]} exceeds max_len {self.config.max_len}")
        positions = torch.arange(x.shape[1], device=x.device)
        h = self.token_emb(x) + self.enc_pos(positions)[None]
        h = self.emb_dropout(h)
        blocked = x_pad[:, None, None, :]
        for layer in self.enc_layers:
            h = layer(h, blocked)
        return self.enc_norm(h)

    def decode_batch(self, y_in: torch.Tensor, memory: torch.Tensor, x_pad: torch.Tensor,
                     need_attn: bool = False):
        """Teacher-forced decoder pass; returns (B, T, V) logits.

        With need_attn, also returns the last layer's cross-attention
        weights, shape (B, heads, T, S).
        """
        if x_pad.shape[1] > memory.shape[1]:  # encode_batch may have trimmed all-pad columns
            x_pad = x_pad[:, : memory.shape[1]]
        t = y_in.shape[1]
        if t > self.config.max_len:
            raise ValueError(f"target length {t} exceeds max_len {self.config.max_len}")
        positions = torch.arange(t, device=y_in.device)
        h = self.token_emb(y_in) + self.dec_pos(positions)[None]
        h = self.emb_dropout(h)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool, device=y_in.device), diagonal=1)
        self_blocked = causal[None, None]
        cross_blocked = x_pad[:, None, None, :]
        cross_weights = None
        for layer in self.dec_layers:
            h, cross_weights = layer(h, memory, self_blocked, cross_blocked)
        logits = self.out_proj(self.dec_norm(h))
        if need_attn:
            return logits, cross_weights
        return logits

    def forward(self, x: torch.Tensor, x_pad: torch.Tensor, y_in: torch.Tensor) -> torch.Tensor:
        return self.decode_batch(y_in, self.encode_batch(x, x_pad), x_pad)

    # -- single-sequence inference ------------------------------------------

    def _as_batch(self, ids: Sequence[int]) -> tuple[torch.Tensor, torch.Tensor]:
        x = torch.tensor([list(ids)], dtype=torch.long)
        return x, torch.zeros_like(x, dtype=torch.bool)

    @torch.no_grad()
    def encode_sequence(self, ids: Sequence[int]) -> torch.Tensor:
        """Hidden states for one unpadded sequence, shape (len(ids), d_model)."""
        if len(ids) == 0:
            raise ValueError("cannot encode an empty sequence")
        was_training = self.training
        self.eval()
        try:
            x, x_pad = self._as_batch(ids)
            return self.encode_batch(x, x_pad)[0]
        finally:
            self.train(was_training)

    @torch.no_grad()
    def logits_for(self, x_ids: Sequence[int], y_in_ids: Sequence[int]) -> torch.Tensor:
        """Teacher-forced logits for one pair, shape (len(y_in), vocab)."""
        was_training = self.training
        self.eval()
        try:
            x, x_pad = self._as_batch(x_ids)
            y_in, _ = self._as_batch(y_in_ids)
            return self.decode_batch(y_in, self.encode_batch(x, x_pad), x_pad)[0]
        finally:
            self.train(was_training)

    @torch.no_grad()
    def greedy_decode(self, x_ids: Sequence[int], max_out_len: int,
                      forced_prefix: Sequence[int] = ()) -> tuple[list[int], bool]:
        """Argmax decoding of one sequence; stops at the end token.

        Returns (generated ids without bos/eos, truncated flag). A forced
        prefix is emitted verbatim before free decoding continues and counts
        toward max_out_len.
        """
        ids, truncated = greedy_decode_batch(self, [list(x_ids)], max_out_len,
                                             forced_prefixes=[list(forced_prefix)])
        return ids[0], truncated[0]

    @torch.no_grad()
    def cross_attention_map(self, x_ids: Sequence[int], y_ids: Sequence[int]) -> torch.Tensor:
        """Last decoder layer's cross attention for producing each y token.

        Head-summed and row-normalized; shape (len(y_ids), len(x_ids)),
        each row sums to 1.
        """
        was_training = self.training
        self.eval()
        try:
            x, x_pad = self._as_batch(x_ids)
            y_in, _ = self._as_batch([PAD_ID] + list(y_ids)[:-1])
            memory = self.encode_batch(x, x_pad)
            _, weights = self.decode_batch(y_in, memory, x_pad, need_attn=True)
            summed = weights[0].sum(dim=0)  # (T, S)
            return summed / summed.sum(dim=-1, keepdim=True)
        finally:
            self.train(was_training)


def greedy_decode_batch(model: Seq2SeqTransformer, inputs: Sequence[Sequence[int]],
                        max_out_len: int,
                        forced_prefixes: Sequence[Sequence[int]] | None = None,
                        ) -> tuple[list[list[int]], list[bool]]:
    """Greedy decoding for a batch of unequal-length inputs.

    Inputs are right-padded; each output stops at the end token or at
    max_out_len (then flagged truncated). Forced prefixes override the
    argmax for their positions.
    """
    if any(len(x) == 0 for x in inputs):
        raise ValueError("cannot decode from an empty input")
    was_training = model.training
    model.eval()
    try:
        bsz = len(inputs)
        s_max = max(len(x) for x in inputs)
        x = torch.full((bsz, s_max), PAD_ID, dtype=torch.long)
        x_pad = torch.ones((bsz, s_max), dtype=torch.bool)
        for i, ids in enumerate(inputs):
            x[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            x_pad[i, : len(ids)] = False
        memory = model.encode_batch(x, x_pad)

        forced = [list(p) for p in forced_prefixes] if forced_prefixes else [[] for _ in inputs]
        y = torch.full((bsz, 1), PAD_ID, dtype=torch.long)  # decoder-start token
        finished = torch.zeros(bsz, dtype=torch.bool)
        outputs: list[list[int]] = [[] for _ in inputs]
        for step in range(max_out_len):
            logits = model.decode_batch(y, memory, x_pad)[:, -1]
            nxt = logits.argmax(dim=-1)
            for i in range(bsz):
                if step < len(forced[i]):
                    nxt[i] = forced[i][step]
            nxt = torch.where(finished, torch.full_like(nxt, PAD_ID), nxt)
            for i in range(bsz):
                if not finished[i] and nxt[i].item() != END_ID:
                    outputs[i].append(int(nxt[i]))
            finished |= nxt == END_ID
            if bool(finished.all()):
                break
            y = torch.cat([y, nxt[:, None]], dim=1)
        return outputs, [not bool(f) for f in finished]
    finally:
        model.train(was_training)


# ---------------------------------------------------------------------------
# loss


def token_cross_entropy_sum(logits: torch.Tensor, targets: torch.Tensor,
                            pad_id: int = PAD_ID) -> tuple[torch.Tensor, int]:
    """Summed cross-entropy over non-pad target positions, plus the count."""
    n_tokens = int((targets != pad_id).sum())
    loss = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1),
                           ignore_index=pad_id, reduction="sum")
    return loss, n_tokens


def token_cross_entropy(logits: torch.Tensor, targets: torch.Tensor,
                        pad_id: int = PAD_ID) -> torch.Tensor:
    """Mean cross-entropy over non-pad target positions."""
    loss, n_tokens = token_cross_entropy_sum(logits, targets, pad_id)
    if n_tokens == 0:
        raise ValueError("all target positions are padding")
    return loss / n_tokens


# ---------------------------------------------------------------------------
# gradient verification


def grad_check(model: Seq2SeqTransformer, batch: tuple, eps: float = 1e-5,
               n_samples: int = 200, seed: int = 0,
               param_filter=None) -> float:
    """Max relative error between autograd and central finite differences.

    Runs a double-precision copy of the model in eval mode on one batch
    (x, x_pad, y_in, y_out) and probes n_samples randomly chosen parameter
    coordinates; param_filter(name) can restrict the probed tensors.
    Coordinates where both gradients are ~0 are skipped.
    """
    x, x_pad, y_in, y_out = batch
    m = copy.deepcopy(model).double().eval()

    def compute_loss() -> torch.Tensor:
        return token_cross_entropy(m.decode_batch(y_in, m.encode_batch(x, x_pad), x_pad), y_out)

    loss = compute_loss()
    m.zero_grad()
    loss.backward()

    named = [(n, p) for n, p in m.named_parameters() if param_filter is None or param_filter(n)]
    if not named:
        raise ValueError("param_filter excluded every parameter")
    sizes = [p.numel() for _, p in named]
    total = sum(sizes)
    rng = Random(seed)
    picks = rng.sample(range(total), min(n_samples, total))

    max_rel = 0.0
    with torch.no_grad():
        for flat in picks:
            t_idx = 0
            while flat >= sizes[t_idx]:
                flat -= sizes[t_idx]
                t_idx += 1
            _, p = named[t_idx]
            analytic = float(p.grad.view(-1)[flat]) if p.grad is not None else 0.0
            orig = float(p.view(-1)[flat])
            p.view(-1)[flat] = orig + eps
            loss_plus = float(compute_loss())
            p.view(-1)[flat] = orig - eps
            loss_minus = float(compute_loss())
            p.view(-1)[flat] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            denom = max(abs(analytic), abs(numeric))
            if denom < 1e-10:
                continue
            max_rel = max(max_rel, abs(analytic - numeric) / denom)
    return max_rel


# ---------------------------------------------------------------------------
# checkpoints


_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(model: Seq2SeqTransformer, path: str, extra: dict | None = None) -> None:
    """Self-describing binary: magic, versioned JSON header, tensors, sha256."""
    tensors = []
    payload = bytearray()
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported tensor dtype {dtype} for {name}")
        raw = arr.astype(_DTYPES[dtype]).tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                        "offset": len(payload), "nbytes": len(raw)})
        payload.extend(raw)
    header = json.dumps({
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "extra": extra or {},
        "tensors": tensors,
    }, sort_keys=True).encode("utf-8")
    body = CHECKPOINT_MAGIC + struct.pack("<Q", len(header)) + header + bytes(payload)
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as f:
        f.write(body)
        f.write(digest)


def load_checkpoint(path: str) -> tuple[Seq2SeqTransformer, dict]:
    """Rebuild a model from a checkpoint file; returns (model, extra)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 + 32 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    (header_len,) = struct.unpack_from("<Q", body, len(CHECKPOINT_MAGIC))
    header_start = len(CHECKPOINT_MAGIC) + 8
    try:
        header = json.loads(body[header_start: header_start + header_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version} not supported "
                                     f"(expected {CHECKPOINT_VERSION})")
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    payload = body[header_start + header_len:]
    state = {}
    for spec in header["tensors"]:
        raw = payload[spec["offset"]: spec["offset"] + spec["nbytes"]]
        arr = np.frombuffer(raw, dtype=_DTYPES[spec["dtype"]]).reshape(spec["shape"])
        state[spec["name"]] = torch.from_numpy(arr.copy())
    config = ModelConfig.from_dict(header["config"])
    model = Seq2SeqTransformer(config)
    model.load_state_dict(state, strict=True)
    return model, header.get("extra", {})


__all__ = [
    "CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "CheckpointError", "CheckpointVersionError",
    "ModelConfig", "Seq2SeqTransformer",
    "grad_check", "greedy_decode_batch", "load_checkpoint", "save_checkpoint",
    "token_cross_entropy", "token_cross_entropy_sum",
]
