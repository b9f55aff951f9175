"""Reversible character tokenizer with a reserved control-token block.

Ids 0..103 are fixed: pad, end-of-sequence, unknown, the intra-span label
delimiter, then 100 numbered sentinels. Sentinels and the delimiter appear
in text form as single-token literals (``⟨extra_7⟩``, ``⟨sep⟩``) so encoded
prompts and decoded model output share one string representation.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, NamedTuple

PAD_ID = 0
END_ID = 1
UNK_ID = 2
SEP_ID = 3
N_SENTINELS = 100
N_RESERVED = 4 + N_SENTINELS

PAD_TOKEN = "⟨pad⟩"
END_TOKEN = "⟨eos⟩"
UNK_TOKEN = "⟨unk⟩"
SEP_TOKEN = "⟨sep⟩"


def sentinel_token(index: int) -> str:
    if not (0 <= index < N_SENTINELS):
        raise ValueError(f"sentinel index out of range: {index}")
    return f"⟨extra_{index}⟩"


def sentinel_id(index: int) -> int:
    if not (0 <= index < N_SENTINELS):
        raise ValueError(f"sentinel index out of range: {index}")
    return 4 + index

RESERVED_TOKENS = [PAD_TOKEN, END_TOKEN, UNK_TOKEN, SEP_TOKEN] + [sentinel_token(i) for i in range(N_SENTINELS)]

_LITERAL_RE = re.compile(r"⟨extra_(\d{1,2})⟩|⟨sep⟩|⟨eos⟩|⟨pad⟩|⟨unk⟩")

_ESCAPES = {"\n": "\\n", "\r": "\\r", "\t": "\\t", "\\": "\\\\"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


class Encoded(NamedTuple):
    ids: list[int]
    unknown_count: int


class Vocab:
    """Immutable symbol table; character symbols follow the reserved block."""

    def __init__(self, characters: Iterable[str]):
        chars = list(dict.fromkeys(characters))
        for ch in chars:
            if len(ch) != 1:
                raise ValueError(f"vocab symbols must be single characters, got {ch!r}")
        self._symbols = RESERVED_TOKENS + chars
        self._char_to_id = {ch: N_RESERVED + i for i, ch in enumerate(chars)}
        self._literal_to_id = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}

    def __len__(self) -> int:
        return len(self._symbols)

    @property
    def size(self) -> int:
        return len(self._symbols)

    def id_of(self, symbol: str) -> int:
        if symbol in self._literal_to_id:
            return self._literal_to_id[symbol]
        return self._char_to_id.get(symbol, UNK_ID)

    def symbol_of(self, token_id: int) -> str:
        return self._symbols[token_id]

    def encode(self, text: str) -> Encoded:
        """Map text to ids; reserved literals become single ids, unknown
        characters become the unk id and are counted in the result."""
        ids: list[int] = []
        unknown = 0
        pos = 0
        for m in _LITERAL_RE.finditer(text):
            for ch in text[pos:m.start()]:
                cid = self._char_to_id.get(ch)
                if cid is None:
                    ids.append(UNK_ID)
                    unknown += 1
                else:
                    ids.append(cid)
            ids.append(self._literal_to_id[m.group(0)])
            pos = m.end()
        for ch in text[pos:]:
            cid = self._char_to_id.get(ch)
            if cid is None:
                ids.append(UNK_ID)
                unknown += 1
            else:
                ids.append(cid)
        return Encoded(ids, unknown)

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self._symbols[i] for i in ids)

    def save(self, path: str) -> None:
        """One symbol per line, reserved block first; control chars escaped."""
        with open(path, "w", encoding="utf-8") as f:
            for sym in self._symbols:
                f.write(_ESCAPES.get(sym, sym))
                f.write("\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            lines = f.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:N_RESERVED] != RESERVED_TOKENS:
            raise ValueError(f"{path}: reserved token block is damaged")
        chars = [_UNESCAPES.get(line, line) for line in lines[N_RESERVED:]]
        return cls(chars)


def build_vocab(texts: Iterable[str], min_count: int = 1, extra_characters: str = "") -> Vocab:
    """Collect characters occurring >= min_count times, in codepoint order.

    ``extra_characters`` are always included; reserved literals inside the
    texts do not contribute characters.
    """
    counts: Counter[str] = Counter()
    any_text = False
    for text in texts:
        any_text = True
        counts.update(_LITERAL_RE.sub("", text))
    if not any_text:
        raise ValueError("cannot build a vocab from no text")
    chars = {ch for ch, c in counts.items() if c >= min_count}
    chars.update(extra_characters)
    return Vocab(sorted(chars))


__all__ = [
    "Encoded", "Vocab", "build_vocab",
    "PAD_ID", "END_ID", "UNK_ID", "SEP_ID", "N_RESERVED", "N_SENTINELS",
    "PAD_TOKEN", "END_TOKEN", "UNK_TOKEN", "SEP_TOKEN",
    "sentinel_id", "sentinel_token",
]
