"""Greedy longest-match toy tokenizers with exact byte offsets.

A tokenizer owns an ordered merge table of multi-byte pieces plus an implicit
single-byte fallback, so any byte string tokenizes into an exact tiling.
Piece ids: merges first (table order), then the 256 single bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from ..trace import TokenizationTrace, Utf8Doc


@dataclass(frozen=True)
class ToyTokenizer:
    merges: tuple[bytes, ...]
    tokenizer_id: str

    def __post_init__(self):
        seen = set()
        for piece in self.merges:
            if len(piece) < 2:
                raise ValueError(f"merge piece {piece!r} shorter than 2 bytes")
            if piece in seen:
                raise ValueError(f"duplicate merge piece {piece!r}")
            seen.add(piece)

    @cached_property
    def _merge_set(self) -> frozenset[bytes]:
        return frozenset(self.merges)

    @cached_property
    def _max_piece_len(self) -> int:
        return max((len(p) for p in self.merges), default=1)

    @cached_property
    def piece_to_id(self) -> dict[bytes, int]:
        table = {piece: i for i, piece in enumerate(self.merges)}
        base = len(self.merges)
        for b in range(256):
            table[bytes([b])] = base + b
        return table

    @property
    def vocab_size(self) -> int:
        return len(self.merges) + 256

    def id_to_piece(self, piece_id: int) -> bytes:
        if piece_id < len(self.merges):
            return self.merges[piece_id]
        return bytes([piece_id - len(self.merges)])

    def encode_bytes(self, raw: bytes) -> list[tuple[int, int, int]]:
        """(byte_start, byte_end, piece_id) triples tiling ``raw``."""
        out = []
        i, n = 0, len(raw)
        while i < n:
            matched = None
            for length in range(min(self._max_piece_len, n - i), 1, -1):
                cand = raw[i : i + length]
                if cand in self._merge_set:
                    matched = cand
                    break
            if matched is None:
                matched = raw[i : i + 1]
            j = i + len(matched)
            out.append((i, j, self.piece_to_id[matched]))
            i = j
        return out

    def encode(self, text: str) -> list[int]:
        return [pid for (_, _, pid) in self.encode_bytes(text.encode("utf-8"))]


def toy_tokenize(tok: ToyTokenizer, text: str) -> TokenizationTrace:
    """Deterministic greedy longest-match trace tiling the text."""
    doc = Utf8Doc.from_text(text)
    spans = tok.encode_bytes(text.encode("utf-8"))
    return TokenizationTrace(
        doc=doc,
        tokenizer_id=tok.tokenizer_id,
        tokens=tuple((s, e) for (s, e, _) in spans),
    )
