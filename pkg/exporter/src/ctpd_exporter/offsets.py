"""Exact byte-offset extraction from fast tokenizers.

Fast tokenizers report character offsets into the original text; these are
converted to byte offsets via the UTF-8 prefix lengths. Texts whose offset
maps skip or overlap characters (bytes of one codepoint split across tokens,
unknown bytes dropped, destructive normalizers) cannot be represented as an
exact tiling and are rejected.
"""

from __future__ import annotations

from tokenizers import Tokenizer

from .errors import OffsetUnavailable


def char_to_byte_offsets(text: str, char_offsets: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Map (start, end) char intervals to byte intervals of the UTF-8 encoding."""
    prefix = [0]
    for ch in text:
        prefix.append(prefix[-1] + len(ch.encode("utf-8")))
    return [(prefix[s], prefix[e]) for s, e in char_offsets]


def _check_tiling(text: str, name: str, char_offsets: list[tuple[int, int]]) -> None:
    pos = 0
    for i, (s, e) in enumerate(char_offsets):
        if e <= s:
            raise OffsetUnavailable(name, text, f"token {i} has empty char span ({s}, {e})")
        if s > pos:
            raise OffsetUnavailable(name, text, f"characters {pos}:{s} not covered by any token")
        if s < pos:
            raise OffsetUnavailable(name, text, f"token {i} overlaps at character {s}")
        pos = e
    if pos != len(text):
        raise OffsetUnavailable(name, text, f"characters {pos}:{len(text)} not covered")


def token_byte_intervals(
    tokenizer: Tokenizer, name: str, text: str
) -> tuple[list[int], list[tuple[int, int]]]:
    """Token ids plus exact byte intervals tiling the text; special tokens excluded."""
    if text == "":
        return [], []
    enc = tokenizer.encode(text, add_special_tokens=False)
    char_offsets = [tuple(o) for o in enc.offsets]
    _check_tiling(text, name, char_offsets)
    return list(enc.ids), char_to_byte_offsets(text, char_offsets)
