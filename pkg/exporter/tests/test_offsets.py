"""Byte-offset extraction: conversion, tiling, and rejection paths."""

import pytest
from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers

from ctpd_exporter.errors import OffsetUnavailable
from ctpd_exporter.offsets import char_to_byte_offsets, token_byte_intervals


def test_char_to_byte_ascii_identity():
    text = "hello world"
    offsets = [(0, 5), (5, 11)]
    assert char_to_byte_offsets(text, offsets) == [(0, 5), (5, 11)]


def test_char_to_byte_multibyte():
    text = "café!"  # c(1) a(1) f(1) é(2) !(1)
    assert char_to_byte_offsets(text, [(0, 3), (3, 4), (4, 5)]) == [(0, 3), (3, 5), (5, 6)]


def _bpe(corpus, vocab_size=300):
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=vocab_size,
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator(corpus, trainer)
    return tok


def test_ascii_intervals_tile_exactly():
    tok = _bpe(["the quick brown fox"] * 50)
    text = "the quick fox"
    ids, intervals = token_byte_intervals(tok, "t", text)
    assert len(ids) == len(intervals)
    pos = 0
    raw = text.encode()
    for s, e in intervals:
        assert s == pos and e > s
        pos = e
    assert pos == len(raw)


def test_multibyte_character_offsets_convert_to_exact_byte_tiling():
    # the merge table keeps the 2-byte character intact, so char offsets tile
    tok = _bpe(["café au lait"] * 80, vocab_size=300)
    text = "café café"
    ids, intervals = token_byte_intervals(tok, "t", text)
    raw = text.encode("utf-8")
    pos = 0
    for s, e in intervals:
        assert s == pos
        pos = e
    assert pos == len(raw)
    # slices decode cleanly (no split inside the 2-byte character)
    for s, e in intervals:
        raw[s:e].decode("utf-8")


def test_split_codepoint_rejected():
    # byte-level alphabet only: each byte of a multi-byte char becomes its own
    # token, and both report the same character span -> overlap -> reject
    tok = _bpe(["ascii only corpus"] * 30, vocab_size=260)
    with pytest.raises(OffsetUnavailable) as exc:
        token_byte_intervals(tok, "bytes-only", "é")
    assert "bytes-only" in str(exc.value)


def test_uncovered_text_rejected():
    # a tokenizer with no byte fallback drops unknown characters -> gap -> reject
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    trainer = trainers.BpeTrainer(vocab_size=60, show_progress=False)
    tok.train_from_iterator(["aaab aab ab"] * 30, trainer)
    with pytest.raises(OffsetUnavailable):
        token_byte_intervals(tok, "tiny", "aa zz aa")


def test_empty_text_empty_tiling():
    tok = _bpe(["abc"] * 10)
    ids, intervals = token_byte_intervals(tok, "t", "")
    assert ids == [] and intervals == []
