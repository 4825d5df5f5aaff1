"""Shared builders for small, hand-checkable fixtures."""

from __future__ import annotations

import json

import pytest

from ctpd.align import partition_aligned_spans
from ctpd.trace import (
    LogProbTrack,
    PreferenceExample,
    ResponseBundle,
    TokenizationTrace,
    Utf8Doc,
)


def make_trace(text: str, tokenizer_id: str, tokens: list[tuple[int, int]]) -> TokenizationTrace:
    return TokenizationTrace(
        doc=Utf8Doc.from_text(text), tokenizer_id=tokenizer_id, tokens=tuple(tokens)
    )


def make_bundle(
    text: str,
    teacher_tokens: list[tuple[int, int]],
    student_tokens: list[tuple[int, int]],
    tracks: list[LogProbTrack] = (),
    with_partition: bool = False,
    span_weights: tuple[float, ...] | None = None,
) -> ResponseBundle:
    teacher = make_trace(text, "teacher", teacher_tokens)
    student = make_trace(text, "student", student_tokens)
    partition = partition_aligned_spans(teacher, student) if with_partition else None
    return ResponseBundle(
        teacher_trace=teacher,
        student_trace=student,
        tracks=tuple(tracks),
        partition=partition,
        span_weights=span_weights,
    )


def make_example(chosen: ResponseBundle, rejected: ResponseBundle, prompt: str = "q") -> PreferenceExample:
    return PreferenceExample(prompt=Utf8Doc.from_text(prompt), chosen=chosen, rejected=rejected)


SAMPLE_LINE = {
    "prompt": "q",
    "chosen": {
        "text": "the cat",
        "tokens": {"teacher": [[0, 3], [3, 7]], "student": [[0, 4], [4, 7]]},
        "logprobs": {
            "policy": {"tokenizer": "student", "values": [-1.0, -2.0]},
            "teacher_ref": {"tokenizer": "teacher", "values": [-1.5, -1.5]},
            "positive": {"tokenizer": "teacher", "values": [-1.0, -2.5]},
            "negative": {"tokenizer": "teacher", "values": [-2.0, -2.5]},
        },
    },
    "rejected": {
        "text": "a dog",
        "tokens": {"teacher": [[0, 2], [2, 5]], "student": [[0, 1], [1, 5]]},
        "logprobs": {
            "policy": {"tokenizer": "student", "values": [-2.0, -3.0]},
            "teacher_ref": {"tokenizer": "teacher", "values": [-1.0, -1.0]},
            "positive": {"tokenizer": "teacher", "values": [-3.0, -1.5]},
            "negative": {"tokenizer": "teacher", "values": [-1.0, -2.5]},
        },
    },
}


@pytest.fixture
def sample_jsonl(tmp_path):
    path = tmp_path / "sample.jsonl"
    path.write_text(json.dumps(SAMPLE_LINE) + "\n", encoding="utf-8")
    return path
