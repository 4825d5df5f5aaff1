"""Minimal aligned-span partition of two tokenizations of the same text.

Two token subsequences form an aligned span when they cover the identical
byte interval. Because both tokenizations tile the text exactly, the common
boundary set (intersection of the two boundary sets) completely determines
the unique minimal partition: each pair of consecutive common boundaries is
one span. The construction is a two-pointer walk, O(n_teacher + n_student).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TextMismatch, TilingViolation
from .trace import TokenizationTrace, validate_trace


@dataclass(frozen=True)
class AlignedSpan:
    """One byte interval with the token index ranges covering it on each side."""

    byte_start: int
    byte_end: int
    teacher_tokens: tuple[int, int]  # [i, j) into the teacher trace
    student_tokens: tuple[int, int]  # [k, l) into the student trace

    @property
    def byte_len(self) -> int:
        return self.byte_end - self.byte_start

    @property
    def teacher_count(self) -> int:
        return self.teacher_tokens[1] - self.teacher_tokens[0]

    @property
    def student_count(self) -> int:
        return self.student_tokens[1] - self.student_tokens[0]


@dataclass(frozen=True)
class AlignedPartition:
    """Ordered minimal tiling of a text into aligned spans."""

    spans: tuple[AlignedSpan, ...]
    total_bytes: int

    def __len__(self) -> int:
        return len(self.spans)

    def student_span_index(self) -> list[int]:
        """Span index of every student token, in token order."""
        out = []
        for i, sp in enumerate(self.spans):
            out.extend([i] * sp.student_count)
        return out

    def teacher_span_index(self) -> list[int]:
        out = []
        for i, sp in enumerate(self.spans):
            out.extend([i] * sp.teacher_count)
        return out


def boundary_set(trace: TokenizationTrace) -> list[int]:
    """Sorted byte offsets {0} union {byte_end of every token}."""
    return [0] + [e for (_, e) in trace.tokens]


def _check_trace(trace: TokenizationTrace) -> None:
    violations = validate_trace(trace)
    if violations:
        v = violations[0]
        raise TilingViolation(
            trace.tokenizer_id, v.details.get("byte_index", -1), v.message
        )


def partition_aligned_spans(
    teacher: TokenizationTrace, student: TokenizationTrace
) -> AlignedPartition:
    """Intersect the two boundary sets and emit one span per common interval."""
    if teacher.doc.text != student.doc.text:
        raise TextMismatch()
    _check_trace(teacher)
    _check_trace(student)

    n = teacher.doc.byte_len
    if n == 0:
        return AlignedPartition(spans=(), total_bytes=0)

    t_bounds = boundary_set(teacher)
    s_bounds = boundary_set(student)
    common = sorted(set(t_bounds) & set(s_bounds))
    # 0 and byte_len belong to both boundary sets of any exact tiling
    assert common[0] == 0 and common[-1] == n

    spans = []
    ti = si = 0
    for left, right in zip(common, common[1:]):
        tj, sk = ti, si
        while tj < len(teacher.tokens) and teacher.tokens[tj][1] <= right:
            tj += 1
        while sk < len(student.tokens) and student.tokens[sk][1] <= right:
            sk += 1
        spans.append(
            AlignedSpan(
                byte_start=left,
                byte_end=right,
                teacher_tokens=(ti, tj),
                student_tokens=(si, sk),
            )
        )
        ti, si = tj, sk
    return AlignedPartition(spans=tuple(spans), total_bytes=n)


def span_count_stats(partition: AlignedPartition) -> dict[str, float]:
    """Descriptive statistics of a partition."""
    n = len(partition.spans)
    if n == 0:
        return {
            "span_count": 0,
            "max_span_bytes": 0,
            "mean_teacher_tokens_per_span": 0.0,
            "mean_student_tokens_per_span": 0.0,
        }
    return {
        "span_count": n,
        "max_span_bytes": max(sp.byte_len for sp in partition.spans),
        "mean_teacher_tokens_per_span": sum(sp.teacher_count for sp in partition.spans) / n,
        "mean_student_tokens_per_span": sum(sp.student_count for sp in partition.spans) / n,
    }


def multi_token_span_fraction(partitions: list[AlignedPartition]) -> float:
    """Fraction of spans, over all partitions, with more than one token on either side."""
    total = 0
    multi = 0
    for p in partitions:
        for sp in p.spans:
            total += 1
            if sp.teacher_count > 1 or sp.student_count > 1:
                multi += 1
    return multi / total if total else 0.0
