"""Aggregate per-token log-probabilities into span-level scalars.

A span's log-probability under a role is the sum of that role's token values
over the tokens of the role's tokenizer lying inside the span; sums use
``math.fsum`` so span totals conserve the sequence total to <= 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .align import AlignedPartition
from .errors import MissingTrack, TokenizerSideUnknown
from .trace import LogProbTrack, ResponseBundle


@dataclass(frozen=True)
class SpanSignal:
    """Span-level log-probabilities, one entry per available role."""

    span_index: int
    logprob_by_role: Mapping[str, float]

    def logprob(self, role: str) -> float:
        try:
            return self.logprob_by_role[role]
        except KeyError:
            raise MissingTrack(role, f"span {self.span_index}") from None


def _token_range(track: LogProbTrack, bundle: ResponseBundle, span) -> tuple[int, int]:
    if track.tokenizer_id == bundle.teacher_trace.tokenizer_id:
        return span.teacher_tokens
    if track.tokenizer_id == bundle.student_trace.tokenizer_id:
        return span.student_tokens
    raise TokenizerSideUnknown(track.tokenizer_id)


def span_logprob(
    track: LogProbTrack, partition: AlignedPartition, span_index: int, bundle: ResponseBundle
) -> float:
    """Sum of the track's token log-probs inside one span, on the track's side."""
    span = partition.spans[span_index]
    lo, hi = _token_range(track, bundle, span)
    return math.fsum(track.values[lo:hi])


def span_reward(policy_lp: float, ref_lp: float) -> float:
    """Reference-relative span reward, the log-ratio policy/reference."""
    return policy_lp - ref_lp


def build_span_signals(
    bundle: ResponseBundle, require: Iterable[str] = ()
) -> list[SpanSignal]:
    """One SpanSignal per aligned span, covering every track in the bundle.

    Roles listed in ``require`` must be present; otherwise MissingTrack.
    """
    if bundle.partition is None:
        raise ValueError("bundle has no aligned partition")
    present = {t.role for t in bundle.tracks}
    for role in require:
        if role not in present:
            raise MissingTrack(role)
    signals = []
    for i, span in enumerate(bundle.partition.spans):
        by_role = {}
        for track in bundle.tracks:
            lo, hi = _token_range(track, bundle, span)
            by_role[track.role] = math.fsum(track.values[lo:hi])
        signals.append(SpanSignal(span_index=i, logprob_by_role=MappingProxyType(by_role)))
    return signals
