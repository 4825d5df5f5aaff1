"""Span-level importance weights from a contrastive model pair.

The core estimator is w = k * exp(mu * clamp(lp_pos - lp_neg, L, U)) with the
clamp applied to the raw log-ratio before mu. Ablation strategies (random,
average, student_estimate, teacher_student_estimate) reuse the same machinery
over different tracks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingTrack, SeedRequired
from .numerics import clamp
from .trace import (
    ROLE_NEGATIVE,
    ROLE_POSITIVE,
    ResponseBundle,
    WeightConfig,
)


@dataclass(frozen=True)
class SpanWeights:
    """Positive per-span weights plus the configuration that produced them."""

    values: tuple[float, ...]
    config: WeightConfig
    polarity: str  # "winner" | "loser"

    def __len__(self) -> int:
        return len(self.values)


def contrastive_span_weight(
    pos_lp: float, neg_lp: float, cfg: WeightConfig, polarity: str
) -> float:
    """k * exp(mu * clamp(pos_lp - neg_lp, L, U)); mu chosen by polarity."""
    ratio = clamp(pos_lp - neg_lp, cfg.clamp_lo, cfg.clamp_hi)
    return cfg.k * math.exp(cfg.mu(polarity) * ratio)


def weight_bounds(cfg: WeightConfig, polarity: str) -> tuple[float, float]:
    """Closed interval guaranteed to contain every contrastive weight."""
    mu = cfg.mu(polarity)
    a = cfg.k * math.exp(min(mu * cfg.clamp_lo, mu * cfg.clamp_hi))
    b = cfg.k * math.exp(max(mu * cfg.clamp_lo, mu * cfg.clamp_hi))
    return a, b


def _require_side(bundle: ResponseBundle, role: str, side_trace) -> "tuple[float, ...]":
    track = bundle.track(role)
    if track is None or track.tokenizer_id != side_trace.tokenizer_id:
        side = side_trace.tokenizer_id
        raise MissingTrack(role, f"needed on tokenizer '{side}'")
    return track.values


def compute_span_weights(
    bundle: ResponseBundle,
    cfg: WeightConfig,
    polarity: str,
    seed: int | None = None,
    example_key: tuple[int, ...] = (),
) -> SpanWeights:
    """Per-span weights for one response under the configured strategy.

    The random strategy needs an explicit seed; ``example_key`` extends the
    seed so parallel per-example draws stay deterministic.
    """
    if bundle.partition is None:
        raise ValueError("bundle has no aligned partition")
    spans = bundle.partition.spans
    strategy = cfg.strategy

    if strategy == "random":
        if seed is None:
            raise SeedRequired("random weighting strategy requires an explicit seed")
        side_code = 0 if polarity == "winner" else 1
        rng = np.random.default_rng(np.random.SeedSequence((seed, side_code) + tuple(example_key)))
        draws = rng.uniform(-1.0, 1.0, size=len(spans))
        values = tuple(float(v) for v in np.exp(draws))
        return SpanWeights(values=values, config=cfg, polarity=polarity)

    if strategy in ("contrastive_teacher", "average"):
        pos = _require_side(bundle, ROLE_POSITIVE, bundle.teacher_trace)
        neg = _require_side(bundle, ROLE_NEGATIVE, bundle.teacher_trace)
        pos_side = neg_side = "teacher"
    elif strategy == "student_estimate":
        pos = _require_side(bundle, ROLE_POSITIVE, bundle.student_trace)
        neg = _require_side(bundle, ROLE_NEGATIVE, bundle.student_trace)
        pos_side = neg_side = "student"
    elif strategy == "teacher_student_estimate":
        pos = _require_side(bundle, ROLE_POSITIVE, bundle.teacher_trace)
        neg = _require_side(bundle, ROLE_NEGATIVE, bundle.student_trace)
        pos_side, neg_side = "teacher", "student"
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    def _span_sum(values: tuple[float, ...], span, side: str) -> float:
        lo, hi = span.teacher_tokens if side == "teacher" else span.student_tokens
        return math.fsum(values[lo:hi])

    out = []
    for span in spans:
        w = contrastive_span_weight(
            _span_sum(pos, span, pos_side), _span_sum(neg, span, neg_side), cfg, polarity
        )
        if strategy == "average":
            w /= span.student_count
        out.append(w)
    return SpanWeights(values=tuple(out), config=cfg, polarity=polarity)


def token_weights_from_spans(weights: SpanWeights, partition) -> list[float]:
    """Broadcast span weights onto student tokens (one weight per token)."""
    out = []
    for w, span in zip(weights.values, partition.spans):
        out.extend([w] * span.student_count)
    return out
