"""Random well-formed instances for property checks.

Provides random dual tilings (for alignment properties), random weighted
preference examples (for loss/gradient checks), and the central finite-
difference oracle used to validate analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .align import partition_aligned_spans
from .errors import MissingTrack
from .objective import ObjectiveConfig, ctpd_gradient
from .trace import (
    ROLE_POLICY,
    LogProbTrack,
    PreferenceExample,
    ResponseBundle,
    TokenizationTrace,
    Utf8Doc,
)

# Mixed-width codepoints so random tilings exercise multi-byte boundaries.
CHAR_POOL = "abcdefgh éß世界\U0001f600"


def random_text(rng: np.random.Generator, min_chars: int = 0, max_chars: int = 24) -> str:
    n = int(rng.integers(min_chars, max_chars + 1))
    return "".join(CHAR_POOL[int(i)] for i in rng.integers(0, len(CHAR_POOL), size=n))


def random_char_tiling(rng: np.random.Generator, text: str) -> tuple[tuple[int, int], ...]:
    """Random token intervals over the text's bytes, cut only at char boundaries."""
    if not text:
        return ()
    char_byte_len = [len(c.encode("utf-8")) for c in text]
    bounds = [0]
    for L in char_byte_len:
        bounds.append(bounds[-1] + L)
    # pick a random subset of interior char boundaries as token cuts
    interior = bounds[1:-1]
    keep = [b for b in interior if rng.random() < 0.45]
    cuts = [0] + keep + [bounds[-1]]
    return tuple((s, e) for s, e in zip(cuts, cuts[1:]))


def random_trace_pair(
    rng: np.random.Generator, min_chars: int = 0, max_chars: int = 24
) -> tuple[TokenizationTrace, TokenizationTrace]:
    """Two independent random tokenizations of one random text."""
    text = random_text(rng, min_chars, max_chars)
    doc = Utf8Doc.from_text(text)
    return (
        TokenizationTrace(doc, "teacher", random_char_tiling(rng, text)),
        TokenizationTrace(doc, "student", random_char_tiling(rng, text)),
    )


def _span_structured_bundle(
    rng: np.random.Generator,
    n_spans: int,
    ref_role: str,
    lp_lo: float = -10.0,
    lp_hi: float = 0.0,
) -> ResponseBundle:
    """A bundle whose partition has exactly n_spans spans with 1-3 tokens per side.

    Span i spans t_i * s_i single-char tokens of length s_i / t_i bytes, so
    both sides tile the same interval and no finer common boundary exists.
    """
    letters = "abcdefgh"
    teacher_tokens: list[tuple[int, int]] = []
    student_tokens: list[tuple[int, int]] = []
    pos = 0
    chunks = []
    for _ in range(n_spans):
        t_n = int(rng.integers(1, 4))
        s_n = int(rng.integers(1, 4))
        if t_n == s_n and t_n > 1:
            s_n = 1  # keep interior boundaries distinct so the span stays minimal
        span_len = t_n * s_n
        chunks.append(
            "".join(letters[int(i)] for i in rng.integers(0, len(letters), size=span_len))
        )
        for k in range(t_n):
            teacher_tokens.append((pos + k * s_n, pos + (k + 1) * s_n))
        for k in range(s_n):
            student_tokens.append((pos + k * t_n, pos + (k + 1) * t_n))
        pos += span_len
    doc = Utf8Doc.from_text("".join(chunks))
    teacher = TokenizationTrace(doc, "teacher", tuple(teacher_tokens))
    student = TokenizationTrace(doc, "student", tuple(student_tokens))
    partition = partition_aligned_spans(teacher, student)

    def _track(role: str, side: TokenizationTrace) -> LogProbTrack:
        vals = rng.uniform(lp_lo, lp_hi, size=len(side.tokens))
        return LogProbTrack(role, side.tokenizer_id, tuple(float(v) for v in vals))

    tracks = [_track(ROLE_POLICY, student)]
    tracks.append(_track(ref_role, teacher if ref_role == "teacher_ref" else student))
    return ResponseBundle(
        teacher_trace=teacher,
        student_trace=student,
        tracks=tuple(tracks),
        partition=partition,
    )


def random_weighted_example(
    rng: np.random.Generator,
    max_spans: int = 20,
    ref_role: str = "teacher_ref",
    weight_lo: float = math.exp(-0.5),
    weight_hi: float = math.exp(1.5),
) -> PreferenceExample:
    """Random example with policy/reference tracks and per-span weights."""
    bundles = {}
    for side in ("chosen", "rejected"):
        n_spans = int(rng.integers(1, max_spans + 1))
        bundle = _span_structured_bundle(rng, n_spans, ref_role)
        weights = rng.uniform(weight_lo, weight_hi, size=n_spans)
        bundles[side] = replace(bundle, span_weights=tuple(float(w) for w in weights))
    return PreferenceExample(
        prompt=Utf8Doc.from_text("p"),
        chosen=bundles["chosen"],
        rejected=bundles["rejected"],
    )


def _with_policy_values(bundle: ResponseBundle, values: np.ndarray) -> ResponseBundle:
    tracks = []
    found = False
    for t in bundle.tracks:
        if t.role == ROLE_POLICY:
            tracks.append(replace(t, values=tuple(float(v) for v in values)))
            found = True
        else:
            tracks.append(t)
    if not found:
        raise MissingTrack(ROLE_POLICY)
    return replace(bundle, tracks=tuple(tracks))


def fd_gradient_check(
    example: PreferenceExample,
    cfg: ObjectiveConfig,
    h: float = 1e-6,
) -> dict[str, float]:
    """Compare the analytic policy-token gradient against central differences.

    Returns loss, margin, and the max relative error over every policy token
    of both responses; the relative error denominator is the larger magnitude
    of the two gradient estimates.
    """
    out = ctpd_gradient(example, cfg)
    analytic = {
        "chosen": np.asarray(out.grad_policy_tokens_w),
        "rejected": np.asarray(out.grad_policy_tokens_l),
    }

    def loss_with(side: str, values: np.ndarray) -> float:
        bundle = _with_policy_values(example.bundle(side), values)
        probe = replace(example, **{side: bundle})
        return ctpd_gradient(probe, cfg).loss

    max_rel = 0.0
    for side in ("chosen", "rejected"):
        track = example.bundle(side).track(ROLE_POLICY)
        base = np.asarray(track.values, dtype=np.float64)
        for i in range(len(base)):
            bumped = base.copy()
            bumped[i] = base[i] + h
            up = loss_with(side, bumped)
            bumped[i] = base[i] - h
            down = loss_with(side, bumped)
            fd = (up - down) / (2.0 * h)
            a = analytic[side][i]
            denom = max(abs(a), abs(fd))
            if denom > 0.0:
                max_rel = max(max_rel, abs(a - fd) / denom)
    return {"loss": out.loss, "margin": out.margin, "max_grad_rel_err": max_rel}
