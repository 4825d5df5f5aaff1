"""Canonical data model: texts, byte-offset tokenizations, log-prob tracks,
preference examples, and the ctpd/1 JSONL format.

All offsets are byte offsets into the UTF-8 encoding of the text. Tokens of a
trace must tile ``[0, byte_len)`` exactly and may not split a multi-byte
codepoint. Log-probabilities are natural-log float64 values, each finite and
<= 0. Everything here is immutable after construction; validation lives in
free functions so that invalid data can be inspected as diagnostics rather
than only as exceptions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable

from .errors import (
    InvalidLogProb,
    ParseError,
    TextMismatch,
    TilingViolation,
    TrackLengthMismatch,
)

if TYPE_CHECKING:
    from .align import AlignedPartition

SCHEMA_VERSION = "ctpd/1"

# Track roles with recognized semantics; any other label is carried as-is.
ROLE_POLICY = "policy"
ROLE_TEACHER_REF = "teacher_ref"
ROLE_POSITIVE = "positive"
ROLE_NEGATIVE = "negative"
ROLE_STUDENT_REF = "student_ref"
KNOWN_ROLES = (ROLE_POLICY, ROLE_TEACHER_REF, ROLE_POSITIVE, ROLE_NEGATIVE)

SIDE_TEACHER = "teacher"
SIDE_STUDENT = "student"

WEIGHT_STRATEGIES = (
    "contrastive_teacher",
    "random",
    "average",
    "student_estimate",
    "teacher_student_estimate",
)


@dataclass(frozen=True)
class Utf8Doc:
    """A text plus its UTF-8 byte length."""

    text: str
    byte_len: int

    @classmethod
    def from_text(cls, text: str) -> "Utf8Doc":
        return cls(text=text, byte_len=len(text.encode("utf-8")))


@dataclass(frozen=True)
class TokenizationTrace:
    """One tokenizer's exact byte tiling of a document."""

    doc: Utf8Doc
    tokenizer_id: str
    tokens: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def token_bytes(self, i: int) -> bytes:
        s, e = self.tokens[i]
        return self.doc.text.encode("utf-8")[s:e]


@dataclass(frozen=True)
class LogProbTrack:
    """Per-token log-probabilities for one model role on one tokenizer."""

    role: str
    tokenizer_id: str
    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ResponseBundle:
    """A response text under both tokenizers, with attached signals.

    Tracks form a set keyed by role; they are kept sorted so equality and
    serialization are independent of construction order.
    """

    teacher_trace: TokenizationTrace
    student_trace: TokenizationTrace
    tracks: tuple[LogProbTrack, ...] = ()
    partition: "AlignedPartition | None" = None
    span_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        ordered = tuple(sorted(self.tracks, key=lambda t: (t.role, t.tokenizer_id)))
        if ordered != self.tracks:
            object.__setattr__(self, "tracks", ordered)

    @property
    def text(self) -> str:
        return self.teacher_trace.doc.text

    def track(self, role: str) -> LogProbTrack | None:
        for t in self.tracks:
            if t.role == role:
                return t
        return None

    def with_partition(
        self,
        partition: "AlignedPartition",
        span_weights: tuple[float, ...] | None = None,
    ) -> "ResponseBundle":
        return replace(self, partition=partition, span_weights=span_weights)

    def with_tracks(self, *extra: LogProbTrack) -> "ResponseBundle":
        return replace(self, tracks=self.tracks + tuple(extra))


@dataclass(frozen=True)
class PreferenceExample:
    """A prompt with a preferred and a dispreferred response."""

    prompt: Utf8Doc
    chosen: ResponseBundle
    rejected: ResponseBundle
    line_no: int | None = field(default=None, compare=False)

    def bundle(self, side: str) -> ResponseBundle:
        if side == "chosen":
            return self.chosen
        if side == "rejected":
            return self.rejected
        raise ValueError(f"unknown side {side!r}")


@dataclass(frozen=True)
class WeightConfig:
    """Constants governing span-weight estimation.

    Defaults: k=1, mu=+-1, clamp range [-0.5, 1.5].
    """

    k: float = 1.0
    mu_pos: float = 1.0
    mu_neg: float = -1.0
    clamp_lo: float = -0.5
    clamp_hi: float = 1.5
    strategy: str = "contrastive_teacher"

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.clamp_lo > self.clamp_hi:
            raise ValueError(f"clamp range empty: [{self.clamp_lo}, {self.clamp_hi}]")
        if self.strategy not in WEIGHT_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def mu(self, polarity: str) -> float:
        if polarity == "winner":
            return self.mu_pos
        if polarity == "loser":
            return self.mu_neg
        raise ValueError(f"unknown polarity {polarity!r}")


# ---------------------------------------------------------------------------
# Validation: violations are plain data so callers can aggregate them.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    side: str | None = None
    details: dict[str, Any] = field(default_factory=dict, compare=False)


def _is_char_boundary(raw: bytes, i: int) -> bool:
    # UTF-8 continuation bytes have the form 0b10xxxxxx
    if i <= 0 or i >= len(raw):
        return True
    return (raw[i] & 0xC0) != 0x80


def validate_trace(trace: TokenizationTrace, side: str | None = None) -> list[Violation]:
    out: list[Violation] = []
    raw = trace.doc.text.encode("utf-8")
    if len(raw) != trace.doc.byte_len:
        out.append(
            Violation(
                "ByteLenMismatch",
                f"declared byte_len {trace.doc.byte_len} != encoded length {len(raw)}",
                side=side,
                details={"tokenizer_id": trace.tokenizer_id},
            )
        )
        return out
    n = len(raw)
    prev_end = 0
    for idx, (s, e) in enumerate(trace.tokens):
        if e <= s:
            out.append(
                Violation(
                    "TilingViolation",
                    f"token {idx} interval [{s},{e}) is empty or inverted",
                    side=side,
                    details={"tokenizer_id": trace.tokenizer_id, "byte_index": s},
                )
            )
            return out
        if s != prev_end:
            kind = "gap" if s > prev_end else "overlap"
            out.append(
                Violation(
                    "TilingViolation",
                    f"{kind} at byte {prev_end} before token {idx}",
                    side=side,
                    details={"tokenizer_id": trace.tokenizer_id, "byte_index": prev_end},
                )
            )
            return out
        if e > n:
            out.append(
                Violation(
                    "TilingViolation",
                    f"token {idx} ends at {e}, past byte_len {n}",
                    side=side,
                    details={"tokenizer_id": trace.tokenizer_id, "byte_index": n},
                )
            )
            return out
        for b in (s, e):
            if not _is_char_boundary(raw, b):
                out.append(
                    Violation(
                        "TilingViolation",
                        f"byte {b} splits a multi-byte codepoint",
                        side=side,
                        details={"tokenizer_id": trace.tokenizer_id, "byte_index": b},
                    )
                )
                return out
        prev_end = e
    if prev_end != n:
        out.append(
            Violation(
                "TilingViolation",
                f"gap at byte {prev_end}: tokens end before byte_len {n}",
                side=side,
                details={"tokenizer_id": trace.tokenizer_id, "byte_index": prev_end},
            )
        )
    return out


def _validate_track(track: LogProbTrack, bundle: ResponseBundle, side: str) -> list[Violation]:
    out: list[Violation] = []
    if track.tokenizer_id == bundle.teacher_trace.tokenizer_id:
        expected = len(bundle.teacher_trace)
    elif track.tokenizer_id == bundle.student_trace.tokenizer_id:
        expected = len(bundle.student_trace)
    else:
        out.append(
            Violation(
                "TokenizerSideUnknown",
                f"track '{track.role}' names tokenizer '{track.tokenizer_id}', "
                "which matches neither trace",
                side=side,
                details={"role": track.role},
            )
        )
        return out
    if len(track.values) != expected:
        out.append(
            Violation(
                "TrackLengthMismatch",
                f"track '{track.role}': {len(track.values)} values for {expected} tokens",
                side=side,
                details={"role": track.role, "expected": expected, "got": len(track.values)},
            )
        )
    for i, v in enumerate(track.values):
        if not math.isfinite(v):
            out.append(
                Violation(
                    "NonFiniteLogProb",
                    f"track '{track.role}' value [{i}] is {v!r}",
                    side=side,
                    details={"role": track.role, "index": i, "value": v},
                )
            )
        elif v > 0.0:
            out.append(
                Violation(
                    "PositiveLogProb",
                    f"track '{track.role}' value [{i}] = {v} exceeds 0",
                    side=side,
                    details={"role": track.role, "index": i, "value": v},
                )
            )
    return out


def _validate_bundle(bundle: ResponseBundle, side: str) -> list[Violation]:
    out: list[Violation] = []
    if bundle.teacher_trace.doc.text != bundle.student_trace.doc.text:
        out.append(
            Violation(
                "TextMismatch",
                "teacher and student traces carry different texts",
                side=side,
            )
        )
    out.extend(validate_trace(bundle.teacher_trace, side))
    out.extend(validate_trace(bundle.student_trace, side))
    for track in bundle.tracks:
        out.extend(_validate_track(track, bundle, side))
    if bundle.span_weights is not None:
        if bundle.partition is None:
            out.append(
                Violation(
                    "WeightCountMismatch",
                    "span weights present without an aligned partition",
                    side=side,
                )
            )
        elif len(bundle.span_weights) != len(bundle.partition.spans):
            out.append(
                Violation(
                    "WeightCountMismatch",
                    f"{len(bundle.span_weights)} weights for "
                    f"{len(bundle.partition.spans)} spans",
                    side=side,
                )
            )
        for i, w in enumerate(bundle.span_weights):
            if not math.isfinite(w) or w <= 0.0:
                out.append(
                    Violation(
                        "NonPositiveWeight",
                        f"span weight [{i}] = {w!r} is not finite and positive",
                        side=side,
                        details={"index": i, "value": w},
                    )
                )
    return out


def validate_example(example: PreferenceExample) -> list[Violation]:
    """Return all invariant violations; empty iff the example is valid."""
    out: list[Violation] = []
    out.extend(_validate_bundle(example.chosen, "chosen"))
    out.extend(_validate_bundle(example.rejected, "rejected"))
    return out


def _raise_first(violations: list[Violation], line: int) -> None:
    if not violations:
        return
    v = violations[0]
    d = v.details
    if v.kind == "TextMismatch":
        raise TextMismatch(v.message, line=line)
    if v.kind == "TilingViolation":
        raise TilingViolation(d["tokenizer_id"], d["byte_index"], v.message, line=line)
    if v.kind == "TrackLengthMismatch":
        raise TrackLengthMismatch(d["role"], d["expected"], d["got"], line=line)
    if v.kind in ("PositiveLogProb", "NonFiniteLogProb"):
        raise InvalidLogProb(d["role"], d["index"], d["value"], line=line)
    raise ParseError(line, f"{v.kind}: {v.message}")


# ---------------------------------------------------------------------------
# ctpd/1 JSONL
# ---------------------------------------------------------------------------


def _bundle_from_obj(obj: Any, line: int) -> ResponseBundle:
    from .align import AlignedPartition, AlignedSpan

    if not isinstance(obj, dict):
        raise ParseError(line, "response entry is not an object")
    try:
        text = obj["text"]
        tokens = obj["tokens"]
    except KeyError as exc:
        raise ParseError(line, f"response entry missing key {exc}") from None
    if not isinstance(text, str):
        raise ParseError(line, "'text' is not a string")
    if not isinstance(tokens, dict) or SIDE_TEACHER not in tokens or SIDE_STUDENT not in tokens:
        raise ParseError(line, "'tokens' must map both 'teacher' and 'student'")

    doc = Utf8Doc.from_text(text)

    def _intervals(raw: Any, which: str) -> tuple[tuple[int, int], ...]:
        if not isinstance(raw, list):
            raise ParseError(line, f"'{which}' token list malformed")
        out = []
        for item in raw:
            if (
                not isinstance(item, (list, tuple))
                or len(item) != 2
                or not all(isinstance(x, int) for x in item)
            ):
                raise ParseError(line, f"'{which}' token interval {item!r} malformed")
            out.append((item[0], item[1]))
        return tuple(out)

    teacher = TokenizationTrace(doc, SIDE_TEACHER, _intervals(tokens[SIDE_TEACHER], SIDE_TEACHER))
    student = TokenizationTrace(doc, SIDE_STUDENT, _intervals(tokens[SIDE_STUDENT], SIDE_STUDENT))

    tracks = []
    logprobs = obj.get("logprobs", {})
    if not isinstance(logprobs, dict):
        raise ParseError(line, "'logprobs' is not an object")
    for role, entry in logprobs.items():
        if (
            not isinstance(entry, dict)
            or "tokenizer" not in entry
            or "values" not in entry
            or entry["tokenizer"] not in (SIDE_TEACHER, SIDE_STUDENT)
        ):
            raise ParseError(line, f"logprobs entry for role '{role}' malformed")
        values = entry["values"]
        if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
            raise ParseError(line, f"logprobs values for role '{role}' malformed")
        tracks.append(LogProbTrack(role, entry["tokenizer"], tuple(float(v) for v in values)))

    partition = None
    if "spans" in obj:
        spans_raw = obj["spans"]
        if not isinstance(spans_raw, list):
            raise ParseError(line, "'spans' is not a list")
        spans = []
        for item in spans_raw:
            try:
                s, e, (ti, tj), (sk, sl) = item
                spans.append(AlignedSpan(int(s), int(e), (int(ti), int(tj)), (int(sk), int(sl))))
            except (TypeError, ValueError):
                raise ParseError(line, f"span entry {item!r} malformed") from None
        partition = AlignedPartition(spans=tuple(spans), total_bytes=doc.byte_len)

    span_weights = None
    if "span_weights" in obj:
        raw_w = obj["span_weights"]
        if not isinstance(raw_w, list) or not all(isinstance(w, (int, float)) for w in raw_w):
            raise ParseError(line, "'span_weights' malformed")
        span_weights = tuple(float(w) for w in raw_w)

    return ResponseBundle(
        teacher_trace=teacher,
        student_trace=student,
        tracks=tuple(tracks),
        partition=partition,
        span_weights=span_weights,
    )


def parse_example_line(raw_line: str, line: int) -> PreferenceExample:
    """Parse and validate one ctpd/1 JSONL line; raises typed errors."""
    try:
        obj = json.loads(raw_line)
    except json.JSONDecodeError as exc:
        raise ParseError(line, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError(line, "line is not a JSON object")
    for key in ("prompt", "chosen", "rejected"):
        if key not in obj:
            raise ParseError(line, f"missing key '{key}'")
    if not isinstance(obj["prompt"], str):
        raise ParseError(line, "'prompt' is not a string")
    example = PreferenceExample(
        prompt=Utf8Doc.from_text(obj["prompt"]),
        chosen=_bundle_from_obj(obj["chosen"], line),
        rejected=_bundle_from_obj(obj["rejected"], line),
        line_no=line,
    )
    _raise_first(validate_example(example), line)
    return example


def load_examples(path: str | Path, schema_version: str = SCHEMA_VERSION) -> list[PreferenceExample]:
    """Load and validate a ctpd/1 JSONL file; blank lines are skipped."""
    if schema_version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {schema_version!r}")
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            examples.append(parse_example_line(raw, line_no))
    return examples


def _bundle_to_obj(bundle: ResponseBundle) -> dict[str, Any]:
    from .errors import TokenizerSideUnknown

    def _side(tokenizer_id: str) -> str:
        # Named toy tokenizers are normalized to their side label on export.
        if tokenizer_id == bundle.teacher_trace.tokenizer_id:
            return SIDE_TEACHER
        if tokenizer_id == bundle.student_trace.tokenizer_id:
            return SIDE_STUDENT
        raise TokenizerSideUnknown(tokenizer_id)

    obj: dict[str, Any] = {
        "text": bundle.text,
        "tokens": {
            SIDE_TEACHER: [list(t) for t in bundle.teacher_trace.tokens],
            SIDE_STUDENT: [list(t) for t in bundle.student_trace.tokens],
        },
        "logprobs": {
            t.role: {"tokenizer": _side(t.tokenizer_id), "values": list(t.values)}
            for t in bundle.tracks
        },
    }
    if bundle.partition is not None:
        obj["spans"] = [
            [sp.byte_start, sp.byte_end, list(sp.teacher_tokens), list(sp.student_tokens)]
            for sp in bundle.partition.spans
        ]
    if bundle.span_weights is not None:
        obj["span_weights"] = list(bundle.span_weights)
    return obj


def example_to_obj(example: PreferenceExample) -> dict[str, Any]:
    return {
        "prompt": example.prompt.text,
        "chosen": _bundle_to_obj(example.chosen),
        "rejected": _bundle_to_obj(example.rejected),
    }


def dumps_example(example: PreferenceExample) -> str:
    return json.dumps(example_to_obj(example), ensure_ascii=False, sort_keys=True)


def dump_examples(examples: Iterable[PreferenceExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(dumps_example(ex) + "\n")
