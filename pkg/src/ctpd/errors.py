"""Exception types shared across the toolkit.

Data problems discovered while loading or combining traces raise these;
diagnostics produced by ``validate_example`` are plain data instead.
"""

from __future__ import annotations


class CtpdError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CtpdError):
    """A JSONL line could not be parsed or is missing required fields."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TilingViolation(CtpdError):
    """Token intervals fail to tile the text exactly (gap, overlap, or bad boundary)."""

    def __init__(self, tokenizer_id: str, byte_index: int, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}tokenizer '{tokenizer_id}' at byte {byte_index}: {message}")
        self.tokenizer_id = tokenizer_id
        self.byte_index = byte_index
        self.line = line


class TextMismatch(CtpdError):
    """Teacher and student traces of one response disagree on the text."""

    def __init__(self, message: str = "teacher and student trace texts differ", line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class TrackLengthMismatch(CtpdError):
    """A log-prob track's length does not match its trace's token count."""

    def __init__(self, role: str, expected: int, got: int, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}track '{role}': expected {expected} values, got {got}")
        self.role = role
        self.line = line


class InvalidLogProb(CtpdError):
    """A log-prob value is positive or non-finite."""

    def __init__(self, role: str, index: int, value: float, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}track '{role}' value [{index}] = {value!r} is not a log-probability")
        self.role = role
        self.index = index


class MissingTrack(CtpdError):
    """A required log-prob track (role, possibly side-constrained) is absent."""

    def __init__(self, role: str, detail: str = ""):
        extra = f" ({detail})" if detail else ""
        super().__init__(f"missing log-prob track for role '{role}'{extra}")
        self.role = role


class TokenizerSideUnknown(CtpdError):
    """A track's tokenizer id matches neither side of the partition."""

    def __init__(self, tokenizer_id: str):
        super().__init__(f"tokenizer id '{tokenizer_id}' matches neither teacher nor student side")
        self.tokenizer_id = tokenizer_id


class LengthMismatch(CtpdError):
    """Paired sequences (weights vs spans, ratios vs weights) differ in length."""


class SeedRequired(CtpdError):
    """A randomized operation was invoked without an explicit seed."""


class TargetOutsideSupport(CtpdError):
    """The requested expected reward lies outside the open reward range."""


class DegenerateRewards(CtpdError):
    """All rewards equal while a different target expectation was requested."""


class SpecInvalid(CtpdError):
    """An experiment spec file is malformed or inconsistent."""
