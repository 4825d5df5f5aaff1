"""Exporter error types."""


class ExporterError(Exception):
    """Base class for exporter failures."""


class OffsetUnavailable(ExporterError):
    """The tokenizer cannot produce an exact byte tiling for a text."""

    def __init__(self, tokenizer_name: str, text: str, detail: str):
        preview = text if len(text) <= 40 else text[:37] + "..."
        super().__init__(
            f"tokenizer '{tokenizer_name}' cannot tile {preview!r} in bytes: {detail}"
        )
        self.tokenizer_name = tokenizer_name


class ScoreShapeMismatch(ExporterError):
    """A checkpoint returned per-token scores of the wrong length."""

    def __init__(self, role: str, expected: int, got: int):
        super().__init__(f"role '{role}': scored {got} tokens, trace has {expected}")
        self.role = role
