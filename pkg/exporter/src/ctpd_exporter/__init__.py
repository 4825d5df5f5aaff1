"""Bridge from real tokenizers and causal-LM checkpoints to ctpd/1 JSONL."""

from .errors import ExporterError, OffsetUnavailable, ScoreShapeMismatch
from .job import ExportJob, RoleSpec, export, parse_role_arg
from .offsets import char_to_byte_offsets, token_byte_intervals

__all__ = [
    "ExporterError",
    "OffsetUnavailable",
    "ScoreShapeMismatch",
    "ExportJob",
    "RoleSpec",
    "export",
    "parse_role_arg",
    "char_to_byte_offsets",
    "token_byte_intervals",
]
