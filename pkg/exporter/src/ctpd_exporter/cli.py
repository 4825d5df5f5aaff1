"""Command-line export tool: real tokenizers + checkpoints -> ctpd/1 JSONL."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ExporterError
from .job import ExportJob, export, parse_role_arg

log = logging.getLogger("ctpd-export")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctpd-export",
        description="Tokenize prompt/chosen/rejected triples with real teacher and "
        "student tokenizers, score per-token log-probs under named checkpoints, "
        "and write ctpd/1 JSONL plus a manifest.",
    )
    parser.add_argument("--data", required=True, help="JSONL of prompt/chosen/rejected triples")
    parser.add_argument("--teacher-tokenizer", required=True,
                        help="tokenizer.json (or directory) for the teacher side")
    parser.add_argument("--student-tokenizer", required=True,
                        help="tokenizer.json (or directory) for the student side")
    parser.add_argument("--role", action="append", default=[], metavar="ROLE=CKPT[@SIDE]",
                        help="role to score, e.g. policy=./student_ckpt (repeatable); "
                             "sides default to student for policy, teacher otherwise")
    parser.add_argument("--out", required=True, help="output JSONL path")
    parser.add_argument("--manifest-out", default=None,
                        help="manifest path (default: <out>.manifest.json)")
    parser.add_argument("--batch-size", type=int, default=16, help="scoring batch size")
    parser.add_argument("--log-level", default="WARNING", help="log level")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING),
                        stream=sys.stderr)
    try:
        roles = tuple(parse_role_arg(r) for r in args.role)
        job = ExportJob(
            data=args.data,
            teacher_tokenizer=args.teacher_tokenizer,
            student_tokenizer=args.student_tokenizer,
            roles=roles,
            out=args.out,
            batch_size=args.batch_size,
            manifest_out=args.manifest_out,
        )
        manifest = export(job)
    except (ExporterError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    log.info("wrote %d lines to %s", manifest["counts"]["lines_written"], args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
