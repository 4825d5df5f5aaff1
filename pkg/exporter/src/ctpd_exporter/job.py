"""Export jobs: dataset triples -> ctpd/1 JSONL plus a manifest.

The exporter is a pure data bridge: it tokenizes with real tokenizers,
scores per-token log-probs under named checkpoints, and writes the trace
format. It computes no weights and no losses.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from tokenizers import Tokenizer

from .errors import ExporterError
from .offsets import token_byte_intervals
from .scoring import load_checkpoint, score_response_logprobs

# Roles with a conventional tokenizer side; anything else must name one.
DEFAULT_ROLE_SIDES = {
    "policy": "student",
    "teacher_ref": "teacher",
    "positive": "teacher",
    "negative": "teacher",
}


@dataclass(frozen=True)
class RoleSpec:
    role: str
    checkpoint: str
    side: str  # "teacher" | "student"

    def __post_init__(self):
        if self.side not in ("teacher", "student"):
            raise ValueError(f"role '{self.role}': side must be teacher or student")


@dataclass(frozen=True)
class ExportJob:
    data: str  # JSONL of {"prompt", "chosen", "rejected"} string triples
    teacher_tokenizer: str  # path to a tokenizer.json or a directory holding one
    student_tokenizer: str
    roles: tuple[RoleSpec, ...]
    out: str
    batch_size: int = 16
    manifest_out: str | None = None  # default: <out>.manifest.json

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        seen = set()
        for spec in self.roles:
            if spec.role in seen:
                raise ValueError(f"role '{spec.role}' given twice")
            seen.add(spec.role)


def parse_role_arg(arg: str) -> RoleSpec:
    """Parse 'role=checkpoint' or 'role=checkpoint@side'."""
    if "=" not in arg:
        raise ValueError(f"role spec {arg!r} is not of the form role=checkpoint")
    role, rest = arg.split("=", 1)
    role = role.strip()
    if "@" in rest:
        ckpt, side = rest.rsplit("@", 1)
    else:
        ckpt, side = rest, DEFAULT_ROLE_SIDES.get(role)
        if side is None:
            raise ValueError(
                f"role '{role}' has no default tokenizer side; use role=ckpt@teacher|student"
            )
    return RoleSpec(role=role, checkpoint=ckpt.strip(), side=side)


def _resolve_tokenizer_file(path: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / "tokenizer.json"
    if not p.is_file():
        raise ExporterError(f"no tokenizer file at {path}")
    return p


def _sha256_path(path: str) -> str:
    """Content hash of a file, or of every file in a directory tree."""
    h = hashlib.sha256()
    p = Path(path)
    files = [p] if p.is_file() else sorted(q for q in p.rglob("*") if q.is_file())
    for f in files:
        h.update(str(f.relative_to(p if p.is_dir() else p.parent)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _load_triples(path: str) -> list[dict]:
    triples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                triples.append(
                    {
                        "prompt": str(obj["prompt"]),
                        "chosen": str(obj["chosen"]),
                        "rejected": str(obj["rejected"]),
                    }
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ExporterError(f"{path}:{line_no}: bad triple ({exc})") from None
    return triples


def export(job: ExportJob) -> dict:
    """Run the job; returns the manifest (also written next to the output)."""
    triples = _load_triples(job.data)
    tokenizers = {
        "teacher": Tokenizer.from_file(str(_resolve_tokenizer_file(job.teacher_tokenizer))),
        "student": Tokenizer.from_file(str(_resolve_tokenizer_file(job.student_tokenizer))),
    }
    tokenizer_names = {"teacher": job.teacher_tokenizer, "student": job.student_tokenizer}

    # tokenize every response once per side; offsets and scores share these ids
    sides: dict[str, list[dict]] = {"teacher": [], "student": []}
    for side, tok in tokenizers.items():
        for t in triples:
            entry = {}
            for key in ("chosen", "rejected"):
                ids, intervals = token_byte_intervals(tok, tokenizer_names[side], t[key])
                entry[key] = {"ids": ids, "intervals": intervals}
            entry["prompt_ids"] = tok.encode(t["prompt"], add_special_tokens=False).ids
            sides[side].append(entry)

    # score each role's checkpoint over its side's tokenization
    scores: dict[str, dict[str, list[list[float]]]] = {}
    for spec in job.roles:
        model = load_checkpoint(spec.checkpoint)
        per_key = {}
        for key in ("chosen", "rejected"):
            prompts = [entry["prompt_ids"] for entry in sides[spec.side]]
            responses = [entry[key]["ids"] for entry in sides[spec.side]]
            per_key[key] = score_response_logprobs(
                model, spec.role, prompts, responses, batch_size=job.batch_size
            )
        scores[spec.role] = per_key
        del model

    lines = []
    for i, t in enumerate(triples):
        obj = {"prompt": t["prompt"]}
        for key in ("chosen", "rejected"):
            obj[key] = {
                "text": t[key],
                "tokens": {
                    "teacher": [list(iv) for iv in sides["teacher"][i][key]["intervals"]],
                    "student": [list(iv) for iv in sides["student"][i][key]["intervals"]],
                },
                "logprobs": {
                    spec.role: {
                        "tokenizer": spec.side,
                        "values": scores[spec.role][key][i],
                    }
                    for spec in job.roles
                },
            }
        lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))

    out_path = Path(job.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    manifest = {
        "schema": "ctpd/1",
        "counts": {"triples": len(triples), "lines_written": len(lines), "roles": len(job.roles)},
        "tokenizers": {
            side: {
                "path": tokenizer_names[side],
                "sha256": _sha256_path(str(_resolve_tokenizer_file(tokenizer_names[side]))),
                "vocab_size": tokenizers[side].get_vocab_size(),
            }
            for side in ("teacher", "student")
        },
        "roles": {
            spec.role: {
                "checkpoint": spec.checkpoint,
                "sha256": _sha256_path(spec.checkpoint),
                "tokenizer_side": spec.side,
            }
            for spec in job.roles
        },
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    manifest_path = Path(job.manifest_out or (str(out_path) + ".manifest.json"))
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
