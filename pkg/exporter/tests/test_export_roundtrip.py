"""Export round-trip: every exported line must pass the primary toolkit's
validate-trace subcommand, byte offsets must tile each response exactly, and
reruns must be byte-identical (manifest timestamp aside).

The primary toolkit is used strictly through its external interfaces: the
ctpd/1 JSONL format and the `ctpd validate-trace` CLI.
"""

import json
import shutil
import subprocess
import sys

import pytest
from tokenizers import Tokenizer

from ctpd_exporter.job import ExportJob, RoleSpec, export, parse_role_arg


def _validate_with_primary_cli(path) -> subprocess.CompletedProcess:
    if shutil.which("ctpd"):
        cmd = ["ctpd", "validate-trace", "--in", str(path)]
    else:
        cmd = [sys.executable, "-m", "ctpd.cli", "validate-trace", "--in", str(path)]
    return subprocess.run(cmd, capture_output=True, text=True)


@pytest.fixture(scope="module")
def exported(workspace):
    out = workspace["root"] / "export" / "traces.jsonl"
    job = ExportJob(
        data=str(workspace["data"]),
        teacher_tokenizer=str(workspace["teacher_tokenizer"]),
        student_tokenizer=str(workspace["student_tokenizer"]),
        roles=(
            RoleSpec("policy", str(workspace["student_ckpt"]), "student"),
            RoleSpec("teacher_ref", str(workspace["teacher_ckpt"]), "teacher"),
        ),
        out=str(out),
        batch_size=8,
    )
    manifest = export(job)
    return {"job": job, "out": out, "manifest": manifest}


class TestRoundTrip:
    def test_every_line_passes_primary_validation(self, exported):
        result = _validate_with_primary_cli(exported["out"])
        rows = [json.loads(line) for line in result.stdout.splitlines()]
        assert len(rows) == 50
        invalid = [r for r in rows if not r["valid"]]
        assert result.returncode == 0 and not invalid, f"invalid lines: {invalid[:3]}"
        print(f"ACCEPTANCE exporter-round-trip: PASS (50/50 lines pass primary validate-trace)")

    def test_line_and_track_counts(self, exported, workspace):
        lines = [json.loads(x) for x in exported["out"].read_text().splitlines()]
        assert len(lines) == len(workspace["triples"])
        for obj in lines:
            for side in ("chosen", "rejected"):
                logprobs = obj[side]["logprobs"]
                assert set(logprobs) == {"policy", "teacher_ref"}
                assert logprobs["policy"]["tokenizer"] == "student"
                assert logprobs["teacher_ref"]["tokenizer"] == "teacher"
                for track in logprobs.values():
                    n_tokens = len(obj[side]["tokens"][track["tokenizer"]])
                    assert len(track["values"]) == n_tokens
                    assert all(v <= 0 for v in track["values"])

    def test_byte_offsets_tile_each_response(self, exported):
        lines = [json.loads(x) for x in exported["out"].read_text().splitlines()]
        for obj in lines:
            for side in ("chosen", "rejected"):
                raw = obj[side]["text"].encode("utf-8")
                for tokenizer in ("teacher", "student"):
                    pos = 0
                    for s, e in obj[side]["tokens"][tokenizer]:
                        assert s == pos and e > s
                        pos = e
                    assert pos == len(raw)

    def test_offset_fidelity_against_decoded_pieces(self, exported, workspace):
        """Each token's byte slice reproduces the tokenizer's decoded piece."""
        tok = Tokenizer.from_file(str(workspace["teacher_tokenizer"] / "tokenizer.json"))
        lines = [json.loads(x) for x in exported["out"].read_text().splitlines()]
        for obj in lines[:10]:
            text = obj["chosen"]["text"]
            enc = tok.encode(text, add_special_tokens=False)
            for (s, e), token_id in zip(obj["chosen"]["tokens"]["teacher"], enc.ids):
                piece = tok.decode([token_id])
                assert text.encode("utf-8")[s:e].decode("utf-8") == piece

    def test_manifest_contents(self, exported, workspace):
        manifest = exported["manifest"]
        assert manifest["counts"] == {"triples": 50, "lines_written": 50, "roles": 2}
        assert manifest["tokenizers"]["teacher"]["vocab_size"] > manifest["tokenizers"][
            "student"
        ]["vocab_size"]
        for side in ("teacher", "student"):
            assert len(manifest["tokenizers"][side]["sha256"]) == 64
        assert manifest["roles"]["policy"]["tokenizer_side"] == "student"
        with open(str(exported["out"]) + ".manifest.json", encoding="utf-8") as fh:
            on_disk = json.load(fh)
        assert on_disk["counts"] == manifest["counts"]

    def test_heterogeneous_tokenizations(self, exported):
        lines = [json.loads(x) for x in exported["out"].read_text().splitlines()]
        differing = sum(
            1
            for obj in lines
            for side in ("chosen", "rejected")
            if obj[side]["tokens"]["teacher"] != obj[side]["tokens"]["student"]
        )
        assert differing > 0

    def test_rerun_byte_identical_except_manifest_timestamp(self, exported, workspace):
        out2 = workspace["root"] / "export2" / "traces.jsonl"
        job2 = ExportJob(
            data=exported["job"].data,
            teacher_tokenizer=exported["job"].teacher_tokenizer,
            student_tokenizer=exported["job"].student_tokenizer,
            roles=exported["job"].roles,
            out=str(out2),
            batch_size=exported["job"].batch_size,
        )
        manifest2 = export(job2)
        assert out2.read_bytes() == exported["out"].read_bytes()
        m1 = dict(exported["manifest"])
        m2 = dict(manifest2)
        m1.pop("created_at")
        m2.pop("created_at")
        assert m1 == m2


class TestCli:
    def test_cli_end_to_end(self, workspace, tmp_path):
        from ctpd_exporter.cli import main

        out = tmp_path / "cli_traces.jsonl"
        rc = main(
            [
                "--data", str(workspace["data"]),
                "--teacher-tokenizer", str(workspace["teacher_tokenizer"]),
                "--student-tokenizer", str(workspace["student_tokenizer"]),
                "--role", f"policy={workspace['student_ckpt']}",
                "--role", f"teacher_ref={workspace['teacher_ckpt']}",
                "--out", str(out),
                "--batch-size", "8",
            ]
        )
        assert rc == 0
        result = _validate_with_primary_cli(out)
        assert result.returncode == 0

    def test_role_parsing(self):
        spec = parse_role_arg("policy=/x/ckpt")
        assert spec.side == "student"
        spec = parse_role_arg("negative=/y/ckpt")
        assert spec.side == "teacher"
        spec = parse_role_arg("probe=/z/ckpt@student")
        assert spec.role == "probe" and spec.side == "student"
        with pytest.raises(ValueError):
            parse_role_arg("probe=/z/ckpt")  # custom role needs a side
        with pytest.raises(ValueError):
            parse_role_arg("justapath")

    def test_missing_tokenizer_exit_one(self, workspace, tmp_path):
        from ctpd_exporter.cli import main

        rc = main(
            [
                "--data", str(workspace["data"]),
                "--teacher-tokenizer", str(tmp_path / "nope"),
                "--student-tokenizer", str(workspace["student_tokenizer"]),
                "--out", str(tmp_path / "o.jsonl"),
            ]
        )
        assert rc == 1
