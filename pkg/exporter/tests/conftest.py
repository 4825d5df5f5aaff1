"""Session fixtures: a 50-triple dataset, two locally trained byte-level BPE
tokenizers with different merge tables, and two tiny random-weight causal
checkpoints. Everything is built offline and deterministically."""

from __future__ import annotations

import json
import random

import pytest
import torch
from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers
from transformers import GPT2Config, GPT2LMHeadModel

WORDS = (
    "the quick brown fox jumps over a lazy dog while pack rats haul five dozen "
    "liquor jugs past sphinx statues of black quartz and vexing zebras judge "
    "my vow with daft grace under bright winter skies near quiet harbor towns"
).split()


def _sentence(rng: random.Random, n: int) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(n))


def _train_tokenizer(corpus: list[str], vocab_size: int) -> Tokenizer:
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=vocab_size,
        special_tokens=["<bos>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator(corpus, trainer)
    return tok


def _tiny_checkpoint(path, vocab_size: int, seed: int) -> None:
    torch.manual_seed(seed)
    cfg = GPT2Config(
        vocab_size=vocab_size,
        n_positions=256,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=0,
        eos_token_id=0,
    )
    model = GPT2LMHeadModel(cfg)
    model.save_pretrained(path)


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("export-workspace")
    rng = random.Random(1234)

    corpus = [_sentence(rng, rng.randint(6, 14)) for _ in range(400)]
    teacher_tok = _train_tokenizer(corpus, vocab_size=380)
    student_tok = _train_tokenizer(corpus[::2], vocab_size=300)
    teacher_dir = root / "teacher_tok"
    student_dir = root / "student_tok"
    teacher_dir.mkdir()
    student_dir.mkdir()
    teacher_tok.save(str(teacher_dir / "tokenizer.json"))
    student_tok.save(str(student_dir / "tokenizer.json"))

    teacher_ckpt = root / "teacher_ckpt"
    student_ckpt = root / "student_ckpt"
    _tiny_checkpoint(teacher_ckpt, teacher_tok.get_vocab_size(), seed=7)
    _tiny_checkpoint(student_ckpt, student_tok.get_vocab_size(), seed=8)

    triples = []
    for _ in range(50):
        triples.append(
            {
                "prompt": _sentence(rng, rng.randint(2, 5)),
                "chosen": _sentence(rng, rng.randint(4, 10)),
                "rejected": _sentence(rng, rng.randint(4, 10)),
            }
        )
    data = root / "triples.jsonl"
    data.write_text("".join(json.dumps(t) + "\n" for t in triples), encoding="utf-8")

    return {
        "root": root,
        "data": data,
        "teacher_tokenizer": teacher_dir,
        "student_tokenizer": student_dir,
        "teacher_ckpt": teacher_ckpt,
        "student_ckpt": student_ckpt,
        "triples": triples,
    }
