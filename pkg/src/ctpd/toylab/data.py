"""Synthetic preference data over an 8-symbol alphabet.

Words are 3-letter runs over the cycle a..g: "good" words step forward
(abc, bcd, ...), "bad" words step backward (agf, bag, ...). Responses are
dot-terminated word sequences; chosen responses use good words, rejected use
bad ones, and span-level label noise splices bad words into a fraction of the
chosen responses. The teacher tokenizer merges whole words, the student
merges word-initial bigrams, so aligned partitions have one multi-token span
per word.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tokenizer import ToyTokenizer

LETTERS = "abcdefg"
SEPARATOR = "."
ALPHABET = LETTERS + SEPARATOR  # 8 symbols

GOOD_WORDS = tuple(
    LETTERS[i] + LETTERS[(i + 1) % 7] + LETTERS[(i + 2) % 7] for i in range(7)
)
BAD_WORDS = tuple(
    LETTERS[i] + LETTERS[(i - 1) % 7] + LETTERS[(i - 2) % 7] for i in range(7)
)


def standard_teacher_tokenizer() -> ToyTokenizer:
    """Whole words (good and bad) as single pieces."""
    merges = tuple(w.encode() for w in GOOD_WORDS + BAD_WORDS)
    return ToyTokenizer(merges=merges, tokenizer_id="toy-teacher")


def standard_student_tokenizer() -> ToyTokenizer:
    """Word-initial bigrams as pieces; every word becomes two tokens."""
    merges = tuple(w[:2].encode() for w in GOOD_WORDS + BAD_WORDS)
    return ToyTokenizer(merges=merges, tokenizer_id="toy-student")


def _render(words: list[str]) -> str:
    return "".join(w + SEPARATOR for w in words)


def _draw_words(rng: np.random.Generator, pool: tuple[str, ...], n: int) -> list[str]:
    return [pool[int(i)] for i in rng.integers(0, len(pool), size=n)]


def make_sft_corpus(
    n_sequences: int,
    good_bias: float,
    seed: int,
    min_words: int = 4,
    max_words: int = 12,
) -> list[str]:
    """Word-salad corpus with an exactly balanced word multiset.

    The good/bad split is exact (round(good_bias * total)) and words within
    each class appear in equal counts, so a bias of 0.5 yields a corpus with
    no marginal preference between the two grammars.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0)))
    lengths = [int(rng.integers(min_words, max_words + 1)) for _ in range(n_sequences)]
    total = sum(lengths)
    n_good = int(round(good_bias * total))
    pool = [GOOD_WORDS[i % 7] for i in range(n_good)]
    pool += [BAD_WORDS[i % 7] for i in range(total - n_good)]
    order = rng.permutation(total)
    shuffled = [pool[int(i)] for i in order]
    out = []
    start = 0
    for n in lengths:
        out.append(_render(shuffled[start : start + n]))
        start += n
    return out


@dataclass(frozen=True)
class ToyPreferenceSet:
    """Prompt/chosen/rejected triples with span-level noise bookkeeping."""

    prompts: tuple[str, ...]
    chosen: tuple[str, ...]
    rejected: tuple[str, ...]
    flip_fraction: float
    bad_span_rate: float
    seed: int
    # word indices replaced by bad words in each chosen response
    corrupted_words: tuple[tuple[int, ...], ...] = ()

    def __len__(self) -> int:
        return len(self.prompts)

    def __post_init__(self):
        if not (len(self.prompts) == len(self.chosen) == len(self.rejected)):
            raise ValueError("prompts/chosen/rejected lengths differ")


def generate_preference_set(
    n_pairs: int,
    seed: int,
    flip_fraction: float = 0.0,
    bad_span_rate: float = 0.0,
    min_words: int = 4,
    max_words: int = 12,
    rejected_bad_fraction: float = 0.4,
) -> ToyPreferenceSet:
    """Deterministic preference pairs; regeneration with one seed is byte-identical.

    Responses are 4*n_words bytes, so the default word range gives 16-48 byte
    responses. Both responses of a pair share one base sequence of good
    words, so their contexts overlap and the preference signal lives in the
    differing spans: the rejected response has round(rejected_bad_fraction *
    n_words) positions spliced over with corrupted-grammar words. With
    ``flip_fraction`` > 0, that fraction of chosen responses has
    ceil(bad_span_rate * n_words) of its own positions spliced with bad
    words; a splice rate above the rejected fraction makes such pairs
    genuinely mislabeled at the span level.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDA)))
    prompts, chosen, rejected, corrupted = [], [], [], []
    for _ in range(n_pairs):
        n_prompt = int(rng.integers(1, 3))
        prompts.append(_render(_draw_words(rng, GOOD_WORDS, n_prompt)))
        n = int(rng.integers(min_words, max_words + 1))
        base = _draw_words(rng, GOOD_WORDS, n)

        reject_words = list(base)
        n_rej_bad = min(n, int(round(rejected_bad_fraction * n)))
        rej_idx = rng.choice(n, size=n_rej_bad, replace=False)
        for i in sorted(int(j) for j in rej_idx):
            reject_words[i] = BAD_WORDS[int(rng.integers(0, 7))]
        rejected.append(_render(reject_words))

        good = list(base)
        hit: tuple[int, ...] = ()
        if flip_fraction > 0.0 and rng.random() < flip_fraction:
            n_bad = min(n, int(np.ceil(bad_span_rate * n)))
            idx = rng.choice(n, size=n_bad, replace=False)
            for i in sorted(int(j) for j in idx):
                good[i] = BAD_WORDS[int(rng.integers(0, 7))]
            hit = tuple(sorted(int(j) for j in idx))
        chosen.append(_render(good))
        corrupted.append(hit)
    return ToyPreferenceSet(
        prompts=tuple(prompts),
        chosen=tuple(chosen),
        rejected=tuple(rejected),
        flip_fraction=flip_fraction,
        bad_span_rate=bad_span_rate,
        seed=seed,
        corrupted_words=tuple(corrupted),
    )
