"""Tabular order-m autoregressive models over toy-tokenizer pieces.

A model stores one logit row per observed context (tuple of the previous m
piece ids, BOS-padded); unseen contexts are implicit zero rows, i.e. uniform.
Everything is float64 and the log-softmax is exact, which is what makes the
finite-difference gradient checks meaningful.
"""

from __future__ import annotations

import math

import numpy as np

from .tokenizer import ToyTokenizer


class ToyLM:
    """Order-m softmax language model with an explicit logit table."""

    def __init__(self, tokenizer: ToyTokenizer, order: int = 2):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.tokenizer = tokenizer
        self.order = order
        self._rows: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return self.tokenizer.vocab_size

    @property
    def bos_id(self) -> int:
        # sentinel used only inside context tuples
        return self.tokenizer.vocab_size

    def clone(self) -> "ToyLM":
        out = ToyLM(self.tokenizer, self.order)
        out._rows = {ctx: row.copy() for ctx, row in self._rows.items()}
        return out

    def contexts(self) -> list[tuple[int, ...]]:
        return list(self._rows.keys())

    def logit_row(self, ctx: tuple[int, ...]) -> np.ndarray:
        """Stored row, or a fresh zero row for unseen contexts."""
        row = self._rows.get(ctx)
        return row.copy() if row is not None else np.zeros(self.vocab_size)

    def set_logit_row(self, ctx: tuple[int, ...], row: np.ndarray) -> None:
        if row.shape != (self.vocab_size,):
            raise ValueError(f"row shape {row.shape} != ({self.vocab_size},)")
        self._rows[ctx] = np.asarray(row, dtype=np.float64).copy()

    def log_prob_row(self, ctx: tuple[int, ...]) -> np.ndarray:
        row = self._rows.get(ctx)
        if row is None:
            return np.full(self.vocab_size, -math.log(self.vocab_size))
        shifted = row - row.max()
        return shifted - math.log(np.exp(shifted).sum())

    def context_stream(self, prompt_ids: list[int], response_ids: list[int]) -> list[tuple[int, ...]]:
        """Context tuple for every response position, crossing the prompt seam."""
        history = [self.bos_id] * self.order + list(prompt_ids) + list(response_ids)
        start = self.order + len(prompt_ids)
        return [
            tuple(history[start + t - self.order : start + t])
            for t in range(len(response_ids))
        ]

    def token_logprobs(self, prompt: str, response: str) -> np.ndarray:
        """Per-token log-probs of the response pieces given the prompt."""
        prompt_ids = self.tokenizer.encode(prompt)
        response_ids = self.tokenizer.encode(response)
        cache: dict[tuple[int, ...], np.ndarray] = {}
        out = np.empty(len(response_ids))
        for t, ctx in enumerate(self.context_stream(prompt_ids, response_ids)):
            lp = cache.get(ctx)
            if lp is None:
                lp = self.log_prob_row(ctx)
                cache[ctx] = lp
            out[t] = lp[response_ids[t]]
        return out

    def sequence_logprob(self, prompt: str, response: str) -> float:
        return float(self.token_logprobs(prompt, response).sum())

    def allclose(self, other: "ToyLM", atol: float = 0.0) -> bool:
        if self.tokenizer is not other.tokenizer and self.tokenizer != other.tokenizer:
            return False
        if self.order != other.order or set(self._rows) != set(other._rows):
            return False
        return all(
            np.allclose(row, other._rows[ctx], atol=atol, rtol=0.0)
            for ctx, row in self._rows.items()
        )
