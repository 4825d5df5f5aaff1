"""Per-token log-prob scoring of response regions under causal checkpoints.

The scored ids are prompt ids followed by the response ids produced by the
standalone response tokenization (the same tokenization that defines the
exported byte offsets), so scores and offsets always describe the same
tokens. A BOS id is prepended when the prompt tokenizes to nothing so every
response token has a predecessor position.
"""

from __future__ import annotations

import torch
from transformers import AutoModelForCausalLM

from .errors import ScoreShapeMismatch


def load_checkpoint(path: str) -> AutoModelForCausalLM:
    model = AutoModelForCausalLM.from_pretrained(path)
    model.eval()
    return model


@torch.no_grad()
def score_response_logprobs(
    model,
    role: str,
    prompt_ids_list: list[list[int]],
    response_ids_list: list[list[int]],
    batch_size: int = 16,
    bos_id: int = 0,
) -> list[list[float]]:
    """Log-probs of each response token given prompt + preceding response tokens."""
    out: list[list[float]] = []
    for start in range(0, len(prompt_ids_list), batch_size):
        chunk_p = prompt_ids_list[start : start + batch_size]
        chunk_r = response_ids_list[start : start + batch_size]
        seqs = []
        for p_ids, r_ids in zip(chunk_p, chunk_r):
            context = p_ids if p_ids else [bos_id]
            seqs.append((context, r_ids))
        max_len = max(len(c) + len(r) for c, r in seqs)
        ids = torch.zeros((len(seqs), max_len), dtype=torch.long)
        mask = torch.zeros((len(seqs), max_len), dtype=torch.long)
        for i, (c, r) in enumerate(seqs):
            full = c + r
            ids[i, : len(full)] = torch.tensor(full, dtype=torch.long)
            mask[i, : len(full)] = 1
        logits = model(input_ids=ids, attention_mask=mask).logits
        logprobs = torch.log_softmax(logits.double(), dim=-1)
        for i, (c, r) in enumerate(seqs):
            if not r:
                out.append([])
                continue
            first = len(c)
            positions = torch.arange(first - 1, first - 1 + len(r))
            targets = torch.tensor(r, dtype=torch.long)
            vals = logprobs[i, positions, targets]
            scores = [min(float(v), 0.0) for v in vals]
            if len(scores) != len(r):
                raise ScoreShapeMismatch(role, len(r), len(scores))
            out.append(scores)
    return out
