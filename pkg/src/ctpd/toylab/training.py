"""Exact-gradient training for toy models: MLE, contrastive preference pairs,
and weighted cross-tokenizer preference distillation.

Training is full-batch gradient descent. Internally each run compiles its
dataset into flat position arrays (context row, target piece, example id,
signed weight), so one step costs a single row-wise softmax over the touched
contexts plus scatter-adds; gradients are exact, which the finite-difference
tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..align import partition_aligned_spans
from ..errors import LengthMismatch
from ..numerics import sigmoid_np, softplus_np
from ..objective import ObjectiveConfig
from ..trace import (
    ROLE_NEGATIVE,
    ROLE_POSITIVE,
    ROLE_STUDENT_REF,
    ROLE_TEACHER_REF,
    LogProbTrack,
    PreferenceExample,
    ResponseBundle,
    Utf8Doc,
    WeightConfig,
)
from ..weighting import compute_span_weights
from .data import ToyPreferenceSet
from .model import ToyLM
from .tokenizer import ToyTokenizer, toy_tokenize


class _Registry:
    """Stable indexing of context tuples; rows gather/scatter to a model."""

    def __init__(self):
        self.index: dict[tuple[int, ...], int] = {}
        self.contexts: list[tuple[int, ...]] = []

    def row_of(self, ctx: tuple[int, ...]) -> int:
        i = self.index.get(ctx)
        if i is None:
            i = len(self.contexts)
            self.index[ctx] = i
            self.contexts.append(ctx)
        return i

    def gather(self, model: ToyLM) -> np.ndarray:
        rows = np.zeros((len(self.contexts), model.vocab_size))
        for i, ctx in enumerate(self.contexts):
            stored = model._rows.get(ctx)
            if stored is not None:
                rows[i] = stored
        return rows

    def write_back(self, model: ToyLM, rows: np.ndarray) -> None:
        for i, ctx in enumerate(self.contexts):
            model._rows[ctx] = rows[i].copy()


def _log_softmax(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(log-probs, probs) for a matrix of logit rows."""
    m = rows.max(axis=1, keepdims=True)
    ex = np.exp(rows - m)
    z = ex.sum(axis=1, keepdims=True)
    return (rows - m) - np.log(z), ex / z


def score_token_logprobs(model: ToyLM, pairs: list[tuple[str, str]]) -> list[np.ndarray]:
    """Per-token response log-probs for many (prompt, response) pairs at once."""
    reg = _Registry()
    compiled = []
    for prompt, response in pairs:
        p_ids = model.tokenizer.encode(prompt)
        r_ids = model.tokenizer.encode(response)
        ctx_rows = np.array(
            [reg.row_of(c) for c in model.context_stream(p_ids, r_ids)], dtype=np.int64
        )
        compiled.append((ctx_rows, np.array(r_ids, dtype=np.int64)))
    logp, _ = _log_softmax(reg.gather(model))
    return [logp[rows, ids] for rows, ids in compiled]


# ---------------------------------------------------------------------------
# Maximum likelihood (the SFT stage)
# ---------------------------------------------------------------------------


def train_mle(
    model: ToyLM,
    corpus: list[str],
    lr: float,
    steps: int,
    seed: int = 0,
    curve_out: list[float] | None = None,
) -> ToyLM:
    """Full-batch gradient descent on mean per-token negative log-likelihood.

    Deterministic; the seed is accepted for interface stability but the
    full-batch objective does not consume randomness.
    """
    del seed
    out = model.clone()
    if steps == 0 or not corpus:
        return out
    reg = _Registry()
    ctx_rows: list[int] = []
    toks: list[int] = []
    for seq in corpus:
        ids = model.tokenizer.encode(seq)
        for ctx, tok in zip(model.context_stream([], ids), ids):
            ctx_rows.append(reg.row_of(ctx))
            toks.append(tok)
    ctx_arr = np.array(ctx_rows, dtype=np.int64)
    tok_arr = np.array(toks, dtype=np.int64)
    total = len(toks)

    counts = np.zeros((len(reg.contexts), model.vocab_size))
    np.add.at(counts, (ctx_arr, tok_arr), 1.0)
    row_totals = counts.sum(axis=1)

    rows = reg.gather(out)
    for _ in range(steps):
        logp, probs = _log_softmax(rows)
        loss = float(-(counts * logp).sum() / total)
        if curve_out is not None:
            curve_out.append(loss)
        grad = (row_totals[:, None] * probs - counts) / total
        rows -= lr * grad
    if curve_out is not None:
        logp, _ = _log_softmax(rows)
        curve_out.append(float(-(counts * logp).sum() / total))
    reg.write_back(out, rows)
    return out


# ---------------------------------------------------------------------------
# Preference training engine
# ---------------------------------------------------------------------------


@dataclass
class _Side:
    """Flat position arrays for one side (winner or loser) of every example."""

    ctx: np.ndarray  # (P,) row index per scored position
    tok: np.ndarray  # (P,) target piece id
    ex: np.ndarray  # (P,) example index
    weight: np.ndarray  # (P,) positive per-token weight


@dataclass
class PrefTask:
    """Compiled preference dataset for one policy model.

    Winner and loser sides stay in separate arrays so that structurally
    identical sides cancel bitwise (margin and gradient exactly zero).
    """

    registry: _Registry
    winner: _Side
    loser: _Side
    const: np.ndarray  # (E,) reference contribution to each example's margin
    n_examples: int


def pref_loss_and_grad(
    rows: np.ndarray, task: PrefTask, beta: float
) -> tuple[float, np.ndarray]:
    """Mean loss over examples and its exact gradient w.r.t. the logit rows."""
    logp, probs = _log_softmax(rows)
    w, l = task.winner, task.loser
    reward_w = np.bincount(w.ex, weights=w.weight * logp[w.ctx, w.tok], minlength=task.n_examples)
    reward_l = np.bincount(l.ex, weights=l.weight * logp[l.ctx, l.tok], minlength=task.n_examples)
    margin = beta * (reward_w - reward_l - task.const)
    loss = float(np.mean(softplus_np(-margin)))
    g = sigmoid_np(-margin)
    # dL/dlp is -a on winner tokens and +a on loser tokens, a = beta*g*weight/E
    a_w = (beta / task.n_examples) * g[w.ex] * w.weight
    a_l = (beta / task.n_examples) * g[l.ex] * l.weight
    scat_w = np.zeros_like(rows)
    np.add.at(scat_w, (w.ctx, w.tok), a_w)
    scat_l = np.zeros_like(rows)
    np.add.at(scat_l, (l.ctx, l.tok), a_l)
    row_w = np.bincount(w.ctx, weights=a_w, minlength=rows.shape[0])
    row_l = np.bincount(l.ctx, weights=a_l, minlength=rows.shape[0])
    grad = (scat_l - scat_w) - (row_l - row_w)[:, None] * probs
    return loss, grad


def _descend(
    model: ToyLM,
    task: PrefTask,
    beta: float,
    lr: float,
    steps: int,
    curve_out: list[float] | None,
) -> ToyLM:
    out = model.clone()
    if steps == 0:
        return out
    rows = task.registry.gather(out)
    for _ in range(steps):
        loss, grad = pref_loss_and_grad(rows, task, beta)
        if curve_out is not None:
            curve_out.append(loss)
        rows -= lr * grad
    if curve_out is not None:
        curve_out.append(pref_loss_and_grad(rows, task, beta)[0])
    task.registry.write_back(out, rows)
    return out


def build_pref_task(
    policy: ToyLM,
    entries: list[tuple[str, str, str, np.ndarray, np.ndarray, float]],
) -> PrefTask:
    """Compile (prompt, winner, loser, winner token weights, loser token
    weights, reference constant) entries against the policy's tokenizer."""
    reg = _Registry()
    acc: dict[str, dict[str, list]] = {
        side: {"ctx": [], "tok": [], "ex": [], "weight": []} for side in ("w", "l")
    }
    const = np.zeros(len(entries))
    for e, (prompt, winner, loser, w_weights, l_weights, ref_const) in enumerate(entries):
        p_ids = policy.tokenizer.encode(prompt)
        for side, text, weights in (("w", winner, w_weights), ("l", loser, l_weights)):
            ids = policy.tokenizer.encode(text)
            if len(weights) != len(ids):
                raise LengthMismatch(
                    f"example {e}: {len(weights)} token weights for {len(ids)} tokens"
                )
            bucket = acc[side]
            for ctx, tok, w in zip(policy.context_stream(p_ids, ids), ids, weights):
                bucket["ctx"].append(reg.row_of(ctx))
                bucket["tok"].append(tok)
                bucket["ex"].append(e)
                bucket["weight"].append(float(w))
        const[e] = ref_const

    def _side(bucket: dict[str, list]) -> _Side:
        return _Side(
            ctx=np.array(bucket["ctx"], dtype=np.int64),
            tok=np.array(bucket["tok"], dtype=np.int64),
            ex=np.array(bucket["ex"], dtype=np.int64),
            weight=np.array(bucket["weight"]),
        )

    return PrefTask(
        registry=reg,
        winner=_side(acc["w"]),
        loser=_side(acc["l"]),
        const=const,
        n_examples=len(entries),
    )


def train_dpo_pair(
    teacher: ToyLM,
    prefs: ToyPreferenceSet,
    beta: float,
    lr: float,
    steps: int,
    reverse: bool = False,
    curve_out: list[float] | None = None,
) -> ToyLM:
    """DPO-train the teacher against its own frozen copy as reference.

    reverse=False yields the positive model (chosen preferred); reverse=True
    swaps the labels and yields the negative model.
    """
    winners, losers = (prefs.rejected, prefs.chosen) if reverse else (prefs.chosen, prefs.rejected)
    ref_w = score_token_logprobs(teacher, list(zip(prefs.prompts, winners)))
    ref_l = score_token_logprobs(teacher, list(zip(prefs.prompts, losers)))
    entries = []
    for i in range(len(prefs)):
        w_n = len(ref_w[i])
        l_n = len(ref_l[i])
        const = float(ref_w[i].sum() - ref_l[i].sum())
        entries.append(
            (prefs.prompts[i], winners[i], losers[i], np.ones(w_n), np.ones(l_n), const)
        )
    task = build_pref_task(teacher, entries)
    return _descend(teacher, task, beta, lr, steps, curve_out)


# ---------------------------------------------------------------------------
# Weight precomputation and the distillation objective
# ---------------------------------------------------------------------------


def _bundle_for(
    prompt: str,
    text: str,
    teacher_tok: ToyTokenizer,
    student_tok: ToyTokenizer,
    tracks: tuple[LogProbTrack, ...],
) -> ResponseBundle:
    teacher_trace = toy_tokenize(teacher_tok, text)
    student_trace = toy_tokenize(student_tok, text)
    partition = partition_aligned_spans(teacher_trace, student_trace)
    return ResponseBundle(
        teacher_trace=teacher_trace,
        student_trace=student_trace,
        tracks=tracks,
        partition=partition,
    )


def _model_track(model: ToyLM, role: str, prompt: str, text: str) -> LogProbTrack:
    values = score_token_logprobs(model, [(prompt, text)])[0]
    return LogProbTrack(
        role=role,
        tokenizer_id=model.tokenizer.tokenizer_id,
        values=tuple(float(v) for v in values),
    )


def precompute_weights(
    prefs: ToyPreferenceSet,
    pos: ToyLM,
    neg: ToyLM,
    cfg: WeightConfig,
    teacher_tokenizer: ToyTokenizer,
    student_tokenizer: ToyTokenizer,
    seed: int | None = None,
) -> list[PreferenceExample]:
    """Attach aligned partitions, contrastive tracks, and span weights to every
    example, ready for serialization or distillation training."""
    out = []
    cache_pos = score_token_logprobs(
        pos, [(p, t) for p, t in zip(prefs.prompts, prefs.chosen)]
    ) + score_token_logprobs(pos, [(p, t) for p, t in zip(prefs.prompts, prefs.rejected)])
    cache_neg = score_token_logprobs(
        neg, [(p, t) for p, t in zip(prefs.prompts, prefs.chosen)]
    ) + score_token_logprobs(neg, [(p, t) for p, t in zip(prefs.prompts, prefs.rejected)])
    n = len(prefs)
    for i in range(n):
        bundles = {}
        for side, text, offset in (("chosen", prefs.chosen[i], 0), ("rejected", prefs.rejected[i], n)):
            tracks = (
                LogProbTrack(
                    ROLE_POSITIVE,
                    pos.tokenizer.tokenizer_id,
                    tuple(float(v) for v in cache_pos[i + offset]),
                ),
                LogProbTrack(
                    ROLE_NEGATIVE,
                    neg.tokenizer.tokenizer_id,
                    tuple(float(v) for v in cache_neg[i + offset]),
                ),
            )
            bundle = _bundle_for(prefs.prompts[i], text, teacher_tokenizer, student_tokenizer, tracks)
            polarity = "winner" if side == "chosen" else "loser"
            weights = compute_span_weights(
                bundle, cfg, polarity, seed=seed, example_key=(i,)
            )
            bundles[side] = bundle.with_partition(bundle.partition, weights.values)
        out.append(
            PreferenceExample(
                prompt=Utf8Doc.from_text(prefs.prompts[i]),
                chosen=bundles["chosen"],
                rejected=bundles["rejected"],
                line_no=i + 1,
            )
        )
    return out


def build_ctpd_task(
    student: ToyLM,
    ref_model: ToyLM,
    examples: list[PreferenceExample],
    cfg: ObjectiveConfig,
) -> PrefTask:
    """Compile precomputed examples into a student-side training task.

    The reference contribution of each example is a constant: the reference
    model is frozen, so only its weighted span log-probs enter the margin.
    """
    ref_on_teacher = cfg.reference_role == ROLE_TEACHER_REF
    entries = []
    ref_pairs = []
    for ex in examples:
        for bundle in (ex.chosen, ex.rejected):
            ref_pairs.append((ex.prompt.text, bundle.text))
    ref_lps = score_token_logprobs(ref_model, ref_pairs)
    for i, ex in enumerate(examples):
        tok_weights = {}
        ref_consts = {}
        for j, (side, bundle) in enumerate((("chosen", ex.chosen), ("rejected", ex.rejected))):
            if bundle.partition is None or bundle.span_weights is None:
                raise ValueError(f"example {i} {side}: weights not precomputed")
            spans = np.asarray(bundle.span_weights)
            student_idx = np.array(bundle.partition.student_span_index(), dtype=np.int64)
            tok_weights[side] = spans[student_idx] if len(student_idx) else np.zeros(0)
            ref_idx_list = (
                bundle.partition.teacher_span_index()
                if ref_on_teacher
                else bundle.partition.student_span_index()
            )
            ref_idx = np.array(ref_idx_list, dtype=np.int64)
            lps = ref_lps[2 * i + j]
            if len(lps) != len(ref_idx):
                raise LengthMismatch(
                    f"example {i} {side}: reference scored {len(lps)} tokens "
                    f"but the partition covers {len(ref_idx)}"
                )
            ref_consts[side] = float((spans[ref_idx] * lps).sum()) if len(ref_idx) else 0.0
        entries.append(
            (
                ex.prompt.text,
                ex.chosen.text,
                ex.rejected.text,
                tok_weights["chosen"],
                tok_weights["rejected"],
                ref_consts["chosen"] - ref_consts["rejected"],
            )
        )
    return build_pref_task(student, entries)


def train_ctpd(
    student: ToyLM,
    ref_model: ToyLM,
    examples: list[PreferenceExample],
    cfg: ObjectiveConfig,
    lr: float,
    steps: int,
    seed: int = 0,
    curve_out: list[float] | None = None,
) -> ToyLM:
    """Distillation training of the student against a frozen reference.

    With reference_role=teacher_ref the reference scores teacher-side tokens
    of each aligned span; with student_ref it scores student-side tokens.
    Deterministic given the inputs; the seed is interface-stable padding.
    """
    del seed
    expected = (
        ROLE_TEACHER_REF if cfg.reference_role == ROLE_TEACHER_REF else ROLE_STUDENT_REF
    )
    if cfg.reference_role == ROLE_TEACHER_REF:
        if ref_model.tokenizer.tokenizer_id == student.tokenizer.tokenizer_id:
            raise ValueError(
                f"{expected} requires a teacher-tokenizer reference, got the student's"
            )
    elif ref_model.tokenizer.tokenizer_id != student.tokenizer.tokenizer_id:
        raise ValueError(f"{expected} requires a student-tokenizer reference")
    task = build_ctpd_task(student, ref_model, examples, cfg)
    return _descend(student, task, cfg.beta, lr, steps, curve_out)


def train_dpo_student(
    student: ToyLM,
    prefs: ToyPreferenceSet,
    beta: float,
    lr: float,
    steps: int,
    curve_out: list[float] | None = None,
) -> ToyLM:
    """Plain DPO baseline: unit weights, frozen initial student as reference."""
    return train_dpo_pair(student, prefs, beta, lr, steps, reverse=False, curve_out=curve_out)


def token_contrastive_weights(
    prefs: ToyPreferenceSet, pos: ToyLM, neg: ToyLM, cfg: WeightConfig
) -> list[dict[str, np.ndarray]]:
    """Per-token (not per-span) contrastive weights on the pos/neg tokenizer."""
    pairs_c = [(p, t) for p, t in zip(prefs.prompts, prefs.chosen)]
    pairs_r = [(p, t) for p, t in zip(prefs.prompts, prefs.rejected)]
    pos_c, pos_r = score_token_logprobs(pos, pairs_c), score_token_logprobs(pos, pairs_r)
    neg_c, neg_r = score_token_logprobs(neg, pairs_c), score_token_logprobs(neg, pairs_r)
    out = []
    for i in range(len(prefs)):
        ratio_c = np.clip(pos_c[i] - neg_c[i], cfg.clamp_lo, cfg.clamp_hi)
        ratio_r = np.clip(pos_r[i] - neg_r[i], cfg.clamp_lo, cfg.clamp_hi)
        out.append(
            {
                "chosen": cfg.k * np.exp(cfg.mu_pos * ratio_c),
                "rejected": cfg.k * np.exp(cfg.mu_neg * ratio_r),
            }
        )
    return out


def train_tis_dpo(
    student: ToyLM,
    prefs: ToyPreferenceSet,
    token_weights: list[dict[str, np.ndarray]],
    beta: float,
    lr: float,
    steps: int,
    curve_out: list[float] | None = None,
) -> ToyLM:
    """Single-tokenizer weighted baseline: per-token weights, student reference."""
    ref_w = score_token_logprobs(student, list(zip(prefs.prompts, prefs.chosen)))
    ref_l = score_token_logprobs(student, list(zip(prefs.prompts, prefs.rejected)))
    entries = []
    for i in range(len(prefs)):
        w_wt = token_weights[i]["chosen"]
        l_wt = token_weights[i]["rejected"]
        const = float((w_wt * ref_w[i]).sum() - (l_wt * ref_l[i]).sum())
        entries.append((prefs.prompts[i], prefs.chosen[i], prefs.rejected[i], w_wt, l_wt, const))
    task = build_pref_task(student, entries)
    return _descend(student, task, beta, lr, steps, curve_out)


def eval_preference_accuracy(model: ToyLM, prefs: ToyPreferenceSet) -> float:
    """Fraction of pairs scoring chosen above rejected; ties count 0.5."""
    if len(prefs) == 0:
        return 0.0
    lp_c = score_token_logprobs(model, list(zip(prefs.prompts, prefs.chosen)))
    lp_r = score_token_logprobs(model, list(zip(prefs.prompts, prefs.rejected)))
    score = 0.0
    for c, r in zip(lp_c, lp_r):
        sc, sr = float(c.sum()), float(r.sum())
        score += 1.0 if sc > sr else 0.5 if sc == sr else 0.0
    return score / len(prefs)
