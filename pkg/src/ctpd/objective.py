"""Preference losses over span signals and their exact analytic gradients.

The weighted sequence reward is r = sum_i w_i * (policy_lp_i - ref_lp_i) over
aligned spans; the loss is -log sigma(beta * (r_w - r_l)), evaluated as a
stable softplus. beta multiplies the reward difference exactly once, inside
the sigmoid. Gradients are taken with respect to the policy's per-token
log-probs; reference tracks receive zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import LengthMismatch
from .numerics import sigmoid, softplus
from .signals import SpanSignal, build_span_signals
from .trace import ROLE_POLICY, ROLE_TEACHER_REF, PreferenceExample
from .weighting import SpanWeights

LOSS_KINDS = ("dpo", "tis_dpo_token", "ctpd")
REFERENCE_ROLES = (ROLE_TEACHER_REF, "student_ref")


@dataclass(frozen=True)
class ObjectiveConfig:
    beta: float = 0.1
    loss_kind: str = "ctpd"
    reference_role: str = ROLE_TEACHER_REF

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


@dataclass(frozen=True)
class LossOutput:
    loss: float
    margin: float
    reward_w: float
    reward_l: float
    grad_policy_tokens_w: tuple[float, ...] | None = None
    grad_policy_tokens_l: tuple[float, ...] | None = None


def _weight_values(weights: "SpanWeights | Sequence[float]") -> Sequence[float]:
    return weights.values if isinstance(weights, SpanWeights) else weights


def sequence_reward(
    signals: list[SpanSignal],
    weights: "SpanWeights | Sequence[float]",
    ref_role: str = ROLE_TEACHER_REF,
) -> float:
    """Weighted sum over spans of the policy/reference log-ratio."""
    values = _weight_values(weights)
    if len(values) != len(signals):
        raise LengthMismatch(f"{len(values)} weights for {len(signals)} spans")
    terms = [
        w * (sig.logprob(ROLE_POLICY) - sig.logprob(ref_role))
        for w, sig in zip(values, signals)
    ]
    return math.fsum(terms)


def ctpd_loss(r_w: float, r_l: float, beta: float, penalty: float = 0.0) -> LossOutput:
    """-log sigma(beta * (r_w - r_l)) via softplus; positive and overflow-free.

    ``penalty`` is an experimentation hook for adding a caller-computed
    regularization term (e.g. a sequence-level divergence penalty); it is 0
    by default and the loss then equals softplus(-margin) exactly.
    """
    margin = beta * (r_w - r_l)
    return LossOutput(
        loss=softplus(-margin) + penalty, margin=margin, reward_w=r_w, reward_l=r_l
    )


def dpo_loss(
    seq_logratio_w: float, seq_logratio_l: float, beta: float, penalty: float = 0.0
) -> LossOutput:
    """Sequence-level preference loss; identical to ctpd_loss with unit weights."""
    return ctpd_loss(seq_logratio_w, seq_logratio_l, beta, penalty=penalty)


def tis_dpo_token_loss(
    token_logratios_w: Sequence[float],
    token_logratios_l: Sequence[float],
    token_weights_w: Sequence[float],
    token_weights_l: Sequence[float],
    beta: float,
) -> LossOutput:
    """Single-tokenizer weighted token-level baseline."""
    if len(token_logratios_w) != len(token_weights_w):
        raise LengthMismatch(
            f"winner: {len(token_weights_w)} weights for {len(token_logratios_w)} ratios"
        )
    if len(token_logratios_l) != len(token_weights_l):
        raise LengthMismatch(
            f"loser: {len(token_weights_l)} weights for {len(token_logratios_l)} ratios"
        )
    r_w = math.fsum(w * r for w, r in zip(token_weights_w, token_logratios_w))
    r_l = math.fsum(w * r for w, r in zip(token_weights_l, token_logratios_l))
    return ctpd_loss(r_w, r_l, beta)


def dpo_lambda(
    ref_lr_w: float, ref_lr_l: float, pol_lr_w: float, pol_lr_l: float, beta: float
) -> float:
    """Reference-controlled reweighting factor sigma(beta*ref_margin - beta*pol_margin)."""
    return sigmoid(beta * (ref_lr_w - ref_lr_l) - beta * (pol_lr_w - pol_lr_l))


def rm_pair_loss(score_w: float, score_l: float) -> float:
    """Pairwise logistic reward-model loss -log sigma(score_w - score_l)."""
    return softplus(-(score_w - score_l))


def _token_grads(
    weights: Sequence[float], partition, coeff: float
) -> tuple[float, ...]:
    # every student token inside span i inherits coeff * w_i
    out = []
    for w, span in zip(weights, partition.spans):
        out.extend([coeff * w] * span.student_count)
    return tuple(out)


def ctpd_gradient(
    example: PreferenceExample,
    cfg: ObjectiveConfig,
    weights_w: "SpanWeights | Sequence[float] | None" = None,
    weights_l: "SpanWeights | Sequence[float] | None" = None,
) -> LossOutput:
    """Loss plus exact d(loss)/d(policy token log-prob) for both responses.

    With delta = r_w - r_l and g = sigma(-beta * delta), a student token in
    winner span i gets -beta*g*w_i and one in loser span j gets +beta*g*w_j.
    """
    chosen, rejected = example.chosen, example.rejected
    if chosen.partition is None or rejected.partition is None:
        raise ValueError("both bundles need aligned partitions")
    w_vals = _weight_values(weights_w if weights_w is not None else chosen.span_weights or ())
    l_vals = _weight_values(weights_l if weights_l is not None else rejected.span_weights or ())
    if len(w_vals) != len(chosen.partition.spans):
        raise LengthMismatch(
            f"winner: {len(w_vals)} weights for {len(chosen.partition.spans)} spans"
        )
    if len(l_vals) != len(rejected.partition.spans):
        raise LengthMismatch(
            f"loser: {len(l_vals)} weights for {len(rejected.partition.spans)} spans"
        )
    ref = cfg.reference_role
    sig_w = build_span_signals(chosen, require=(ROLE_POLICY, ref))
    sig_l = build_span_signals(rejected, require=(ROLE_POLICY, ref))
    r_w = sequence_reward(sig_w, w_vals, ref)
    r_l = sequence_reward(sig_l, l_vals, ref)
    base = ctpd_loss(r_w, r_l, cfg.beta)
    g = sigmoid(-base.margin)
    return LossOutput(
        loss=base.loss,
        margin=base.margin,
        reward_w=r_w,
        reward_l=r_l,
        grad_policy_tokens_w=_token_grads(w_vals, chosen.partition, -cfg.beta * g),
        grad_policy_tokens_l=_token_grads(l_vals, rejected.partition, +cfg.beta * g),
    )


def unit_weights(n: int) -> tuple[float, ...]:
    return (1.0,) * n
