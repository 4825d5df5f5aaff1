"""Desk-scale pipeline: toy tokenizers, tabular autoregressive models with
exact gradients, contrastive-pair training, weight precomputation, and the
cross-tokenizer preference distillation experiment harness."""

from .tokenizer import ToyTokenizer, toy_tokenize
from .model import ToyLM
from .data import ToyPreferenceSet, generate_preference_set, make_sft_corpus
from .training import (
    eval_preference_accuracy,
    precompute_weights,
    train_ctpd,
    train_dpo_pair,
    train_mle,
)
from .experiment import run_experiment, standard_noisy_spec, quick_spec

__all__ = [
    "ToyTokenizer",
    "toy_tokenize",
    "ToyLM",
    "ToyPreferenceSet",
    "generate_preference_set",
    "make_sft_corpus",
    "train_mle",
    "train_dpo_pair",
    "precompute_weights",
    "train_ctpd",
    "eval_preference_accuracy",
    "run_experiment",
    "standard_noisy_spec",
    "quick_spec",
]
