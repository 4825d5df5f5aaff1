"""End-to-end toy experiment: SFT both models, train the contrastive teacher
pair, precompute span weights, then train and evaluate every requested arm.

Reports are plain JSON-serializable dicts assembled in spec order, so a rerun
with the same spec is byte-identical.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import SpecInvalid
from ..objective import ObjectiveConfig
from ..trace import ROLE_STUDENT_REF, ROLE_TEACHER_REF, WeightConfig
from .data import (
    generate_preference_set,
    make_sft_corpus,
    standard_student_tokenizer,
    standard_teacher_tokenizer,
)
from .model import ToyLM
from .training import (
    eval_preference_accuracy,
    precompute_weights,
    token_contrastive_weights,
    train_ctpd,
    train_dpo_pair,
    train_dpo_student,
    train_mle,
    train_tis_dpo,
)

ARMS = (
    "dpo",
    "tis_dpo_token",
    "ctpd",
    "random",
    "average",
    "student_estimate",
    "teacher_student_estimate",
    "student_ref",
)

# Arms that train with span weights and a teacher-side reference.
_SPAN_WEIGHT_STRATEGY = {
    "ctpd": "contrastive_teacher",
    "random": "random",
    "average": "average",
    "student_estimate": "student_estimate",
    "teacher_student_estimate": "teacher_student_estimate",
}


def standard_noisy_spec() -> dict:
    """The standard desk-scale experiment: 256 noisy train pairs, 64 clean
    held-out pairs, heterogeneous tokenizers, five seeds."""
    return {
        "name": "standard-noisy",
        "seeds": [0, 1, 2, 3, 4],
        "arms": list(ARMS),
        "data": {
            "n_train": 256,
            "n_heldout": 64,
            "min_words": 4,
            "max_words": 12,
            "flip_fraction": 0.3,
            "bad_span_rate": 0.8,
            "rejected_bad_fraction": 0.4,
        },
        "models": {
            "teacher": {
                "order": 1,
                "sft_sequences": 192,
                "good_bias": 0.7,
                "sft_steps": 150,
                "sft_lr": 2.0,
            },
            "student": {
                "order": 2,
                "sft_sequences": 192,
                "good_bias": 0.5,
                "sft_steps": 150,
                "sft_lr": 2.0,
            },
        },
        "contrastive": {"beta": 0.3, "lr": 1.0, "steps": 300},
        "train": {"beta": 0.1, "lr": 20.0, "steps": 400},
        "weights": {"k": 1.0, "mu_pos": 1.0, "mu_neg": -1.0, "clamp_lo": -0.5, "clamp_hi": 1.5},
        "report": {"curve_every": 20},
    }


def quick_spec() -> dict:
    """A minutes-to-seconds spec for smoke tests and determinism checks."""
    spec = standard_noisy_spec()
    spec["name"] = "quick"
    spec["seeds"] = [0]
    spec["arms"] = ["dpo", "ctpd"]
    spec["data"]["n_train"] = 48
    spec["data"]["n_heldout"] = 16
    spec["models"]["teacher"]["sft_steps"] = 60
    spec["models"]["student"]["sft_steps"] = 60
    spec["contrastive"]["steps"] = 80
    spec["train"]["steps"] = 100
    return spec


BUILTIN_SPECS = {"standard-noisy": standard_noisy_spec, "quick": quick_spec}


def load_spec(source: str | Path | dict) -> dict:
    if isinstance(source, dict):
        return source
    name = str(source)
    if name in BUILTIN_SPECS:
        return BUILTIN_SPECS[name]()
    try:
        with open(source, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SpecInvalid(f"spec '{name}' is neither a builtin name nor a readable file") from None
    except json.JSONDecodeError as exc:
        raise SpecInvalid(f"spec file {name}: invalid JSON ({exc.msg})") from None


def _validate_spec(spec: dict) -> None:
    for key in ("name", "seeds", "arms", "data", "models", "contrastive", "train", "weights"):
        if key not in spec:
            raise SpecInvalid(f"spec missing key '{key}'")
    if not spec["seeds"] or not all(isinstance(s, int) for s in spec["seeds"]):
        raise SpecInvalid("'seeds' must be a non-empty list of integers")
    unknown = [a for a in spec["arms"] if a not in ARMS]
    if unknown:
        raise SpecInvalid(f"unknown arms {unknown}; valid: {list(ARMS)}")
    if not spec["arms"]:
        raise SpecInvalid("'arms' must be non-empty")
    for section, key in (("contrastive", "beta"), ("train", "beta")):
        if spec[section][key] <= 0:
            raise SpecInvalid(f"{section}.{key} must be positive")
    data = spec["data"]
    if data["min_words"] < 1 or data["max_words"] < data["min_words"]:
        raise SpecInvalid("data word range invalid")


def _weight_cfg(spec: dict, strategy: str) -> WeightConfig:
    w = spec["weights"]
    return WeightConfig(
        k=w["k"],
        mu_pos=w["mu_pos"],
        mu_neg=w["mu_neg"],
        clamp_lo=w["clamp_lo"],
        clamp_hi=w["clamp_hi"],
        strategy=strategy,
    )


def _subsample(curve: list[float], every: int) -> list[float]:
    if not curve:
        return []
    out = curve[::every]
    if out[-1] != curve[-1]:
        out.append(curve[-1])
    return [float(v) for v in out]


def _weight_stats(examples) -> dict:
    winner = np.concatenate([np.asarray(ex.chosen.span_weights) for ex in examples])
    loser = np.concatenate([np.asarray(ex.rejected.span_weights) for ex in examples])
    return {
        "winner_mean": float(winner.mean()),
        "winner_min": float(winner.min()),
        "winner_max": float(winner.max()),
        "loser_mean": float(loser.mean()),
        "loser_min": float(loser.min()),
        "loser_max": float(loser.max()),
    }


def _token_weight_stats(token_weights) -> dict:
    winner = np.concatenate([tw["chosen"] for tw in token_weights])
    loser = np.concatenate([tw["rejected"] for tw in token_weights])
    return {
        "winner_mean": float(winner.mean()),
        "winner_min": float(winner.min()),
        "winner_max": float(winner.max()),
        "loser_mean": float(loser.mean()),
        "loser_min": float(loser.min()),
        "loser_max": float(loser.max()),
    }


def _run_seed(spec: dict, seed: int) -> dict:
    """All shared artifacts and arm results for one seed."""
    data = spec["data"]
    models = spec["models"]
    teacher_tok = standard_teacher_tokenizer()
    student_tok = standard_student_tokenizer()

    rejected_bad = data.get("rejected_bad_fraction", 0.4)
    train_prefs = generate_preference_set(
        data["n_train"],
        seed=1000 + seed,
        flip_fraction=data["flip_fraction"],
        bad_span_rate=data["bad_span_rate"],
        min_words=data["min_words"],
        max_words=data["max_words"],
        rejected_bad_fraction=rejected_bad,
    )
    heldout = generate_preference_set(
        data["n_heldout"],
        seed=2000 + seed,
        flip_fraction=0.0,
        bad_span_rate=0.0,
        min_words=data["min_words"],
        max_words=data["max_words"],
        rejected_bad_fraction=rejected_bad,
    )

    t_cfg, s_cfg = models["teacher"], models["student"]
    teacher_corpus = make_sft_corpus(
        t_cfg["sft_sequences"], t_cfg["good_bias"], seed=3000 + seed,
        min_words=data["min_words"], max_words=data["max_words"],
    )
    student_corpus = make_sft_corpus(
        s_cfg["sft_sequences"], s_cfg["good_bias"], seed=4000 + seed,
        min_words=data["min_words"], max_words=data["max_words"],
    )
    teacher = train_mle(
        ToyLM(teacher_tok, t_cfg["order"]), teacher_corpus, t_cfg["sft_lr"], t_cfg["sft_steps"]
    )
    student = train_mle(
        ToyLM(student_tok, s_cfg["order"]), student_corpus, s_cfg["sft_lr"], s_cfg["sft_steps"]
    )

    arms = spec["arms"]
    c_cfg, tr_cfg = spec["contrastive"], spec["train"]
    needs_teacher_pair = any(
        a in arms for a in ("ctpd", "random", "average", "student_ref")
    )
    needs_student_pair = any(a in arms for a in ("tis_dpo_token", "student_estimate"))

    pos_t = neg_t = pos_s = neg_s = None
    if needs_teacher_pair:
        pos_t = train_dpo_pair(teacher, train_prefs, c_cfg["beta"], c_cfg["lr"], c_cfg["steps"])
        neg_t = train_dpo_pair(
            teacher, train_prefs, c_cfg["beta"], c_cfg["lr"], c_cfg["steps"], reverse=True
        )
    if needs_student_pair:
        pos_s = train_dpo_pair(student, train_prefs, c_cfg["beta"], c_cfg["lr"], c_cfg["steps"])
        neg_s = train_dpo_pair(
            student, train_prefs, c_cfg["beta"], c_cfg["lr"], c_cfg["steps"], reverse=True
        )

    result = {
        "sft_student_accuracy": eval_preference_accuracy(student, heldout),
        "arms": {},
    }

    def _arm_examples(arm: str):
        strategy = _SPAN_WEIGHT_STRATEGY.get(arm, "contrastive_teacher")
        cfg = _weight_cfg(spec, strategy)
        if strategy == "student_estimate":
            pos, neg = pos_s, neg_s
        elif strategy == "teacher_student_estimate":
            pos, neg = teacher, student
        else:
            pos, neg = pos_t, neg_t
        return precompute_weights(
            train_prefs, pos, neg, cfg, teacher_tok, student_tok, seed=5000 + seed
        )

    for arm in arms:
        curve: list[float] = []
        stats = None
        beta, lr, steps = tr_cfg["beta"], tr_cfg["lr"], tr_cfg["steps"]
        if arm == "dpo":
            trained = train_dpo_student(student, train_prefs, beta, lr, steps, curve_out=curve)
        elif arm == "tis_dpo_token":
            token_w = token_contrastive_weights(
                train_prefs, pos_s, neg_s, _weight_cfg(spec, "contrastive_teacher")
            )
            stats = _token_weight_stats(token_w)
            trained = train_tis_dpo(student, train_prefs, token_w, beta, lr, steps, curve_out=curve)
        elif arm == "student_ref":
            examples = _arm_examples(arm)
            stats = _weight_stats(examples)
            trained = train_ctpd(
                student,
                student,
                examples,
                ObjectiveConfig(beta=beta, loss_kind="ctpd", reference_role=ROLE_STUDENT_REF),
                lr,
                steps,
                curve_out=curve,
            )
        else:
            examples = _arm_examples(arm)
            stats = _weight_stats(examples)
            trained = train_ctpd(
                student,
                teacher,
                examples,
                ObjectiveConfig(beta=beta, loss_kind="ctpd", reference_role=ROLE_TEACHER_REF),
                lr,
                steps,
                curve_out=curve,
            )
        result["arms"][arm] = {
            "accuracy": eval_preference_accuracy(trained, heldout),
            "loss_curve": _subsample(curve, spec.get("report", {}).get("curve_every", 20)),
            "weight_stats": stats,
        }
    return result


def run_experiment(spec: dict, jobs: int = 1) -> dict:
    """Run every (arm, seed) combination and assemble the report in spec order."""
    _validate_spec(spec)
    seeds = list(spec["seeds"])
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_seed = dict(zip(seeds, pool.map(lambda s: _run_seed(spec, s), seeds)))
    else:
        per_seed = {s: _run_seed(spec, s) for s in seeds}

    runs = []
    for arm in spec["arms"]:
        for seed in seeds:
            entry = per_seed[seed]["arms"][arm]
            runs.append(
                {
                    "arm": arm,
                    "seed": seed,
                    "accuracy": entry["accuracy"],
                    "loss_curve": entry["loss_curve"],
                    "weight_stats": entry["weight_stats"],
                }
            )
    summary = {
        "mean_accuracy": {
            arm: float(np.mean([per_seed[s]["arms"][arm]["accuracy"] for s in seeds]))
            for arm in spec["arms"]
        },
        "sft_student_accuracy": {
            str(s): per_seed[s]["sft_student_accuracy"] for s in seeds
        },
    }
    return {"name": spec["name"], "spec": spec, "runs": runs, "summary": summary}


def report_to_json(report: dict) -> str:
    """Canonical byte-stable rendering of a report."""
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
