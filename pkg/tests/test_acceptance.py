"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Tolerances are pinned here and nowhere else. The exporter round-trip
criterion lives in the exporter package's own test suite.
"""

import json
import math
import time

import numpy as np
import pytest

from ctpd.align import boundary_set, partition_aligned_spans
from ctpd.objective import ObjectiveConfig, ctpd_loss, dpo_loss, sequence_reward, unit_weights
from ctpd.signals import build_span_signals
from ctpd.synth import fd_gradient_check, random_trace_pair, random_weighted_example
from ctpd.theory import (
    ToySpanDistribution,
    hoeffding_noise_bound,
    importance_sampling_check,
    mc_noise_probability,
    model_noise_bound,
    random_span_reward_model,
    solve_optimal_reweight,
)
from ctpd.trace import LogProbTrack, ResponseBundle, WeightConfig
from ctpd.weighting import contrastive_span_weight, weight_bounds


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# Criterion: span-alignment suite
# ---------------------------------------------------------------------------


def test_span_alignment_suite():
    rng = np.random.default_rng(0xA11C)
    start = time.monotonic()
    cases = 10_000
    for _ in range(cases):
        teacher, student = random_trace_pair(rng)
        p = partition_aligned_spans(teacher, student)
        tb, sb = set(boundary_set(teacher)), set(boundary_set(student))
        n = teacher.doc.byte_len
        if n == 0:
            assert p.spans == ()
            continue
        # boundary-intersection equality
        assert [0] + [sp.byte_end for sp in p.spans] == sorted(tb & sb)
        # tiling
        pos = 0
        for sp in p.spans:
            assert sp.byte_start == pos and sp.byte_end > sp.byte_start
            pos = sp.byte_end
        assert pos == n
        # minimality
        for sp in p.spans:
            for b in range(sp.byte_start + 1, sp.byte_end):
                assert b not in tb or b not in sb
        # symmetry
        q = partition_aligned_spans(student, teacher)
        assert [(s.byte_start, s.byte_end) for s in q.spans] == [
            (s.byte_start, s.byte_end) for s in p.spans
        ]
        assert [s.teacher_tokens for s in q.spans] == [s.student_tokens for s in p.spans]
    elapsed = time.monotonic() - start
    _report(
        "span-alignment",
        elapsed < 60.0,
        f"{cases} random dual tilings, 0 failures, {elapsed:.1f}s < 60s",
    )


# ---------------------------------------------------------------------------
# Criterion: conservation of sequence log-prob across spans
# ---------------------------------------------------------------------------


def test_conservation():
    rng = np.random.default_rng(0xC0)
    roles = (("policy", "student"), ("teacher_ref", "teacher"),
             ("positive", "teacher"), ("negative", "teacher"))
    worst = 0.0
    n_examples = 1_000
    done = 0
    while done < n_examples:
        teacher, student = random_trace_pair(rng, min_chars=1)
        if not teacher.tokens or not student.tokens:
            continue
        tracks = tuple(
            LogProbTrack(
                role, side,
                tuple(float(v) for v in rng.uniform(-10, 0, size=len(
                    (teacher if side == "teacher" else student).tokens
                ))),
            )
            for role, side in roles
        )
        bundle = ResponseBundle(
            teacher_trace=teacher,
            student_trace=student,
            tracks=tracks,
            partition=partition_aligned_spans(teacher, student),
        )
        signals = build_span_signals(bundle)
        for role, _ in roles:
            span_total = math.fsum(s.logprob(role) for s in signals)
            token_total = math.fsum(bundle.track(role).values)
            worst = max(worst, abs(span_total - token_total))
        done += 1
    _report("conservation", worst <= 1e-12,
            f"{n_examples} examples x 4 roles, max |diff| = {worst:.2e} <= 1e-12")


# ---------------------------------------------------------------------------
# Criterion: reduction identity (unit-weight distillation loss == plain loss)
# ---------------------------------------------------------------------------


def test_reduction_identity():
    rng = np.random.default_rng(0xD0)
    worst = 0.0
    for _ in range(1_000):
        example = random_weighted_example(rng, max_spans=12)
        beta = float(rng.uniform(0.01, 1.0))
        losses = {}
        for route in ("ctpd", "dpo"):
            vals = {}
            for side in ("chosen", "rejected"):
                bundle = example.bundle(side)
                if route == "ctpd":
                    sig = build_span_signals(bundle)
                    vals[side] = sequence_reward(sig, unit_weights(len(sig)), "teacher_ref")
                else:
                    pol = math.fsum(bundle.track("policy").values)
                    ref = math.fsum(bundle.track("teacher_ref").values)
                    vals[side] = pol - ref
            fn = ctpd_loss if route == "ctpd" else dpo_loss
            losses[route] = fn(vals["chosen"], vals["rejected"], beta).loss
        worst = max(worst, abs(losses["ctpd"] - losses["dpo"]))
    _report("reduction-identity", worst <= 1e-12,
            f"1000 instances, max |ctpd - dpo| = {worst:.2e} <= 1e-12")


# ---------------------------------------------------------------------------
# Criterion: gradient checks
# ---------------------------------------------------------------------------


def test_gradient_check_analytic():
    rng = np.random.default_rng(0x9D)
    worst = 0.0
    for _ in range(200):
        example = random_weighted_example(rng, max_spans=20)
        res = fd_gradient_check(example, ObjectiveConfig(beta=0.1), h=1e-6)
        worst = max(worst, res["max_grad_rel_err"])
    _report("gradient-analytic", worst <= 1e-6,
            f"200 random instances, max rel err = {worst:.2e} <= 1e-6")


def test_gradient_check_toy_end_to_end():
    from ctpd.toylab.data import (
        generate_preference_set,
        make_sft_corpus,
        standard_student_tokenizer,
        standard_teacher_tokenizer,
    )
    from ctpd.toylab.model import ToyLM
    from ctpd.toylab.training import (
        build_ctpd_task,
        precompute_weights,
        pref_loss_and_grad,
        train_dpo_pair,
        train_mle,
    )

    tt, st = standard_teacher_tokenizer(), standard_student_tokenizer()
    teacher = train_mle(ToyLM(tt, 1), make_sft_corpus(48, 0.7, seed=100), 2.0, 80)
    student = train_mle(ToyLM(st, 2), make_sft_corpus(48, 0.5, seed=101), 2.0, 80)
    prefs = generate_preference_set(24, seed=102, flip_fraction=0.3, bad_span_rate=0.8)
    pos = train_dpo_pair(teacher, prefs, 0.3, 1.0, 80)
    neg = train_dpo_pair(teacher, prefs, 0.3, 1.0, 80, reverse=True)
    examples = precompute_weights(prefs, pos, neg, WeightConfig(), tt, st)
    task = build_ctpd_task(student, teacher, examples, ObjectiveConfig(0.1, "ctpd", "teacher_ref"))
    rows = task.registry.gather(student)
    _, grad = pref_loss_and_grad(rows, task, beta=0.1)

    rng = np.random.default_rng(103)
    h = 1e-5
    worst = 0.0
    checked = 0
    while checked < 20:
        c = int(rng.integers(0, rows.shape[0]))
        v = int(rng.integers(0, rows.shape[1]))
        if abs(grad[c, v]) < 1e-12:
            continue
        bumped = rows.copy()
        bumped[c, v] += h
        up, _ = pref_loss_and_grad(bumped, task, beta=0.1)
        bumped[c, v] -= 2 * h
        down, _ = pref_loss_and_grad(bumped, task, beta=0.1)
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - grad[c, v]) / max(abs(fd), abs(grad[c, v])))
        checked += 1
    _report("gradient-toy-end-to-end", worst <= 1e-5,
            f"20 parameters, max rel err = {worst:.2e} <= 1e-5")


# ---------------------------------------------------------------------------
# Criterion: weight formula
# ---------------------------------------------------------------------------


def test_weight_formula():
    cfg = WeightConfig()
    defaults_ok = (
        cfg.k == 1.0 and cfg.mu_pos == 1.0 and cfg.mu_neg == -1.0
        and cfg.clamp_lo == -0.5 and cfg.clamp_hi == 1.5
    )
    spot_hi = abs(contrastive_span_weight(0.0, -2.0, cfg, "winner") - 4.4816890703380645)
    spot_lo = abs(contrastive_span_weight(-2.0, 0.0, cfg, "loser") - 1.6487212707001282)

    rng = np.random.default_rng(0x3E)
    ratios = np.sort(rng.uniform(-5, 5, size=10_000))
    mono = True
    bounded = True
    for polarity in ("winner", "loser"):
        lo, hi = weight_bounds(cfg, polarity)
        ws = [contrastive_span_weight(r, 0.0, cfg, polarity) for r in ratios]
        pairs_ok = all(
            (b >= a) if polarity == "winner" else (b <= a) for a, b in zip(ws, ws[1:])
        )
        mono = mono and pairs_ok
        bounded = bounded and all(lo <= w <= hi for w in ws)

    ok = defaults_ok and spot_hi <= 1e-9 and spot_lo <= 1e-9 and mono and bounded
    _report(
        "weight-formula",
        ok,
        "defaults k=1 mu=+/-1 clamp [-0.5,1.5]; "
        f"spots |err| = ({spot_hi:.1e}, {spot_lo:.1e}) <= 1e-9; "
        "monotone and bounded on 10000 ratios x 2 polarities",
    )


# ---------------------------------------------------------------------------
# Criterion: noise-bound soundness
# ---------------------------------------------------------------------------


def test_noise_bound_soundness():
    spot1 = abs(hoeffding_noise_bound(0.5, [(0, 1)], [(0, 1)]).value - 0.7788007830714049)
    spot2 = abs(hoeffding_noise_bound(0.5, [(0, 1)] * 4, [(0, 1)] * 4).value - 0.36787944117144233)

    rng = np.random.default_rng(0x7E1)
    n_models = 1_000
    violations = 0
    worst_slack = -1e9
    for i in range(n_models):
        model = random_span_reward_model(rng)
        bound = model_noise_bound(model)
        mc = mc_noise_probability(model, samples=100_000, seed=40_000 + i)
        slack = mc.estimate - (bound.value + 3 * mc.std_error)
        worst_slack = max(worst_slack, slack)
        if slack > 0:
            violations += 1
    ok = spot1 <= 1e-9 and spot2 <= 1e-9 and violations == 0
    _report(
        "noise-bound-soundness",
        ok,
        f"{n_models} models x 1e5 draws, {violations} violations, "
        f"worst estimate-(bound+3se) = {worst_slack:.2e}; spot errs ({spot1:.1e}, {spot2:.1e})",
    )


# ---------------------------------------------------------------------------
# Criterion: optimal reweighting (constant expected span reward)
# ---------------------------------------------------------------------------


def test_optimal_reweighting():
    d = ToySpanDistribution("c", ("a", "b"), (0.8, 0.2), (0.0, 1.0))
    sol = solve_optimal_reweight(d, target=0.5)
    worked = abs(sol.mu - (-1.3862943611198906))

    rng = np.random.default_rng(0x7E2)
    worst_target = 0.0
    worst_ratio_spread = 0.0
    done = 0
    while done < 100:
        n = int(rng.integers(2, 12))
        probs = rng.dirichlet(np.ones(n))
        rewards = rng.uniform(-3, 3, size=n)
        if rewards.max() - rewards.min() < 0.2:
            continue
        dist = ToySpanDistribution(
            "c",
            tuple(f"s{i}" for i in range(n)),
            tuple(float(p) for p in probs),
            tuple(float(r) for r in rewards),
        )
        target = float(rng.uniform(rewards.min() + 0.05, rewards.max() - 0.05))
        s = solve_optimal_reweight(dist, target)
        worst_target = max(worst_target, abs(s.d_star.expected_reward - target))
        ratios = [
            p / (q * s.weight(r))
            for p, q, r in zip(dist.probs, s.d_star.probs, dist.rewards)
        ]
        worst_ratio_spread = max(worst_ratio_spread, max(ratios) - min(ratios))
        done += 1
    ok = worked <= 1e-9 and worst_target <= 1e-10 and worst_ratio_spread <= 1e-10
    _report(
        "optimal-reweighting",
        ok,
        f"100 distributions: max |E-R*| = {worst_target:.2e} <= 1e-10, "
        f"max ratio spread = {worst_ratio_spread:.2e} <= 1e-10; worked mu err = {worked:.1e}",
    )


# ---------------------------------------------------------------------------
# Criterion: importance-sampling identity
# ---------------------------------------------------------------------------


def test_importance_sampling_identity():
    rng = np.random.default_rng(0x7E3)
    worst = 0.0
    done = 0
    while done < 100:
        n = int(rng.integers(2, 12))
        probs = rng.dirichlet(np.ones(n))
        rewards = rng.uniform(-2, 2, size=n)
        if rewards.max() - rewards.min() < 0.2:
            continue
        dist = ToySpanDistribution(
            "c",
            tuple(f"s{i}" for i in range(n)),
            tuple(float(p) for p in probs),
            tuple(float(r) for r in rewards),
        )
        target = float(rng.uniform(rewards.min() + 0.05, rewards.max() - 0.05))
        sol = solve_optimal_reweight(dist, target)
        weights = [sol.weight(r) for r in dist.rewards]
        f_table = {s: float(rng.uniform(-5, 5)) for s in dist.support}
        chk = importance_sampling_check(dist, weights, lambda s: f_table[s])
        assert chk.normalizable
        worst = max(worst, chk.abs_diff)
        done += 1
    _report("importance-sampling", worst <= 1e-12,
            f"100 normalizing pairs, max |lhs - rhs| = {worst:.2e} <= 1e-12")


# ---------------------------------------------------------------------------
# Criteria: end-to-end toy experiment and determinism
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def standard_report():
    from ctpd.toylab.experiment import run_experiment, standard_noisy_spec

    start = time.monotonic()
    report = run_experiment(standard_noisy_spec())
    report["_elapsed"] = time.monotonic() - start
    return report


def test_toy_experiment_orderings(standard_report):
    mean = standard_report["summary"]["mean_accuracy"]
    elapsed = standard_report["_elapsed"]
    ok = (
        mean["ctpd"] >= mean["dpo"]
        and mean["ctpd"] > mean["random"]
        and mean["ctpd"] >= mean["student_ref"]
        and elapsed <= 900.0
    )
    _report(
        "toy-experiment",
        ok,
        f"5 seeds: ctpd={mean['ctpd']:.4f} >= dpo={mean['dpo']:.4f}, "
        f"> random={mean['random']:.4f}, >= student_ref={mean['student_ref']:.4f}; "
        f"runtime {elapsed:.0f}s <= 900s",
    )


def test_toy_run_determinism(tmp_path):
    from ctpd.cli import main

    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    rc1 = main(["toy-run", "--spec", "quick", "--out", str(out1)])
    rc2 = main(["toy-run", "--spec", "quick", "--out", str(out2)])
    identical = out1.read_bytes() == out2.read_bytes()
    report = json.loads(out1.read_text())
    _report(
        "determinism",
        rc1 == 0 and rc2 == 0 and identical,
        f"two toy-run invocations, identical {len(out1.read_bytes())}-byte reports",
    )
