"""Command-line entry point.

Subcommands: validate-trace, align, weights, loss-check, grad-check, bounds,
toy-run. Exit codes: 0 success, 1 data errors, 2 usage errors. Data goes to
stdout or --out; diagnostics go to stderr. Numeric options default to k=1,
mu=+/-1, clamp [-0.5, 1.5], beta=0.1. Randomized subcommands require an
explicit --seed. The CTPD_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TextIO

import numpy as np

from .align import partition_aligned_spans, span_count_stats
from .errors import CtpdError, ParseError, SeedRequired
from .objective import ObjectiveConfig, ctpd_loss, sequence_reward
from .signals import build_span_signals
from .synth import fd_gradient_check, random_weighted_example
from .theory import (
    DiscreteReward,
    SpanRewardModel,
    UniformReward,
    mc_noise_probability,
    model_noise_bound,
    random_span_reward_model,
)
from .toylab.experiment import load_spec, report_to_json, run_experiment
from .trace import (
    ROLE_POLICY,
    PreferenceExample,
    WeightConfig,
    load_examples,
    parse_example_line,
    validate_example,
)
from .weighting import compute_span_weights

log = logging.getLogger("ctpd")

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def _parallel_map(fn: Callable, items: list, jobs: int) -> list:
    """Order-preserving map; output is independent of the worker count."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _open_out(path: str | None) -> TextIO:
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _emit_lines(lines: Iterable[str], path: str | None) -> None:
    out = _open_out(path)
    try:
        for line in lines:
            out.write(line + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def _iter_raw_lines(path: str) -> list[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return [(i, raw) for i, raw in enumerate(fh, start=1) if raw.strip()]


def _add_weight_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", default="contrastive_teacher",
                   choices=["contrastive_teacher", "random", "average",
                            "student_estimate", "teacher_student_estimate"],
                   help="weighting strategy (default: contrastive_teacher)")
    p.add_argument("--k", type=float, default=1.0, help="weight scale k (default: 1)")
    p.add_argument("--mu-pos", type=float, default=1.0, help="winner-side mu (default: 1)")
    p.add_argument("--mu-neg", type=float, default=-1.0, help="loser-side mu (default: -1)")
    p.add_argument("--clamp-lo", type=float, default=-0.5, help="log-ratio clamp lower bound (default: -0.5)")
    p.add_argument("--clamp-hi", type=float, default=1.5, help="log-ratio clamp upper bound (default: 1.5)")


def _weight_config(args: argparse.Namespace) -> WeightConfig:
    return WeightConfig(
        k=args.k,
        mu_pos=args.mu_pos,
        mu_neg=args.mu_neg,
        clamp_lo=args.clamp_lo,
        clamp_hi=args.clamp_hi,
        strategy=args.strategy,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate_trace(args: argparse.Namespace) -> int:
    lines = _iter_raw_lines(args.infile)

    def check(item: tuple[int, str]) -> dict:
        line_no, raw = item
        try:
            example = parse_example_line(raw, line_no)
        except CtpdError as exc:
            return {"line": line_no, "valid": False, "errors": [str(exc)]}
        issues = validate_example(example)
        return {
            "line": line_no,
            "valid": not issues,
            "errors": [f"{v.kind} ({v.side}): {v.message}" for v in issues],
        }

    if args.fail_fast:
        results = []
        for item in lines:
            res = check(item)
            results.append(res)
            if not res["valid"]:
                break
    else:
        results = _parallel_map(check, lines, args.jobs)
    for res in results:
        if not res["valid"]:
            log.error("line %d invalid: %s", res["line"], "; ".join(res["errors"]))
    _emit_lines((json.dumps(r, sort_keys=True) for r in results), args.out)
    return EXIT_OK if all(r["valid"] for r in results) else EXIT_DATA


def cmd_align(args: argparse.Namespace) -> int:
    try:
        examples = load_examples(args.infile)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA

    def one(example: PreferenceExample) -> list[str]:
        rows = []
        for side in ("chosen", "rejected"):
            bundle = example.bundle(side)
            partition = partition_aligned_spans(bundle.teacher_trace, bundle.student_trace)
            rows.append(
                json.dumps(
                    {
                        "example": example.line_no,
                        "side": side,
                        "spans": [
                            {
                                "s": sp.byte_start,
                                "e": sp.byte_end,
                                "t": list(sp.teacher_tokens),
                                "u": list(sp.student_tokens),
                            }
                            for sp in partition.spans
                        ],
                        "stats": span_count_stats(partition),
                    },
                    sort_keys=True,
                )
            )
        return rows

    failures = 0
    out_rows: list[str] = []
    for example in examples:
        try:
            out_rows.extend(one(example))
        except CtpdError as exc:
            failures += 1
            log.error("example %s: %s", example.line_no, exc)
            if args.fail_fast:
                _emit_lines(out_rows, args.out)
                return EXIT_DATA
    _emit_lines(out_rows, args.out)
    return EXIT_DATA if failures else EXIT_OK


def _ensure_partitions(example: PreferenceExample) -> PreferenceExample:
    from dataclasses import replace

    bundles = {}
    for side in ("chosen", "rejected"):
        bundle = example.bundle(side)
        if bundle.partition is None:
            bundle = replace(
                bundle,
                partition=partition_aligned_spans(bundle.teacher_trace, bundle.student_trace),
            )
        bundles[side] = bundle
    return replace(example, chosen=bundles["chosen"], rejected=bundles["rejected"])


def cmd_weights(args: argparse.Namespace) -> int:
    cfg = _weight_config(args)
    try:
        if cfg.strategy == "random" and args.seed is None:
            raise SeedRequired("--seed is required for the random strategy")
        examples = load_examples(args.infile)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA

    def one(example: PreferenceExample) -> list[str]:
        example = _ensure_partitions(example)
        rows = []
        for side, polarity in (("chosen", "winner"), ("rejected", "loser")):
            weights = compute_span_weights(
                example.bundle(side),
                cfg,
                polarity,
                seed=args.seed,
                example_key=(example.line_no or 0,),
            )
            rows.append(
                json.dumps(
                    {"example": example.line_no, "side": side, "weights": list(weights.values)},
                    sort_keys=True,
                )
            )
        return rows

    try:
        chunks = _parallel_map(one, examples, args.jobs)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    _emit_lines((row for chunk in chunks for row in chunk), args.out)
    return EXIT_OK


def _load_weight_file(path: str) -> dict[tuple[int, str], tuple[float, ...]]:
    table = {}
    for line_no, raw in _iter_raw_lines(path):
        try:
            obj = json.loads(raw)
            table[(int(obj["example"]), str(obj["side"]))] = tuple(
                float(w) for w in obj["weights"]
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ParseError(line_no, "malformed weights entry") from None
    return table


def _example_weights(
    example: PreferenceExample, args: argparse.Namespace, weight_table
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    out = []
    for side in ("chosen", "rejected"):
        bundle = example.bundle(side)
        n = len(bundle.partition.spans)
        if args.unit_weights:
            out.append((1.0,) * n)
        elif weight_table is not None:
            key = (example.line_no, side)
            if key not in weight_table:
                raise ParseError(example.line_no or 0, f"no weights for {key}")
            out.append(weight_table[key])
        elif bundle.span_weights is not None:
            out.append(bundle.span_weights)
        else:
            raise ParseError(
                example.line_no or 0,
                f"{side}: no span weights embedded; pass --weights or --unit-weights",
            )
    return out[0], out[1]


def cmd_loss_check(args: argparse.Namespace) -> int:
    cfg = ObjectiveConfig(beta=args.beta, loss_kind="ctpd", reference_role=args.reference_role)
    try:
        examples = load_examples(args.infile)
        weight_table = _load_weight_file(args.weights) if args.weights else None
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA

    def one(example: PreferenceExample) -> str:
        example = _ensure_partitions(example)
        w_vals, l_vals = _example_weights(example, args, weight_table)
        r_w = sequence_reward(
            build_span_signals(example.chosen, require=(ROLE_POLICY, cfg.reference_role)),
            w_vals,
            cfg.reference_role,
        )
        r_l = sequence_reward(
            build_span_signals(example.rejected, require=(ROLE_POLICY, cfg.reference_role)),
            l_vals,
            cfg.reference_role,
        )
        out = ctpd_loss(r_w, r_l, cfg.beta)
        return json.dumps(
            {
                "example": example.line_no,
                "loss": out.loss,
                "margin": out.margin,
                "max_grad_rel_err": None,
            },
            sort_keys=True,
        )

    try:
        rows = _parallel_map(one, examples, args.jobs)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    _emit_lines(rows, args.out)
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace) -> int:
    cfg = ObjectiveConfig(beta=args.beta, loss_kind="ctpd", reference_role=args.reference_role)
    rows: list[str] = []
    worst = 0.0
    try:
        if args.random:
            if args.seed is None:
                raise SeedRequired("--seed is required with --random")
            rng = np.random.default_rng(args.seed)
            cases: list[tuple[int | None, PreferenceExample]] = [
                (i + 1, random_weighted_example(rng, ref_role=cfg.reference_role))
                for i in range(args.random)
            ]
        else:
            if not args.infile:
                log.error("grad-check needs --in FILE or --random N")
                return EXIT_USAGE
            weight_table = _load_weight_file(args.weights) if args.weights else None
            cases = []
            for ex in load_examples(args.infile):
                ex = _ensure_partitions(ex)
                w_vals, l_vals = _example_weights(ex, args, weight_table)
                from dataclasses import replace

                ex = replace(
                    ex,
                    chosen=replace(ex.chosen, span_weights=w_vals),
                    rejected=replace(ex.rejected, span_weights=l_vals),
                )
                cases.append((ex.line_no, ex))

        def one(case: tuple[int | None, PreferenceExample]) -> tuple[str, float]:
            idx, example = case
            res = fd_gradient_check(example, cfg, h=args.fd_step)
            payload = dict(res, example=idx)
            return json.dumps(payload, sort_keys=True), res["max_grad_rel_err"]

        results = _parallel_map(one, cases, args.jobs)
        rows = [r[0] for r in results]
        worst = max((r[1] for r in results), default=0.0)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    _emit_lines(rows, args.out)
    log.info("max relative gradient error: %.3e (tolerance %.1e)", worst, args.tol)
    return EXIT_OK if worst <= args.tol else EXIT_DATA


def _reward_dist_from_obj(obj: dict):
    kind = obj.get("kind")
    if kind == "uniform":
        return UniformReward(float(obj["lo"]), float(obj["hi"]))
    if kind == "discrete":
        return DiscreteReward(
            tuple(float(v) for v in obj["values"]), tuple(float(p) for p in obj["probs"])
        )
    raise ParseError(0, f"unknown reward distribution kind {kind!r}")


def cmd_bounds(args: argparse.Namespace) -> int:
    try:
        with open(args.infile, "r", encoding="utf-8") as fh:
            desc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read experiment description: %s", exc)
        return EXIT_DATA

    results = []
    try:
        for entry in desc.get("experiments", []):
            model = SpanRewardModel(
                winner_spans=tuple(_reward_dist_from_obj(o) for o in entry["winner"]),
                loser_spans=tuple(_reward_dist_from_obj(o) for o in entry["loser"]),
            )
            bound = model_noise_bound(model)
            mc = mc_noise_probability(model, int(entry["samples"]), int(entry["seed"]))
            results.append(
                {
                    "name": entry.get("name"),
                    "gap": model.gap,
                    "bound": bound.value,
                    "vacuous": bound.vacuous,
                    "estimate": mc.estimate,
                    "std_error": mc.std_error,
                    "sound": mc.estimate <= bound.value + 3.0 * mc.std_error,
                }
            )
        rand = desc.get("random_models")
        if rand:
            rng = np.random.default_rng(int(rand["seed"]))
            for i in range(int(rand["count"])):
                model = random_span_reward_model(rng)
                bound = model_noise_bound(model)
                mc = mc_noise_probability(model, int(rand["samples"]), int(rand["seed"]) + i + 1)
                results.append(
                    {
                        "name": f"random-{i}",
                        "gap": model.gap,
                        "bound": bound.value,
                        "vacuous": bound.vacuous,
                        "estimate": mc.estimate,
                        "std_error": mc.std_error,
                        "sound": mc.estimate <= bound.value + 3.0 * mc.std_error,
                    }
                )
    except (KeyError, TypeError, ValueError, CtpdError) as exc:
        log.error("bad experiment description: %s", exc)
        return EXIT_DATA

    all_sound = all(r["sound"] for r in results)
    report = {"results": results, "all_sound": all_sound}
    _emit_lines([json.dumps(report, sort_keys=True, indent=2)], args.out)
    return EXIT_OK if all_sound else EXIT_DATA


def cmd_toy_run(args: argparse.Namespace) -> int:
    try:
        spec = load_spec(args.spec)
        report = run_experiment(spec, jobs=args.jobs)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    text = report_to_json(report)
    out = _open_out(args.out)
    try:
        out.write(text)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    log_parent = argparse.ArgumentParser(add_help=False)
    log_parent.add_argument(
        "--log-level",
        default=os.environ.get("CTPD_LOG", "WARNING"),
        help="log level (also settable via CTPD_LOG; default: WARNING)",
    )
    parser = argparse.ArgumentParser(
        prog="ctpd",
        description="Cross-tokenizer preference distillation toolkit",
        parents=[log_parent],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name: str, **kwargs) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[log_parent], **kwargs)

    def common(p: argparse.ArgumentParser, infile: bool = True) -> None:
        if infile:
            p.add_argument("--in", dest="infile", required=True, help="input JSONL file")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="max parallel workers (default: logical cores)")

    p = add_parser("validate-trace", help="validate ctpd/1 JSONL examples")
    common(p)
    p.add_argument("--fail-fast", action="store_true", help="stop at the first invalid line")
    p.set_defaults(func=cmd_validate_trace)

    p = add_parser("align", help="emit aligned-span partitions and stats")
    common(p)
    p.add_argument("--fail-fast", action="store_true", help="stop at the first failing example")
    p.set_defaults(func=cmd_align)

    p = add_parser("weights", help="compute span weights per example and side")
    common(p)
    _add_weight_flags(p)
    p.add_argument("--seed", type=int, default=None,
                   help="seed (required for the random strategy)")
    p.set_defaults(func=cmd_weights)

    p = add_parser("loss-check", help="evaluate the distillation loss per example")
    common(p)
    p.add_argument("--weights", default=None, help="JSONL weights file from the weights command")
    p.add_argument("--unit-weights", action="store_true", help="use weight 1 for every span")
    p.add_argument("--beta", type=float, default=0.1, help="margin scale beta (default: 0.1)")
    p.add_argument("--reference-role", default="teacher_ref",
                   choices=["teacher_ref", "student_ref"],
                   help="reference log-prob track (default: teacher_ref)")
    p.set_defaults(func=cmd_loss_check)

    p = add_parser("grad-check", help="verify analytic gradients against finite differences")
    p.add_argument("--in", dest="infile", default=None, help="input JSONL file")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="max parallel workers (default: logical cores)")
    p.add_argument("--weights", default=None, help="JSONL weights file from the weights command")
    p.add_argument("--unit-weights", action="store_true", help="use weight 1 for every span")
    p.add_argument("--random", type=int, default=0, metavar="N",
                   help="check N synthetic random instances instead of a file")
    p.add_argument("--seed", type=int, default=None, help="seed (required with --random)")
    p.add_argument("--beta", type=float, default=0.1, help="margin scale beta (default: 0.1)")
    p.add_argument("--reference-role", default="teacher_ref",
                   choices=["teacher_ref", "student_ref"],
                   help="reference log-prob track (default: teacher_ref)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="max allowed relative gradient error (default: 1e-6)")
    p.add_argument("--fd-step", type=float, default=1e-6,
                   help="central-difference step (default: 1e-6)")
    p.set_defaults(func=cmd_grad_check)

    p = add_parser("bounds", help="noise-bound soundness experiments")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = add_parser("toy-run", help="run a toy distillation experiment")
    p.add_argument("--spec", required=True,
                   help="experiment spec: JSON file or builtin name "
                        "(standard-noisy, quick)")
    p.add_argument("--out", default=None, help="report file (default: stdout)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel seed pipelines (default: 1)")
    p.set_defaults(func=cmd_toy_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CtpdError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
