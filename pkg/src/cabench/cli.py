"""Command-line entry point: generation, task emission, oracles, scoring.

Every subcommand writes into an output directory (--out, defaulting to
$CABENCH_OUT or the working directory) and leaves exactly one
`run_manifest.json` there recording the subcommand, the fully resolved
configuration, digests of inputs and outputs, and the tool version. No
timestamps anywhere, so rerunning with identical flags reproduces identical bytes.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

from . import __version__
from .datagen import (
    DatasetConfig,
    build_dataset,
    file_sha256,
    iter_instances,
    verify_disjoint,
)
from .groupmul import (
    DEFAULT_LENGTHS,
    GROUP_NAMES,
    generate_groupmul_dataset,
    make_group,
    score_groupmul,
)
from .oracle import ceiling_report, oracle_prediction_records
from .scoring import evaluate_run, summarize_runs
from .tasks import VOCAB, Variant, emit, emit_task_file

__all__ = ["main"]


def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out or os.environ.get("CABENCH_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_run_manifest(
    out: Path, subcommand: str, config: dict, inputs: dict, outputs: dict, extra: dict | None = None
) -> None:
    manifest = {
        "tool": "cabench",
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    with open(out / "run_manifest.json", "w", encoding="ascii") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _digests(out: Path, names: list[str]) -> dict:
    return {name: file_sha256(out / name) for name in names if (out / name).exists()}


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_gen_ca(args: argparse.Namespace) -> int:
    if args.preset == "paper":
        config = DatasetConfig(master_seed=args.seed)
    else:
        config = DatasetConfig(
            master_seed=args.seed,
            width=args.w,
            radius=args.r,
            steps=args.t,
            context_len=args.context,
            n_train=args.n_train,
            n_test=args.n_test,
            dedup_train_rules=args.dedup_train_rules,
        )
    out = _out_dir(args)
    build_dataset(config, out, workers=args.workers)
    names = ["train.jsonl", "test.jsonl", "manifest.json"]
    _write_run_manifest(
        out, "gen-ca", config.to_dict(), inputs={}, outputs=_digests(out, names),
        extra={"seed": args.seed},
    )
    print(f"wrote {config.n_train} train + {config.n_test} test instances to {out}")
    return 0


def _cmd_emit_tasks(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    dataset = Path(args.dataset)
    variant = Variant.parse(args.variant)
    name = f"tasks_{variant.value}_k{args.k}.jsonl"
    raw_name = f"tasks_{variant.value}_k{args.k}.txt" if args.raw_text else None
    samples = (
        emit(inst, variant, args.k, context_len=args.context, mask_slot=args.mask_slot)
        for inst in iter_instances(dataset, validate="spot")
    )
    n = emit_task_file(samples, out / name, raw_text_path=out / raw_name if raw_name else None)
    names = [name] + ([raw_name] if raw_name else [])
    _write_run_manifest(
        out,
        "emit-tasks",
        {
            "variant": variant.value,
            "k": args.k,
            "context_len": args.context,
            "mask_slot": args.mask_slot,
        },
        inputs={str(dataset): file_sha256(dataset)},
        outputs=_digests(out, names),
        extra={"vocab": VOCAB.manifest()},
    )
    print(f"emitted {n} samples to {out / name}")
    return 0


def _cmd_oracle_eval(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    dataset = Path(args.dataset)
    report = ceiling_report(
        dataset,
        variant=args.variant,
        context_len=args.context,
        k_max=args.k_max,
        limit=args.limit,
    )
    report_name = f"ceiling_{args.variant}.json"
    with open(out / report_name, "w", encoding="ascii") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    names = [report_name]
    if args.emit_predictions:
        for k in range(1, args.k_max + 1):
            pred_name = f"oracle_pred_{args.variant}_k{k}.jsonl"
            insts = iter_instances(dataset, validate="none")
            if args.limit:
                insts = itertools.islice(insts, args.limit)
            with open(out / pred_name, "w", encoding="ascii") as f:
                for rec in oracle_prediction_records(
                    insts, variant=args.variant, k=k, context_len=args.context
                ):
                    f.write(json.dumps(rec, separators=(",", ":")) + "\n")
            names.append(pred_name)
    _write_run_manifest(
        out,
        "oracle-eval",
        {"variant": args.variant, "context_len": args.context, "k_max": args.k_max,
         "limit": args.limit},
        inputs={str(dataset): file_sha256(dataset)},
        outputs=_digests(out, names),
    )
    print(f"ceilings ({args.variant}, context {args.context}):")
    for k, cell in sorted(report["per_k"].items()):
        print(
            f"  k={k}: strict={cell['exact_match_ceiling']:.4f} "
            f"guess-optimal={cell['guess_optimal_ceiling']:.4f} "
            f"mean-determined-cells={cell['mean_determined_cells']:.4f}"
        )
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    reports = []
    names = []
    for i, pred in enumerate(args.pred):
        rep = evaluate_run(pred, args.gold, oracle_report=args.oracle)
        reports.append(rep)
        name = "report.json" if len(args.pred) == 1 else f"report_{i}.json"
        with open(out / name, "w", encoding="ascii") as f:
            json.dump(rep.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        names.append(name)
        print(f"== {pred}")
        print(rep.render_table())
    if len(reports) > 1:
        summary = summarize_runs(reports)
        with open(out / "summary.json", "w", encoding="ascii") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        names.append("summary.json")
        print("== across runs (mean ± std)")
        for key, cell in sorted(summary.items()):
            mean_key = "exact_match_mean" if "exact_match_mean" in cell else "mean"
            std_key = "exact_match_std" if "exact_match_std" in cell else "std"
            print(f"  {key}: {cell[mean_key]:.4f} ± {cell[std_key]:.4f} (n={cell['runs']})")
    inputs = {p: file_sha256(p) for p in args.pred}
    inputs[args.gold] = file_sha256(args.gold)
    if args.oracle:
        inputs[args.oracle] = file_sha256(args.oracle)
    _write_run_manifest(
        out, "score", {"n_pred_files": len(args.pred)}, inputs=inputs,
        outputs=_digests(out, names),
    )
    return 0


def _cmd_score_groupmul(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    report = score_groupmul(args.pred, args.gold, threshold=args.threshold)
    with open(out / "groupmul_report.json", "w", encoding="ascii") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_run_manifest(
        out,
        "score-groupmul",
        {"threshold": args.threshold},
        inputs={args.pred: file_sha256(args.pred), args.gold: file_sha256(args.gold)},
        outputs=_digests(out, ["groupmul_report.json"]),
    )
    for length, cell in sorted(report["per_length"].items(), key=lambda kv: int(kv[0])):
        verdict = "pass" if cell["pass"] else "FAIL"
        print(
            f"  len={length}: position={cell['position_accuracy']:.4f} "
            f"sequence={cell['sequence_accuracy']:.4f} [{verdict}]"
        )
    print(f"overall position accuracy: {report['overall_position_accuracy']:.4f}")
    return 0


def _cmd_gen_groupmul(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    group = make_group(args.group)
    lengths = tuple(int(v) for v in args.lengths.split(","))
    generate_groupmul_dataset(
        group, out, lengths=lengths, n_per_length=args.n, master_seed=args.seed
    )
    _write_run_manifest(
        out,
        "gen-groupmul",
        {"group": group.name, "lengths": list(lengths), "n_per_length": args.n},
        inputs={},
        outputs=_digests(out, ["samples.jsonl", "manifest.json"]),
        extra={"seed": args.seed},
    )
    print(f"wrote {args.n * len(lengths)} samples to {out / 'samples.jsonl'}")
    return 0


def _cmd_verify_disjoint(args: argparse.Namespace) -> int:
    ok, overlaps = verify_disjoint(args.train, args.test)
    print(f"overlapping rules: {overlaps} ({'disjoint' if ok else 'NOT disjoint'})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cabench",
        description="Generate, serve, and score rule-inference and state-tracking benchmarks.",
    )
    parser.add_argument("--version", action="version", version=f"cabench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-ca", help="generate a lattice-evolution dataset")
    p.add_argument("--seed", type=int, required=True, help="64-bit master seed")
    p.add_argument("--preset", choices=["paper"], default=None,
                   help="headline configuration bundle (W=20, r=2, T=20, 950k/100k); "
                        "overrides the shape flags below")
    p.add_argument("--w", type=int, default=20, help="lattice width")
    p.add_argument("--r", type=int, default=2, help="neighborhood radius")
    p.add_argument("--t", type=int, default=20, help="orbit length")
    p.add_argument("--context", type=int, default=10, help="context states per instance")
    p.add_argument("--n-train", type=int, default=950_000)
    p.add_argument("--n-test", type=int, default=100_000)
    p.add_argument("--dedup-train-rules", action="store_true",
                   help="also reject duplicate train rules (serial generation)")
    p.add_argument("--workers", type=int, default=1, help="parallel generation workers")
    p.add_argument("--out", default=None, help="output directory (default: $CABENCH_OUT or .)")
    p.set_defaults(func=_cmd_gen_ca)

    p = sub.add_parser("emit-tasks", help="emit tokenized task samples from a dataset file")
    p.add_argument("--dataset", required=True, help="instance file (train.jsonl or test.jsonl)")
    p.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    p.add_argument("--k", type=int, required=True, help="look-ahead 1..4")
    p.add_argument("--context", type=int, default=10)
    p.add_argument("--mask-slot", action="store_true",
                   help="append a <mask> placeholder after <gen>")
    p.add_argument("--raw-text", action="store_true",
                   help="also write the bare concatenated lines for diffing")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_emit_tasks)

    p = sub.add_parser("oracle-eval", help="compute analytic ceilings for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", default="os", choices=[v.value for v in Variant])
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--context", type=int, default=10)
    p.add_argument("--limit", type=int, default=None, help="cap instances read")
    p.add_argument("--emit-predictions", action="store_true",
                   help="also write the oracle's own prediction files")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_oracle_eval)

    p = sub.add_parser("score", help="score prediction file(s) against a task file")
    p.add_argument("--pred", nargs="+", required=True, help="prediction file(s)")
    p.add_argument("--gold", required=True, help="tokenized task file")
    p.add_argument("--oracle", default=None, help="ceiling report for reference columns")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("score-groupmul", help="score group-task label predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--threshold", type=float, default=0.70)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_score_groupmul)

    p = sub.add_parser("gen-groupmul", help="generate group prefix-product samples")
    p.add_argument("--group", required=True, choices=list(GROUP_NAMES))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lengths", default=",".join(str(v) for v in DEFAULT_LENGTHS))
    p.add_argument("--n", type=int, default=1000, help="samples per length")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gen_groupmul)

    p = sub.add_parser("verify-disjoint", help="count rules shared between two instance files")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=_cmd_verify_disjoint)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as e:
        print(f"cabench: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
