"""Train/predict entry point for the reference harness.

    ca-train train --tasks FILE --vocab MANIFEST --out DIR [model/train flags]
    ca-train predict --checkpoint FILE --tasks FILE --out FILE

Checkpoints bundle the model weights with the model config and the
vocabulary they were trained with; predict refuses a task file whose
vocabulary does not match.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from . import __version__
from .data import load_task_data, load_vocab
from .models import ACT_MODES, ModelConfig, build_model, count_parameters
from .predict import write_predictions
from .training import OBJECTIVES, TrainConfig, exact_match_rate, train

__all__ = ["main"]


def _cmd_train(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = load_vocab(args.vocab)
    data = load_task_data(args.tasks, vocab, limit=args.limit)
    model_config = ModelConfig(
        vocab_size=vocab.size,
        max_seq_len=data.tokens.shape[1],
        arch=args.arch,
        layers=args.layers,
        d_model=args.d_model,
        n_heads=args.heads,
        act_mode=args.act_mode,
        max_hops=args.max_hops,
        fixed_hops=args.fixed_hops,
        epsilon=args.epsilon,
        tau=args.tau,
    )
    train_config = TrainConfig(
        objective=args.objective,
        steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        device=args.device,
    )
    eval_data = load_task_data(args.eval_tasks, vocab) if args.eval_tasks else None
    model, log = train(
        model_config, data, train_config,
        log_path=out / "train_log.jsonl",
        eval_data=eval_data,
        eval_every=args.eval_every if eval_data else None,
    )
    ckpt = {
        "model_state": model.state_dict(),
        "model_config": model_config.to_dict(),
        "vocab": vocab.token_to_id,
        "train_config": train_config.__dict__,
        "harness_version": __version__,
    }
    torch.save(ckpt, out / "checkpoint.pt")
    final = log[-1]
    print(f"trained {args.steps} steps ({count_parameters(model):,} params); "
          f"final loss {final['loss']:.4f}")
    if eval_data is not None:
        em = exact_match_rate(model, eval_data)
        print(f"held-out exact match: {em:.4f}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    ckpt = torch.load(args.checkpoint, map_location=args.device, weights_only=False)
    vocab = load_vocab({"tokens": ckpt["vocab"]})
    if args.vocab:
        file_vocab = load_vocab(args.vocab)
        if file_vocab.token_to_id != vocab.token_to_id:
            raise ValueError("vocabulary manifest does not match the checkpoint's vocabulary")
    config = ModelConfig.from_dict(ckpt["model_config"])
    data = load_task_data(args.tasks, vocab, limit=args.limit)
    if data.tokens.shape[1] > config.max_seq_len:
        raise ValueError(
            f"task sequences ({data.tokens.shape[1]} tokens) exceed the checkpoint's "
            f"maximum length {config.max_seq_len}"
        )
    model = build_model(config).to(args.device)
    model.load_state_dict(ckpt["model_state"])
    n = write_predictions(model, data, vocab, args.out)
    print(f"wrote {n} predictions to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ca-train",
        description="Reference neural trainer for the benchmark task files.",
    )
    parser.add_argument("--version", action="version", version=f"ca-train {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a tokenized task file")
    p.add_argument("--tasks", required=True)
    p.add_argument("--vocab", default=None, help="run manifest with the token mapping")
    p.add_argument("--eval-tasks", default=None)
    p.add_argument("--eval-every", type=int, default=500)
    p.add_argument("--objective", default="os", choices=list(OBJECTIVES))
    p.add_argument("--arch", default="transformer", choices=["transformer", "lstm"])
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--act-mode", default="none", choices=list(ACT_MODES))
    p.add_argument("--max-hops", type=int, default=4)
    p.add_argument("--fixed-hops", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--device", default="cpu")
    p.add_argument("--limit", type=int, default=None, help="cap training samples read")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="decode predictions for a task file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--vocab", default=None, help="optional manifest to cross-check")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as e:
        print(f"ca-train: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
