"""Training loop: causal next-token prediction over target spans.

All objectives share one loss shape (cross-entropy on the positions whose
label falls inside the target span, inputs masked out) and differ only in
which task file feeds them:

  os / ors / ros / multi_horizon   single-target files, loss on that span
  oo                               multi-state files, loss on every state
  cot                              same files as oo; the model is trained
                                   token-by-token through all intermediate
                                   states and reads its own generated steps
                                   back at inference, chain-of-thought style

When adaptive computation is on, the time penalty tau * mean(remainder)
(averaged over positions, and over layers for the layer-wise mode) is
added. Runs are deterministic given the seed up to backend kernel
nondeterminism, which is recorded in the log header.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import Tensor

from .act import act_loss
from .data import TaskData
from .models import ModelConfig, SequenceModel, build_model

__all__ = ["TrainConfig", "train", "batch_loss", "exact_match_rate", "greedy_decode"]

OBJECTIVES = ("os", "oo", "ors", "ros", "multi_horizon", "cot")


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "os"
    steps: int = 2000
    batch_size: int = 64
    lr: float = 3e-4
    weight_decay: float = 0.01
    seed: int = 0
    log_every: int = 50
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")


def batch_loss(
    model: SequenceModel, tokens: Tensor, loss_mask: Tensor, tau: float
) -> tuple[Tensor, Tensor, dict]:
    """(total loss, task loss, halting diagnostics) for one batch."""
    logits, states = model(tokens)
    # next-token prediction: logits at j score token j+1
    logits = logits[:, :-1, :]
    labels = tokens[:, 1:]
    ce = torch.nn.functional.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), labels.reshape(-1), reduction="none"
    ).reshape(labels.shape)
    task_loss = (ce * loss_mask).sum() / loss_mask.sum()
    diag = {}
    if states:
        remainders = model.remainders(states)
        total = act_loss(task_loss, remainders, tau)
        diag["mean_hops"] = sum(st.mean_hops for st in states) / len(states)
        diag["mean_remainder"] = sum(st.mean_remainder for st in states) / len(states)
    else:
        total = task_loss
    return total, task_loss, diag


def train(
    model_config: ModelConfig,
    data: TaskData,
    train_config: TrainConfig,
    log_path: str | Path | None = None,
    eval_data: TaskData | None = None,
    eval_every: int | None = None,
) -> tuple[SequenceModel, list[dict]]:
    """Train a fresh model on `data`; returns (model, training log)."""
    torch.manual_seed(train_config.seed)
    device = torch.device(train_config.device)
    model = build_model(model_config).to(device)
    opt = torch.optim.AdamW(
        model.parameters(), lr=train_config.lr, weight_decay=train_config.weight_decay
    )
    gen = torch.Generator().manual_seed(train_config.seed)
    tokens = data.tokens.to(device)
    mask = data.loss_mask.to(device)
    n = len(data)
    log: list[dict] = [
        {
            "event": "start",
            "objective": train_config.objective,
            "n_samples": n,
            "model": model_config.to_dict(),
            "seed": train_config.seed,
            "deterministic_backend": torch.are_deterministic_algorithms_enabled(),
        }
    ]
    model.train()
    order = torch.randperm(n, generator=gen)
    cursor = 0
    t0 = time.perf_counter()
    for step in range(1, train_config.steps + 1):
        if cursor + train_config.batch_size > n:
            order = torch.randperm(n, generator=gen)
            cursor = 0
        idx = order[cursor : cursor + train_config.batch_size]
        cursor += train_config.batch_size
        total, task_loss, diag = batch_loss(
            model, tokens[idx], mask[idx], model_config.tau
        )
        opt.zero_grad(set_to_none=True)
        total.backward()
        opt.step()
        if step % train_config.log_every == 0 or step == train_config.steps:
            entry = {
                "step": step,
                "loss": float(task_loss.detach()),
                "total_loss": float(total.detach()),
                "elapsed_s": time.perf_counter() - t0,
            }
            entry["mean_T"] = diag.get("mean_hops")
            entry["mean_R"] = diag.get("mean_remainder")
            if eval_data is not None and eval_every and step % eval_every == 0:
                entry["eval_exact_match"] = exact_match_rate(model, eval_data)
                model.train()
            log.append(entry)
    if log_path is not None:
        with open(log_path, "w", encoding="ascii") as f:
            for entry in log:
                f.write(json.dumps(entry) + "\n")
    return model, log


@torch.no_grad()
def greedy_decode(model: SequenceModel, prefix: Tensor, n_new: int) -> Tensor:
    """Append `n_new` argmax tokens to each row of `prefix` ((B, L) int64)."""
    model.eval()
    tokens = prefix
    for _ in range(n_new):
        logits, _ = model(tokens)
        nxt = logits[:, -1, :].argmax(dim=-1, keepdim=True)
        tokens = torch.cat([tokens, nxt], dim=1)
    return tokens[:, prefix.shape[1] :]


@torch.no_grad()
def exact_match_rate(
    model: SequenceModel,
    data: TaskData,
    batch_size: int = 256,
    limit: int | None = None,
    final_state_only: bool = False,
) -> float:
    """Fraction of samples whose greedy decode matches the target exactly.

    With `final_state_only`, only the tokens after the last separator count:
    the deepest-horizon state of a multi-state target, decoded through the
    model's own intermediate states. For single-state targets the two
    settings coincide.
    """
    model.eval()
    device = next(model.parameters()).device
    n = len(data) if limit is None else min(limit, len(data))
    hits = 0
    tail = data.target_len
    if final_state_only:
        # targets in one file share their shape; locate the last separator
        sep_positions = [i for i, c in enumerate(_split_tokens(data.targets[0])) if c == "<sep>"]
        if sep_positions:
            tail = data.target_len - (sep_positions[-1] + 1)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        prefix = data.tokens[start:stop, : data.input_len].to(device)
        target = data.tokens[start:stop, data.input_len :].to(device)
        out = greedy_decode(model, prefix, data.target_len)
        hits += int((out[:, -tail:] == target[:, -tail:]).all(dim=1).sum())
    return hits / n


def _split_tokens(text: str) -> list[str]:
    tokens = []
    i = 0
    while i < len(text):
        if text[i] == "<":
            j = text.index(">", i)
            tokens.append(text[i : j + 1])
            i = j + 1
        else:
            tokens.append(text[i])
            i += 1
    return tokens
