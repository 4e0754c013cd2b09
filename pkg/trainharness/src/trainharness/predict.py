"""Greedy decoding into the scorer's prediction-file format."""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .data import TaskData, Vocab
from .models import SequenceModel
from .training import greedy_decode

__all__ = ["write_predictions"]


@torch.no_grad()
def write_predictions(
    model: SequenceModel,
    data: TaskData,
    vocab: Vocab,
    out_path: str | Path,
    batch_size: int = 256,
) -> int:
    """Decode every sample and write {"instance_id","variant","k","tokens"} lines.

    The decoder emits exactly as many tokens as the task's target span, so
    the output always re-tokenizes cleanly (parse validity is still up to
    the model: a stray separator scores zero downstream).
    """
    model.eval()
    device = next(model.parameters()).device
    n = len(data)
    written = 0
    with open(out_path, "w", encoding="ascii") as f:
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            prefix = data.tokens[start:stop, : data.input_len].to(device)
            out = greedy_decode(model, prefix, data.target_len)
            for row in range(stop - start):
                text = vocab.detokenize([int(v) for v in out[row]])
                rec = {
                    "instance_id": data.instance_ids[start + row],
                    "variant": data.variant,
                    "k": data.k,
                    "tokens": text,
                }
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")
                written += 1
    return written
