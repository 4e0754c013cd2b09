"""Reading the benchmark's tokenized task files and vocabulary manifest.

The generator writes samples as JSONL records {"instance_id", "variant",
"k", "input", "target"} whose input/target are concatenated token glyphs,
and publishes the token-to-id mapping in its run manifest. This module
re-tokenizes the glyph strings against that mapping and packs fixed-shape
id tensors for training: within one task file every record has identical
input and target lengths, so batches are plain stacks.

Training sequences are input+target; the loss mask selects exactly the
positions whose next-token label lies inside the target span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import Tensor

__all__ = ["Vocab", "TaskData", "load_vocab", "load_task_data", "DEFAULT_VOCAB_TOKENS"]

DEFAULT_VOCAB_TOKENS = {
    "0": 0, "1": 1, "<sep>": 2, "<gen>": 3, "<mask>": 4,
    "<shift_1>": 5, "<shift_2>": 6, "<shift_3>": 7, "<shift_4>": 8,
}


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict

    @property
    def size(self) -> int:
        return max(self.token_to_id.values()) + 1

    @property
    def id_to_token(self) -> dict:
        return {i: t for t, i in self.token_to_id.items()}

    def tokenize(self, text: str) -> list[int]:
        ids = []
        i = 0
        while i < len(text):
            if text[i] == "<":
                j = text.find(">", i)
                if j < 0:
                    raise ValueError(f"unterminated special token at offset {i}")
                tok = text[i : j + 1]
                i = j + 1
            else:
                tok = text[i]
                i += 1
            if tok not in self.token_to_id:
                raise ValueError(f"token {tok!r} not in vocabulary")
            ids.append(self.token_to_id[tok])
        return ids

    def detokenize(self, ids: list[int]) -> str:
        rev = self.id_to_token
        return "".join(rev[i] for i in ids)


def load_vocab(source: str | Path | dict | None = None) -> Vocab:
    """Vocabulary from a run manifest path, a mapping, or the default."""
    if source is None:
        return Vocab(dict(DEFAULT_VOCAB_TOKENS))
    if isinstance(source, dict):
        mapping = source.get("tokens", source)
        return Vocab({str(k): int(v) for k, v in mapping.items()})
    with open(source, "r", encoding="ascii") as f:
        manifest = json.load(f)
    if "vocab" in manifest:
        manifest = manifest["vocab"]
    mapping = manifest.get("tokens", manifest)
    return Vocab({str(k): int(v) for k, v in mapping.items()})


@dataclass
class TaskData:
    """Fixed-shape tensors for one task file."""

    tokens: Tensor        # (n, L) int64: input followed by target
    loss_mask: Tensor     # (n, L-1) bool over next-token positions
    input_len: int
    target_len: int
    instance_ids: list
    variant: str
    k: int
    inputs: list          # raw glyph strings, for decoding
    targets: list

    def __len__(self) -> int:
        return self.tokens.shape[0]


def load_task_data(path: str | Path, vocab: Vocab, limit: int | None = None) -> TaskData:
    inputs, targets, ids = [], [], []
    variant, k = None, None
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                ids.append(int(obj["instance_id"]))
                inputs.append(str(obj["input"]))
                targets.append(str(obj["target"]))
                variant = str(obj["variant"]) if variant is None else variant
                k = int(obj["k"]) if k is None else k
                if obj["variant"] != variant or int(obj["k"]) != k:
                    raise ValueError("mixed variants/horizons in one task file")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: record {line_no}: {e}") from e
            if limit is not None and len(ids) >= limit:
                break
    if not ids:
        raise ValueError(f"{path}: no task records")

    in_ids = [vocab.tokenize(s) for s in inputs]
    tgt_ids = [vocab.tokenize(s) for s in targets]
    in_len = len(in_ids[0])
    tgt_len = len(tgt_ids[0])
    for row, (a, b) in enumerate(zip(in_ids, tgt_ids)):
        if len(a) != in_len or len(b) != tgt_len:
            raise ValueError(f"{path}: record {row + 1}: ragged sample lengths")
    tokens = torch.tensor([a + b for a, b in zip(in_ids, tgt_ids)], dtype=torch.long)
    L = in_len + tgt_len
    # position j predicts token j+1; labels inside the target span are
    # positions in_len-1 .. L-2
    mask = torch.zeros(len(ids), L - 1, dtype=torch.bool)
    mask[:, in_len - 1 :] = True
    return TaskData(
        tokens=tokens,
        loss_mask=mask,
        input_len=in_len,
        target_len=tgt_len,
        instance_ids=ids,
        variant=variant,
        k=k,
        inputs=inputs,
        targets=targets,
    )
