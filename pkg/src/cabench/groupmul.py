"""Prefix-product state tracking over small finite groups.

A sample is a sequence of uniformly drawn group elements; position i is
labeled with the running product of elements 1..i (left fold: the new
element multiplies on the right, p_i = p_{i-1} * g_i). Three groups of
order 60 span the difficulty range: the cyclic group (abelian, trivially
parallelizable), the direct product of the even permutations of four items
with a cyclic factor (solvable), and the even permutations of five items
(simple, the hard case for bounded-depth models).

Element ids are frozen so datasets are portable:
  z60    id = the residue itself, composition is addition mod 60
  a4xz5  id = 5 * rank(p) + z for an even permutation p of 4 items and a
         residue z mod 5; componentwise product
  a5     id = rank(p) among even permutations of 5 items
where rank() is the position in lexicographic order of the one-line
permutation word, and permutation product (a*b) applies b first.

Files: one JSON record per line {"group", "seq", "labels"}; the manifest
embeds the full multiplication-table digest plus the id scheme and product
orientation, so any implementation can be checked against it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import __version__
from .rng import RNG_ALGORITHM, STREAM_GROUP, bounded_words

__all__ = [
    "GroupSpec",
    "GroupSample",
    "make_group",
    "prefix_labels",
    "generate_groupmul_dataset",
    "score_groupmul",
    "read_group_samples",
    "GROUP_NAMES",
    "DEFAULT_LENGTHS",
]

GROUP_NAMES = ("z60", "a4xz5", "a5")
DEFAULT_LENGTHS = (5, 10, 15, 20, 40)

_GROUP_CODE = {name: i for i, name in enumerate(GROUP_NAMES)}


def _even_permutations(n: int) -> list[tuple[int, ...]]:
    """Even permutations of range(n) in lexicographic order of the word."""
    evens = []
    for p in permutations(range(n)):
        inversions = sum(
            1 for i in range(n) for j in range(i + 1, n) if p[i] > p[j]
        )
        if inversions % 2 == 0:
            evens.append(p)
    return evens


def _compose(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    """(a*b)(x) = a[b[x]]: apply b first, then a."""
    return tuple(a[b[x]] for x in range(len(a)))


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """A finite group presented as a multiplication table over ids 0..order-1."""

    name: str
    order: int
    identity: int
    table: np.ndarray = field(repr=False)
    element_labels: tuple[str, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if self.table.shape != (self.order, self.order):
            raise ValueError(
                f"table shape {self.table.shape} does not match order {self.order}"
            )
        self.table.setflags(write=False)

    def mul(self, a: int, b: int) -> int:
        if not (0 <= a < self.order and 0 <= b < self.order):
            raise ValueError(f"element ids must be in [0, {self.order}), got {a}, {b}")
        return int(self.table[a, b])

    def inverse(self, a: int) -> int:
        if not 0 <= a < self.order:
            raise ValueError(f"element id {a} out of range [0, {self.order})")
        return int(np.nonzero(self.table[a] == self.identity)[0][0])

    def table_sha256(self) -> str:
        return hashlib.sha256(
            ",".join(str(v) for v in self.table.reshape(-1).tolist()).encode("ascii")
        ).hexdigest()

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "order": self.order,
            "identity": self.identity,
            "element_labels": list(self.element_labels),
            "table_sha256": self.table_sha256(),
            "product_orientation": "left fold: p_i = p_{i-1} * g_i",
            "permutation_composition": "(a*b)(x) = a[b(x)], right operand applied first",
        }


def make_group(name: str) -> GroupSpec:
    """Build one of the three order-60 benchmark groups by name."""
    name = name.lower()
    if name == "z60":
        table = (np.arange(60)[:, None] + np.arange(60)[None, :]) % 60
        labels = tuple(str(i) for i in range(60))
        return GroupSpec(name=name, order=60, identity=0,
                         table=table.astype(np.int16), element_labels=labels)
    if name == "a4xz5":
        perms = _even_permutations(4)
        rank = {p: i for i, p in enumerate(perms)}
        table = np.empty((60, 60), dtype=np.int16)
        labels = []
        for pa in range(12):
            for za in range(5):
                labels.append(f"({''.join(map(str, perms[pa]))},{za})")
        for a in range(60):
            pa, za = divmod(a, 5)
            for b in range(60):
                pb, zb = divmod(b, 5)
                table[a, b] = rank[_compose(perms[pa], perms[pb])] * 5 + (za + zb) % 5
        return GroupSpec(name=name, order=60, identity=0,
                         table=table, element_labels=tuple(labels))
    if name == "a5":
        perms = _even_permutations(5)
        rank = {p: i for i, p in enumerate(perms)}
        table = np.empty((60, 60), dtype=np.int16)
        for a in range(60):
            for b in range(60):
                table[a, b] = rank[_compose(perms[a], perms[b])]
        labels = tuple("".join(map(str, p)) for p in perms)
        return GroupSpec(name=name, order=60, identity=rank[tuple(range(5))],
                         table=table, element_labels=labels)
    raise ValueError(f"unknown group {name!r}; expected one of {GROUP_NAMES}")


@dataclass(frozen=True)
class GroupSample:
    group: str
    seq: tuple[int, ...]
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.seq) != len(self.labels):
            raise ValueError(
                f"seq and labels lengths differ: {len(self.seq)} vs {len(self.labels)}"
            )


def prefix_labels(seq: Sequence[int], group: GroupSpec) -> tuple[int, ...]:
    """Running products: labels[0] = seq[0], labels[i] = labels[i-1] * seq[i]."""
    labels: list[int] = []
    acc: int | None = None
    for g in seq:
        if not 0 <= g < group.order:
            raise ValueError(f"element id {g} out of range [0, {group.order})")
        acc = g if acc is None else group.mul(acc, g)
        labels.append(acc)
    return tuple(labels)


def generate_groupmul_dataset(
    group: GroupSpec,
    out_dir: str | Path,
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    n_per_length: int = 1000,
    master_seed: int = 0,
) -> dict:
    """Write `n_per_length` samples per sequence length, plus a manifest.

    Sampling is keyed by (master_seed, group, length, sample index) through
    the counter-based generator, so output bytes depend only on arguments.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    group_code = _GROUP_CODE[group.name]
    table = group.table
    path = out / "samples.jsonl"
    digest = hashlib.sha256()
    n_records = 0
    with open(path, "wb") as f:
        for length in lengths:
            if length < 1:
                raise ValueError(f"sequence length must be >= 1, got {length}")
            if n_per_length == 0:
                continue
            ids = np.arange(n_per_length, dtype=np.uint64)
            seqs = bounded_words(
                master_seed, STREAM_GROUP, ids, length, group.order,
                subid=(group_code << 16) | length,
            )
            labels = np.empty_like(seqs)
            acc = seqs[:, 0]
            labels[:, 0] = acc
            for i in range(1, length):
                acc = table[acc, seqs[:, i]]
                labels[:, i] = acc
            for row in range(n_per_length):
                rec = (
                    f'{{"group":"{group.name}",'
                    f'"seq":{json.dumps(seqs[row].tolist(), separators=(",", ":"))},'
                    f'"labels":{json.dumps(labels[row].tolist(), separators=(",", ":"))}}}\n'
                ).encode("ascii")
                digest.update(rec)
                f.write(rec)
                n_records += 1
    manifest = {
        "format": "cabench-groupmul",
        "tool_version": __version__,
        "group": group.manifest(),
        "rng": RNG_ALGORITHM,
        "master_seed": master_seed,
        "lengths": list(lengths),
        "n_per_length": n_per_length,
        "files": {"samples.jsonl": {"sha256": digest.hexdigest(), "records": n_records}},
    }
    with open(out / "manifest.json", "w", encoding="ascii") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def read_group_samples(path: str | Path) -> Iterator[GroupSample]:
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield GroupSample(
                    group=str(obj["group"]),
                    seq=tuple(int(v) for v in obj["seq"]),
                    labels=tuple(int(v) for v in obj["labels"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: line {line_no}: bad sample record: {e}") from e


def score_groupmul(
    pred_path: str | Path,
    gold_path: str | Path,
    threshold: float = 0.70,
) -> dict:
    """Per-position and per-sequence accuracy against gold labels.

    Prediction file: one JSON object per line with a "labels" array,
    aligned with the gold file line by line. The pass/fail verdict applies
    `threshold` to per-position accuracy (each position carries its own
    label); the per-sequence all-correct rate is reported alongside.
    """
    gold = list(read_group_samples(gold_path))
    preds: list[list[int]] = []
    with open(pred_path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                preds.append([int(v) for v in obj["labels"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{pred_path}: line {line_no}: bad prediction: {e}") from e
    if len(preds) != len(gold):
        raise ValueError(
            f"prediction/gold record counts differ: {len(preds)} vs {len(gold)}"
        )

    by_length: dict[int, dict] = {}
    for row, (p, g) in enumerate(zip(preds, gold)):
        if len(p) != len(g.labels):
            raise ValueError(
                f"record {row + 1}: prediction has {len(p)} labels, gold has {len(g.labels)}"
            )
        n = len(g.labels)
        cell = by_length.setdefault(
            n, {"n_sequences": 0, "n_positions": 0, "correct_positions": 0,
                "correct_sequences": 0}
        )
        correct = sum(1 for a, b in zip(p, g.labels) if a == b)
        cell["n_sequences"] += 1
        cell["n_positions"] += n
        cell["correct_positions"] += correct
        cell["correct_sequences"] += int(correct == n)

    per_length = {}
    for n in sorted(by_length):
        cell = by_length[n]
        acc = cell["correct_positions"] / cell["n_positions"]
        per_length[str(n)] = {
            "n_sequences": cell["n_sequences"],
            "position_accuracy": acc,
            "sequence_accuracy": cell["correct_sequences"] / cell["n_sequences"],
            "pass": acc >= threshold,
        }
    total_pos = sum(c["n_positions"] for c in by_length.values())
    total_correct = sum(c["correct_positions"] for c in by_length.values())
    overall = total_correct / total_pos if total_pos else 0.0
    return {
        "threshold": threshold,
        "per_length": per_length,
        "overall_position_accuracy": overall,
        "all_lengths_pass": all(v["pass"] for v in per_length.values()) if per_length else False,
    }
