"""Seeded, reproducible benchmark-instance generation with disjoint rule splits.

An instance is a random rule plus a random initial lattice, evolved for a
fixed number of steps. Test-split rules are drawn first; train-split
sampling rejects any rule whose table appears in the test set, so the two
splits share no rule by construction. Duplicate rules *within* a split are
allowed (deduplicating would bias the rule distribution); an optional flag
deduplicates train rules for sensitivity studies at the cost of serial
generation.

Every instance is a pure function of (master_seed, split, id) through the
counter-based generator in `rng`, so generation is embarrassingly parallel
over ids and byte-identical regardless of worker count or scheduling.

File formats
------------
Instance file (`train.jsonl` / `test.jsonl`): one JSON object per line,
  {"id": int, "split": "train"|"test", "rule": "<2^(2r+1) chars>",
   "states": ["<W chars>", ... T entries]}
Manifest (`manifest.json`): full config, RNG algorithm name, per-file
  sha256 digest and record count, and a digest of the sorted unique
  test-rule strings.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import __version__
from .ca import CaState, Orbit, Rule, orbit, orbit_packed
from .rng import RNG_ALGORITHM, STREAM_TEST, STREAM_TRAIN, blocks

__all__ = [
    "DatasetConfig",
    "Instance",
    "DatasetFormatError",
    "GenerationError",
    "PAPER_PRESET",
    "sample_instance",
    "build_dataset",
    "verify_disjoint",
    "iter_instances",
    "instance_to_line",
    "line_to_instance",
    "load_manifest",
    "file_sha256",
]

_CHUNK = 16384
_MAX_REJECTIONS = 1000

SPLITS = ("train", "test")
_STREAM_OF = {"train": STREAM_TRAIN, "test": STREAM_TEST}


class DatasetFormatError(ValueError):
    """Malformed instance record; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class GenerationError(RuntimeError):
    """Internal generation invariant violated (should be impossible)."""


@dataclass(frozen=True)
class DatasetConfig:
    """Shape and seeding of one generated dataset."""

    master_seed: int
    width: int = 20
    radius: int = 2
    steps: int = 20
    context_len: int = 10
    n_train: int = 950_000
    n_test: int = 100_000
    dedup_train_rules: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.width < 2 * self.radius + 1:
            raise ValueError(
                f"width {self.width} too small for radius {self.radius} "
                f"(needs >= {2 * self.radius + 1})"
            )
        if self.context_len < 1:
            raise ValueError(f"context_len must be >= 1, got {self.context_len}")
        if self.context_len + 4 > self.steps:
            raise ValueError(
                f"orbit length {self.steps} too short: need context_len + 4 <= steps "
                f"(context_len={self.context_len})"
            )
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("split sizes must be non-negative")

    @property
    def n_rule_entries(self) -> int:
        return 1 << (2 * self.radius + 1)

    def split_size(self, split: str) -> int:
        _check_split(split)
        return self.n_train if split == "train" else self.n_test

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        return cls(**d)


# The headline configuration: 20-cell lattice, radius 2, 20-step orbits,
# 10-state context, 950k train / 100k test instances.
PAPER_PRESET = DatasetConfig(master_seed=0)


@dataclass(frozen=True)
class Instance:
    id: int
    split: str
    rule: Rule
    orbit: Orbit


def _check_split(split: str) -> None:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")


def _packed_capable(config: DatasetConfig) -> bool:
    return config.width <= 63 and config.radius <= 2


def holdout_rule_tables(config: DatasetConfig) -> np.ndarray:
    """Sorted unique rule tables of the test split (the train rejection set)."""
    if config.n_test == 0:
        return np.empty(0, dtype=np.uint64)
    ids = np.arange(config.n_test, dtype=np.uint64)
    mask = np.uint64((1 << config.n_rule_entries) - 1)
    tables = blocks(config.master_seed, STREAM_TEST, ids, draw=0)[:, 0] & mask
    return np.unique(tables)


def _in_sorted(sorted_vals: np.ndarray, queries: np.ndarray) -> np.ndarray:
    if sorted_vals.size == 0:
        return np.zeros(queries.shape, dtype=bool)
    idx = np.searchsorted(sorted_vals, queries)
    idx_c = np.minimum(idx, sorted_vals.size - 1)
    return sorted_vals[idx_c] == queries


def _draw_pairs(
    config: DatasetConfig, split: str, ids: np.ndarray, reject_tables: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    """(rule tables, initial states) for `ids`, applying rejection for train.

    A rejected draw redraws the (rule, state) pair together from the next
    draw index of the same per-id counter stream, so results do not depend
    on which other ids are being generated.
    """
    rule_mask = np.uint64((1 << config.n_rule_entries) - 1)
    state_mask = np.uint64((1 << config.width) - 1)
    stream = _STREAM_OF[split]
    b = blocks(config.master_seed, stream, ids, draw=0)
    tables = b[:, 0] & rule_mask
    states = b[:, 1] & state_mask
    if split == "train" and reject_tables is not None and reject_tables.size:
        pending = _in_sorted(reject_tables, tables)
        draw = 1
        while pending.any():
            if draw > _MAX_REJECTIONS:
                raise GenerationError(
                    f"rule rejection did not terminate after {_MAX_REJECTIONS} draws"
                )
            sel = np.nonzero(pending)[0]
            b = blocks(config.master_seed, stream, ids[sel], draw=draw)
            tables[sel] = b[:, 0] & rule_mask
            states[sel] = b[:, 1] & state_mask
            pending[sel] = _in_sorted(reject_tables, tables[sel])
            draw += 1
    return tables, states


def sample_instance(
    config: DatasetConfig, split: str, instance_id: int, _reject: np.ndarray | None = None
) -> Instance:
    """Deterministic instance for (master_seed, split, id); scalar path."""
    _check_split(split)
    if not 0 <= instance_id < config.split_size(split):
        raise ValueError(
            f"instance id {instance_id} out of range for {split} split "
            f"of size {config.split_size(split)}"
        )
    if split == "train" and _reject is None:
        _reject = holdout_rule_tables(config)
    ids = np.array([instance_id], dtype=np.uint64)
    tables, states = _draw_pairs(config, split, ids, _reject)
    rule = Rule(radius=config.radius, table=int(tables[0]))
    init = CaState(packed=int(states[0]), width=config.width)
    return Instance(id=instance_id, split=split, rule=rule, orbit=orbit(init, rule, config.steps))


# ---------------------------------------------------------------------------
# Record codec
# ---------------------------------------------------------------------------


def _table_to_string(table: int, n_entries: int) -> str:
    # character i of the rule string is bit i of the table
    return format(table, f"0{n_entries}b")[::-1]


def instance_to_line(inst: Instance) -> str:
    states = ",".join(f'"{s.to_string()}"' for s in inst.orbit.states)
    return (
        f'{{"id":{inst.id},"split":"{inst.split}","rule":"{inst.rule.to_string()}",'
        f'"states":[{states}]}}'
    )


def line_to_instance(line: str, line_no: int | None = None, validate: bool = False) -> Instance:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"invalid JSON ({e.msg})", line_no) from e
    try:
        rule = Rule.from_string(obj["rule"])
        states = tuple(CaState.from_string(s) for s in obj["states"])
        inst = Instance(
            id=int(obj["id"]),
            split=str(obj["split"]),
            rule=rule,
            orbit=Orbit(rule=rule, states=states),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"bad record: {e}", line_no) from e
    _check_split(inst.split)
    if validate:
        try:
            inst.orbit.validate()
        except ValueError as e:
            raise DatasetFormatError(str(e), line_no) from e
    return inst


def iter_instances(path: str | Path, validate: str = "spot") -> Iterator[Instance]:
    """Stream instances from a file.

    validate: "none", "spot" (recompute orbits for ~1% of records,
    deterministically those with id % 100 == 0), or "all".
    """
    if validate not in ("none", "spot", "all"):
        raise ValueError(f"validate must be none|spot|all, got {validate!r}")
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            inst = line_to_instance(line, line_no)
            if validate == "all" or (validate == "spot" and inst.id % 100 == 0):
                try:
                    inst.orbit.validate()
                except ValueError as e:
                    raise DatasetFormatError(str(e), line_no) from e
            yield inst


# ---------------------------------------------------------------------------
# Bulk generation
# ---------------------------------------------------------------------------


def _chunk_lines(
    config: DatasetConfig, split: str, start: int, stop: int, reject: np.ndarray | None
) -> bytes:
    if not _packed_capable(config):
        lines = [
            instance_to_line(sample_instance(config, split, i, _reject=reject))
            for i in range(start, stop)
        ]
        return ("\n".join(lines) + "\n").encode("ascii")

    ids = np.arange(start, stop, dtype=np.uint64)
    tables, states = _draw_pairs(config, split, ids, reject)
    if split == "train" and reject is not None and _in_sorted(reject, tables).any():
        raise GenerationError("train rule overlaps test set after rejection")
    orbits = orbit_packed(states, tables, config.width, config.radius, config.steps)
    state_fmt = f"0{config.width}b"
    rule_fmt = f"0{config.n_rule_entries}b"
    parts: list[str] = []
    orb_list = orbits.tolist()  # python ints format much faster than np.uint64
    tab_list = tables.tolist()
    for i, inst_id in enumerate(range(start, stop)):
        rule_str = format(tab_list[i], rule_fmt)[::-1]
        states_json = ",".join(f'"{format(v, state_fmt)}"' for v in orb_list[i])
        parts.append(
            f'{{"id":{inst_id},"split":"{split}","rule":"{rule_str}","states":[{states_json}]}}\n'
        )
    return "".join(parts).encode("ascii")


_POOL_CTX: dict = {}


def _pool_init(config_dict: dict, split: str, reject: np.ndarray | None) -> None:
    _POOL_CTX["config"] = DatasetConfig.from_dict(config_dict)
    _POOL_CTX["split"] = split
    _POOL_CTX["reject"] = reject


def _pool_chunk(bounds: tuple[int, int]) -> bytes:
    return _chunk_lines(
        _POOL_CTX["config"], _POOL_CTX["split"], bounds[0], bounds[1], _POOL_CTX["reject"]
    )


def _write_split(
    config: DatasetConfig, split: str, path: Path, reject: np.ndarray | None, workers: int
) -> dict:
    n = config.split_size(split)
    digest = hashlib.sha256()
    bounds = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    with open(path, "wb") as f:
        if workers <= 1 or len(bounds) <= 1:
            for s, e in bounds:
                data = _chunk_lines(config, split, s, e, reject)
                digest.update(data)
                f.write(data)
        else:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_pool_init,
                initargs=(config.to_dict(), split, reject),
            ) as pool:
                for data in pool.map(_pool_chunk, bounds):
                    digest.update(data)
                    f.write(data)
    return {"sha256": digest.hexdigest(), "records": n}


def _write_train_dedup(config: DatasetConfig, path: Path, reject: np.ndarray) -> dict:
    """Serial train generation that also rejects rules already accepted."""
    seen: set[int] = set()
    digest = hashlib.sha256()
    rule_mask = np.uint64((1 << config.n_rule_entries) - 1)
    state_mask = np.uint64((1 << config.width) - 1)
    with open(path, "wb") as f:
        for i in range(config.n_train):
            ids = np.array([i], dtype=np.uint64)
            table = state = None
            for draw in range(_MAX_REJECTIONS + 1):
                b = blocks(config.master_seed, STREAM_TRAIN, ids, draw=draw)
                cand = int(b[0, 0] & rule_mask)
                if cand not in seen and not bool(_in_sorted(reject, np.array([cand], dtype=np.uint64))[0]):
                    table, state = cand, int(b[0, 1] & state_mask)
                    break
            if table is None:
                raise GenerationError(f"dedup rejection did not terminate for id {i}")
            seen.add(table)
            rule = Rule(radius=config.radius, table=table)
            init = CaState(packed=state, width=config.width)
            inst = Instance(id=i, split="train", rule=rule, orbit=orbit(init, rule, config.steps))
            data = (instance_to_line(inst) + "\n").encode("ascii")
            digest.update(data)
            f.write(data)
    return {"sha256": digest.hexdigest(), "records": config.n_train}


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _test_rule_set_digest(reject: np.ndarray, n_entries: int) -> str:
    digest = hashlib.sha256()
    for t in reject.tolist():  # already sorted unique
        digest.update(_table_to_string(t, n_entries).encode("ascii"))
        digest.update(b"\n")
    return digest.hexdigest()


def build_dataset(config: DatasetConfig, out_dir: str | Path, workers: int = 1) -> dict:
    """Generate both splits plus manifest under `out_dir`; returns the manifest.

    Pure function of `config`: re-running produces byte-identical files,
    with any worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reject = holdout_rule_tables(config)

    test_info = _write_split(config, "test", out / "test.jsonl", None, workers)
    if config.dedup_train_rules:
        train_info = _write_train_dedup(config, out / "train.jsonl", reject)
    else:
        train_info = _write_split(config, "train", out / "train.jsonl", reject, workers)

    manifest = {
        "format": "cabench-dataset",
        "tool_version": __version__,
        "config": config.to_dict(),
        "rng": RNG_ALGORITHM,
        "files": {"train.jsonl": train_info, "test.jsonl": test_info},
        "test_rule_set_sha256": _test_rule_set_digest(reject, config.n_rule_entries),
    }
    with open(out / "manifest.json", "w", encoding="ascii") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_manifest(dataset_dir: str | Path) -> dict:
    with open(Path(dataset_dir) / "manifest.json", "r", encoding="ascii") as f:
        return json.load(f)


def verify_disjoint(train_path: str | Path, test_path: str | Path) -> tuple[bool, int]:
    """Count train records whose rule string appears anywhere in the test split."""
    test_rules: set[str] = set()
    with open(test_path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            test_rules.add(line_to_instance(line, line_no).rule.to_string())
    overlaps = 0
    with open(train_path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line_to_instance(line, line_no).rule.to_string() in test_rules:
                overlaps += 1
    return overlaps == 0, overlaps
