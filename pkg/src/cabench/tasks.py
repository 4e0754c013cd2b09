"""Token sequences for the prediction tasks, and parsing of model output.

Five variants, all sharing a bit-level vocabulary. With a context of C
states from an orbit of T states (1-based positions):

  os     input: states 1..C joined by <sep>, then <gen>
         target: state C+k
  oo     same input; target: states C+1 .. C+k joined by <sep>
  ors    same input; target: rule string, <sep>, state C+k (rule first)
  ros    input: rule string, <sep>, states 1..C joined by <sep>, then <gen>
         target: state C+k
  multi  input: states 1..C, then <shift_k>, then <gen>; target: state C+k
         (one model serves all four horizons, the shift token selects one)

Each state/rule character is its own token; special tokens are the literal
glyphs <sep>, <gen>, <mask>, <shift_1>..<shift_4>. A sample's wire form is
the plain concatenation of its token glyphs, so files diff cleanly against
hand-written references.

The <mask> token is emitted only when `mask_slot=True`: some consumers want
an explicit placeholder after <gen> for the value being predicted into;
the default prompt simply ends at <gen>.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .datagen import Instance

__all__ = [
    "Vocab",
    "VOCAB",
    "Variant",
    "TaskSample",
    "Span",
    "ParsedPrediction",
    "emit",
    "emit_multi_horizon",
    "parse_prediction",
    "tokenize",
    "emit_task_file",
    "read_task_file",
    "TaskRecord",
]

SEP = "<sep>"
GEN = "<gen>"
MASK = "<mask>"
SHIFTS = ("<shift_1>", "<shift_2>", "<shift_3>", "<shift_4>")

MAX_LOOKAHEAD = 4


@dataclass(frozen=True)
class Vocab:
    """Fixed token inventory with stable integer ids."""

    tokens: tuple[str, ...]

    def id_of(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise KeyError(f"unknown token {token!r}") from None

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    def manifest(self) -> dict:
        return {"tokens": {tok: i for i, tok in enumerate(self.tokens)}}


VOCAB = Vocab(tokens=("0", "1", SEP, GEN, MASK) + SHIFTS)


class Variant(str, Enum):
    OS = "os"
    OO = "oo"
    ORS = "ors"
    ROS = "ros"
    MULTI = "multi"

    @classmethod
    def parse(cls, name: str) -> "Variant":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(
                f"unknown task variant {name!r}; expected one of "
                f"{[v.value for v in cls]}"
            ) from None


@dataclass(frozen=True)
class Span:
    """Labeled half-open range into a token sequence."""

    label: str
    start: int
    stop: int


@dataclass(frozen=True)
class TaskSample:
    instance_id: int
    variant: Variant
    k: int
    input_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    target_spans: tuple[Span, ...]

    @property
    def input_text(self) -> str:
        return "".join(self.input_tokens)

    @property
    def target_text(self) -> str:
        return "".join(self.target_tokens)

    @property
    def line(self) -> str:
        """Input and target concatenated, the raw-text wire form."""
        return self.input_text + self.target_text


def _chars(s: str) -> list[str]:
    return list(s)


def _check_emit_args(instance: Instance, variant: Variant, k: int, context_len: int) -> None:
    T = len(instance.orbit.states)
    if not 1 <= k <= MAX_LOOKAHEAD:
        raise ValueError(f"look-ahead k must be in 1..{MAX_LOOKAHEAD}, got {k}")
    if context_len < 1:
        raise ValueError(f"context_len must be >= 1, got {context_len}")
    horizon = context_len + k
    if horizon > T:
        raise ValueError(
            f"target at position {horizon} exceeds orbit length {T} "
            f"(context_len={context_len}, k={k})"
        )


def emit(
    instance: Instance,
    variant: Variant | str,
    k: int,
    context_len: int = 10,
    mask_slot: bool = False,
) -> TaskSample:
    """Token sequence for one instance, variant, and look-ahead."""
    variant = Variant.parse(variant) if isinstance(variant, str) else variant
    _check_emit_args(instance, variant, k, context_len)
    states = [s.to_string() for s in instance.orbit.states]
    rule_str = instance.rule.to_string()
    W = instance.orbit.width

    input_tokens: list[str] = []
    if variant is Variant.ROS:
        input_tokens += _chars(rule_str) + [SEP]
    for i, s in enumerate(states[:context_len]):
        if i:
            input_tokens.append(SEP)
        input_tokens += _chars(s)
    if variant is Variant.MULTI:
        input_tokens.append(SHIFTS[k - 1])
    input_tokens.append(GEN)
    if mask_slot:
        input_tokens.append(MASK)

    target_tokens: list[str] = []
    spans: list[Span] = []
    if variant is Variant.OO:
        for h in range(1, k + 1):
            if h > 1:
                target_tokens.append(SEP)
            start = len(target_tokens)
            target_tokens += _chars(states[context_len + h - 1])
            spans.append(Span(f"state+{h}", start, start + W))
    elif variant is Variant.ORS:
        target_tokens += _chars(rule_str)
        spans.append(Span("rule", 0, len(rule_str)))
        target_tokens.append(SEP)
        start = len(target_tokens)
        target_tokens += _chars(states[context_len + k - 1])
        spans.append(Span(f"state+{k}", start, start + W))
    else:  # OS, ROS, MULTI: the single look-ahead state
        target_tokens += _chars(states[context_len + k - 1])
        spans.append(Span(f"state+{k}", 0, W))

    return TaskSample(
        instance_id=instance.id,
        variant=variant,
        k=k,
        input_tokens=tuple(input_tokens),
        target_tokens=tuple(target_tokens),
        target_spans=tuple(spans),
    )


def emit_multi_horizon(
    instance: Instance, k: int, context_len: int = 10, mask_slot: bool = False
) -> TaskSample:
    """Shift-token format: the prompt itself says how far ahead to predict."""
    return emit(instance, Variant.MULTI, k, context_len, mask_slot=mask_slot)


def tokenize(text: str) -> list[str]:
    """Split a wire-form string back into vocabulary tokens.

    Raises ValueError on any character sequence that is not a token.
    """
    tokens: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "<":
            j = text.find(">", i)
            if j < 0:
                raise ValueError(f"unterminated special token at offset {i}")
            tok = text[i : j + 1]
            if tok not in VOCAB:
                raise ValueError(f"unknown special token {tok!r} at offset {i}")
            tokens.append(tok)
            i = j + 1
        elif c in ("0", "1"):
            tokens.append(c)
            i += 1
        else:
            raise ValueError(f"unexpected character {c!r} at offset {i}")
    return tokens


@dataclass(frozen=True)
class ParsedPrediction:
    """Outcome of decoding a model's raw tokens for one sample.

    `ok` is False when the output does not have the exact shape the variant
    requires; such predictions score zero but never abort an evaluation.
    """

    ok: bool
    states: tuple[str, ...] = ()
    rule: str | None = None
    reason: str | None = None


def _fail(reason: str) -> ParsedPrediction:
    return ParsedPrediction(ok=False, reason=reason)


def parse_prediction(
    tokens: Sequence[str] | str,
    variant: Variant | str,
    k: int,
    width: int,
    rule_len: int = 32,
) -> ParsedPrediction:
    """Recover states (and rule, for ors) from predicted tokens."""
    variant = Variant.parse(variant) if isinstance(variant, str) else variant
    if isinstance(tokens, str):
        try:
            tokens = tokenize(tokens)
        except ValueError as e:
            return _fail(str(e))
    fields: list[str] = [""]
    for tok in tokens:
        if tok == SEP:
            fields.append("")
        elif tok in ("0", "1"):
            fields[-1] += tok
        else:
            return _fail(f"unexpected token {tok!r} in prediction")

    if variant is Variant.OO:
        if len(fields) != k:
            return _fail(f"expected {k} states, got {len(fields)} fields")
        states = fields
    elif variant is Variant.ORS:
        if len(fields) != 2:
            return _fail(f"expected rule and state, got {len(fields)} fields")
        rule, state = fields
        if len(rule) != rule_len:
            return _fail(f"rule has {len(rule)} bits, expected {rule_len}")
        if len(state) != width:
            return _fail(f"state has {len(state)} bits, expected {width}")
        return ParsedPrediction(ok=True, states=(state,), rule=rule)
    else:
        if len(fields) != 1:
            return _fail(f"expected a single state, got {len(fields)} fields")
        states = fields

    for s in states:
        if len(s) != width:
            return _fail(f"state has {len(s)} bits, expected {width}")
    return ParsedPrediction(ok=True, states=tuple(states))


# ---------------------------------------------------------------------------
# Task files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskRecord:
    """One line of a tokenized-sample file."""

    instance_id: int
    variant: Variant
    k: int
    input: str
    target: str


def sample_to_record(sample: TaskSample) -> TaskRecord:
    return TaskRecord(
        instance_id=sample.instance_id,
        variant=sample.variant,
        k=sample.k,
        input=sample.input_text,
        target=sample.target_text,
    )


def emit_task_file(
    samples: Iterable[TaskSample],
    path: str | Path,
    raw_text_path: str | Path | None = None,
) -> int:
    """Write samples as JSONL; optionally also the bare concatenated lines.

    Returns the number of records written.
    """
    n = 0
    raw = open(raw_text_path, "w", encoding="ascii") if raw_text_path else None
    try:
        with open(path, "w", encoding="ascii") as f:
            for s in samples:
                rec = {
                    "instance_id": s.instance_id,
                    "variant": s.variant.value,
                    "k": s.k,
                    "input": s.input_text,
                    "target": s.target_text,
                }
                f.write(json.dumps(rec, separators=(",", ":")))
                f.write("\n")
                if raw:
                    raw.write(s.line)
                    raw.write("\n")
                n += 1
    finally:
        if raw:
            raw.close()
    return n


def read_task_file(path: str | Path) -> Iterator[TaskRecord]:
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield TaskRecord(
                    instance_id=int(obj["instance_id"]),
                    variant=Variant.parse(obj["variant"]),
                    k=int(obj["k"]),
                    input=str(obj["input"]),
                    target=str(obj["target"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: line {line_no}: bad task record: {e}") from e
