"""Scoring of model predictions: exact match, rule bit accuracy, depth score.

Predictions arrive as JSONL records {"instance_id", "variant", "k",
"tokens"} and are joined against the tokenized task file that produced the
prompts. Exact match is all-or-nothing on the state bits; anything that
fails to parse scores 0 and bumps a parse-failure counter rather than
aborting the run. Rule prediction is scored by bit accuracy, because a
prefix rarely pins every rule entry and exact match on the table would
mostly measure the unobservable remainder.

Multi-state predictions are scored per horizon: the j-th predicted state
counts toward horizon j, so one run at k=4 fills horizons 1..4.

The depth score condenses multi-step ability into one number:
1 + sum of exact-match accuracies at horizons 2..4, ranging 1 (single-step
only) to 4 (perfect through four steps).

Aggregation is order-independent: permuting prediction lines never changes
a reported number. Records whose key is unknown or duplicated are excluded
and listed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .tasks import TaskRecord, Variant, parse_prediction, read_task_file

__all__ = [
    "exact_match",
    "bit_accuracy",
    "depth_score",
    "evaluate_run",
    "EvalReport",
    "MetricCell",
    "PredictionRecord",
    "read_prediction_file",
    "summarize_runs",
]


def exact_match(pred_state: str | None, gold_state: str) -> int:
    """1 iff the predicted state is bit-identical to gold; unparsed scores 0."""
    return int(pred_state is not None and pred_state == gold_state)


def bit_accuracy(pred_rule: str | None, gold_rule: str) -> float:
    """Fraction of agreeing rule bits; 0.0 on missing or length-mismatched input."""
    if pred_rule is None or len(pred_rule) != len(gold_rule) or not gold_rule:
        return 0.0
    return sum(a == b for a, b in zip(pred_rule, gold_rule)) / len(gold_rule)


def depth_score(acc: Mapping[int, float]) -> float:
    """1 + acc(2) + acc(3) + acc(4); all three horizons must be present."""
    missing = [k for k in (2, 3, 4) if k not in acc]
    if missing:
        raise ValueError(f"depth score needs horizons 2..4, missing {missing}")
    for k in (2, 3, 4):
        if not 0.0 <= acc[k] <= 1.0:
            raise ValueError(f"accuracy at horizon {k} out of [0, 1]: {acc[k]}")
    return 1.0 + acc[2] + acc[3] + acc[4]


@dataclass(frozen=True)
class PredictionRecord:
    instance_id: int
    variant: Variant
    k: int
    tokens: str

    @property
    def key(self) -> tuple[int, str, int]:
        return (self.instance_id, self.variant.value, self.k)


def read_prediction_file(path: str | Path) -> Iterable[PredictionRecord]:
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield PredictionRecord(
                    instance_id=int(obj["instance_id"]),
                    variant=Variant.parse(obj["variant"]),
                    k=int(obj["k"]),
                    tokens=str(obj["tokens"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: line {line_no}: bad prediction record: {e}") from e


@dataclass
class MetricCell:
    """Mean of a 0..1 metric with count and normal-approximation stderr."""

    n: int = 0
    total: float = 0.0

    def add(self, value: float) -> None:
        self.n += 1
        self.total += value

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else 0.0

    @property
    def stderr(self) -> float:
        if self.n == 0:
            return 0.0
        p = self.mean
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.n)

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "stderr": self.stderr}


@dataclass
class EvalReport:
    """Aggregated metrics keyed by (variant, horizon)."""

    rows: dict[tuple[str, int], dict] = field(default_factory=dict)
    depth_scores: dict[str, float] = field(default_factory=dict)
    unknown_keys: list[tuple[int, str, int]] = field(default_factory=list)
    duplicate_keys: list[tuple[int, str, int]] = field(default_factory=list)
    parse_failures: int = 0
    n_scored: int = 0
    empty: bool = False
    warnings: list[str] = field(default_factory=list)

    def exact_match_at(self, variant: str, horizon: int) -> float:
        return self.rows[(variant, horizon)]["exact_match"].mean

    def to_dict(self) -> dict:
        return {
            "rows": {
                f"{v}/k{h}": {
                    "exact_match": cell["exact_match"].to_dict(),
                    **(
                        {"bit_accuracy": cell["bit_accuracy"].to_dict()}
                        if "bit_accuracy" in cell
                        else {}
                    ),
                    **(
                        {"oracle_ceiling": cell["oracle_ceiling"]}
                        if "oracle_ceiling" in cell
                        else {}
                    ),
                }
                for (v, h), cell in sorted(self.rows.items())
            },
            "depth_scores": dict(self.depth_scores),
            "excluded": {
                "unknown": [list(k) for k in sorted(self.unknown_keys)],
                "duplicates": [list(k) for k in sorted(self.duplicate_keys)],
            },
            "parse_failures": self.parse_failures,
            "n_scored": self.n_scored,
            "empty": self.empty,
            "warnings": list(self.warnings),
        }

    def render_table(self) -> str:
        lines = [f"{'variant':<8}{'k':>3}{'n':>8}{'exact':>9}{'±se':>8}"
                 f"{'bit_acc':>9}{'ceiling':>9}"]
        for (v, h), cell in sorted(self.rows.items()):
            em = cell["exact_match"]
            bit = cell.get("bit_accuracy")
            ceil = cell.get("oracle_ceiling")
            lines.append(
                f"{v:<8}{h:>3}{em.n:>8}{em.mean:>9.4f}{em.stderr:>8.4f}"
                f"{(f'{bit.mean:.4f}' if bit else '-'):>9}"
                f"{(f'{ceil:.4f}' if ceil is not None else '-'):>9}"
            )
        for v, ds in sorted(self.depth_scores.items()):
            lines.append(f"depth score [{v}]: {ds:.4f}")
        if self.parse_failures:
            lines.append(f"parse failures: {self.parse_failures}")
        if self.unknown_keys or self.duplicate_keys:
            lines.append(
                f"excluded: {len(self.unknown_keys)} unknown, "
                f"{len(self.duplicate_keys)} duplicated"
            )
        if self.empty:
            lines.append("NOTE: prediction file contained no records")
        for w in self.warnings:
            lines.append(f"WARNING: {w}")
        return "\n".join(lines)


def _gold_fields(rec: TaskRecord, width: int, rule_len: int):
    parsed = parse_prediction(rec.target, rec.variant, rec.k, width, rule_len)
    if not parsed.ok:
        raise ValueError(
            f"gold target for instance {rec.instance_id} does not parse: {parsed.reason}"
        )
    return parsed


def _infer_geometry(gold: list[TaskRecord]) -> tuple[int, int]:
    """(state width, rule length) read off the gold targets."""
    fields = gold[0].target.split("<sep>")
    if gold[0].variant is Variant.ORS:
        return len(fields[1]), len(fields[0])
    width = len(fields[-1])
    rule_len = 32
    for rec in gold:
        if rec.variant is Variant.ORS:
            rule_len = len(rec.target.split("<sep>")[0])
            break
    return width, rule_len


def evaluate_run(
    pred_path: str | Path,
    gold_path: str | Path,
    oracle_report: dict | str | Path | None = None,
) -> EvalReport:
    """Score one prediction file against the task file that defined the run."""
    gold = list(read_task_file(gold_path))
    if not gold:
        raise ValueError(f"gold task file {gold_path} is empty")
    width, rule_len = _infer_geometry(gold)
    gold_by_key = {(r.instance_id, r.variant.value, r.k): r for r in gold}

    report = EvalReport()
    preds: dict[tuple[int, str, int], PredictionRecord] = {}
    dupes: set[tuple[int, str, int]] = set()
    for rec in read_prediction_file(pred_path):
        if rec.key in dupes:
            continue
        if rec.key in preds:
            dupes.add(rec.key)
            del preds[rec.key]
            continue
        preds[rec.key] = rec
    report.duplicate_keys = sorted(dupes)

    for key, rec in sorted(preds.items()):
        if key not in gold_by_key:
            report.unknown_keys.append(key)
            continue
        gold_rec = gold_by_key[key]
        gold_parsed = _gold_fields(gold_rec, width, rule_len)
        pred_parsed = parse_prediction(rec.tokens, rec.variant, rec.k, width, rule_len)
        if not pred_parsed.ok:
            report.parse_failures += 1
        variant = rec.variant.value
        if rec.variant is Variant.OO:
            for h in range(1, rec.k + 1):
                cell = report.rows.setdefault(
                    (variant, h), {"exact_match": MetricCell()}
                )
                pred_state = (
                    pred_parsed.states[h - 1]
                    if pred_parsed.ok and len(pred_parsed.states) >= h
                    else None
                )
                cell["exact_match"].add(exact_match(pred_state, gold_parsed.states[h - 1]))
        else:
            cell = report.rows.setdefault((variant, rec.k), {"exact_match": MetricCell()})
            pred_state = pred_parsed.states[0] if pred_parsed.ok else None
            cell["exact_match"].add(exact_match(pred_state, gold_parsed.states[0]))
            if rec.variant is Variant.ORS:
                bit_cell = cell.setdefault("bit_accuracy", MetricCell())
                bit_cell.add(bit_accuracy(pred_parsed.rule, gold_parsed.rule))
        report.n_scored += 1

    report.empty = report.n_scored == 0 and not report.unknown_keys

    for variant in {v for (v, _) in report.rows}:
        acc = {
            h: report.rows[(variant, h)]["exact_match"].mean
            for h in (2, 3, 4)
            if (variant, h) in report.rows
        }
        if set(acc) == {2, 3, 4}:
            report.depth_scores[variant] = depth_score(acc)

    if oracle_report is not None:
        if isinstance(oracle_report, (str, Path)):
            with open(oracle_report, "r", encoding="ascii") as f:
                oracle_report = json.load(f)
        _attach_ceilings(report, oracle_report)
    return report


def _attach_ceilings(report: EvalReport, oracle: dict) -> None:
    per_k = oracle.get("per_k", {})
    variant = oracle.get("variant")
    for (v, h), cell in report.rows.items():
        if str(h) in per_k and (variant is None or variant == v):
            ceiling = per_k[str(h)]["exact_match_ceiling"]
            cell["oracle_ceiling"] = ceiling
            em = cell["exact_match"]
            # models may beat the strict ceiling via priors on undetermined
            # cells; flag anything beyond a 3-sigma binomial allowance
            allowance = 3.0 * math.sqrt(max(ceiling * (1 - ceiling), 1e-12) / max(em.n, 1))
            if em.mean > ceiling + allowance:
                report.warnings.append(
                    f"{v}/k{h}: exact match {em.mean:.4f} exceeds strict oracle "
                    f"ceiling {ceiling:.4f} + noise bound; predictor is using priors"
                )


def summarize_runs(reports: list[EvalReport]) -> dict:
    """Across-file mean and population std per (variant, horizon) metric."""
    if not reports:
        raise ValueError("no reports to summarize")
    keys = sorted({k for r in reports for k in r.rows})
    out: dict = {}
    for v, h in keys:
        means = [r.rows[(v, h)]["exact_match"].mean for r in reports if (v, h) in r.rows]
        mu = sum(means) / len(means)
        std = math.sqrt(sum((m - mu) ** 2 for m in means) / len(means))
        out[f"{v}/k{h}"] = {"runs": len(means), "exact_match_mean": mu, "exact_match_std": std}
    ds_keys = sorted({v for r in reports for v in r.depth_scores})
    for v in ds_keys:
        vals = [r.depth_scores[v] for r in reports if v in r.depth_scores]
        mu = sum(vals) / len(vals)
        std = math.sqrt(sum((x - mu) ** 2 for x in vals) / len(vals))
        out[f"depth_score/{v}"] = {"runs": len(vals), "mean": mu, "std": std}
    return out
