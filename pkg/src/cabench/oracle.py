"""Analytic baselines: partial-rule induction and exact performance ceilings.

Watching an orbit prefix reveals only the rule entries whose neighborhood
patterns actually occur. That partial rule can then be iterated forward:
a predicted cell is *determined* when every cell feeding it was determined
one horizon earlier and the resulting neighborhood has a known entry.
Undetermined cells carry the conventional value 0 and are flagged.

Determined cells are provably equal to the true next states (soundness),
so the fraction of instances whose target state is fully determined is an
exact-match ceiling for any predictor that relies on deduction alone: no
amount of modeling can read entries out of transitions that never
happened. Predictors are free to *guess* undetermined cells, so measured
model accuracy can exceed the ceiling only through priors, never through
inference.

The propagation flag is conservative: it treats any cell with an
undetermined input as undetermined, even if every completion of the
unknown entries happens to agree on its value. `brute_force_prediction`
enumerates all rule completions (feasible for radius 1) and serves as the
exactness reference in tests.

Scalar functions work on `CaState`/`PartialRule` objects; `_packed_*`
helpers carry the same logic over numpy arrays for dataset-scale reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ca import (
    CaState,
    Rule,
    neighborhood_index,
    neighborhood_values_packed,
    orbit_packed,
    rotl_packed,
)
from .datagen import Instance, iter_instances

__all__ = [
    "PartialRule",
    "OraclePrediction",
    "InconsistentOrbitError",
    "induce_partial_rule",
    "predict",
    "consistent_rules",
    "brute_force_prediction",
    "ceiling_report",
    "oracle_prediction_records",
]


class InconsistentOrbitError(ValueError):
    """The same neighborhood was observed mapping to both 0 and 1."""


@dataclass(frozen=True)
class PartialRule:
    """Tri-state rule table: per neighborhood, the observed output or unknown.

    Packed as two integers: bit i of `known` says entry i was observed;
    bit i of `values` is the observed output (0 where unknown). `counts`
    records how many transitions exhibited each neighborhood.
    """

    radius: int
    known: int
    values: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        n = self.n_entries
        if not 0 <= self.known < (1 << n):
            raise ValueError("known mask out of range")
        if self.values & ~self.known:
            raise ValueError("values set outside known mask")
        if len(self.counts) != n:
            raise ValueError(f"counts must have {n} entries")

    @property
    def n_entries(self) -> int:
        return 1 << (2 * self.radius + 1)

    @property
    def entries(self) -> tuple[int | None, ...]:
        return tuple(
            ((self.values >> i) & 1) if (self.known >> i) & 1 else None
            for i in range(self.n_entries)
        )

    @property
    def n_known(self) -> int:
        return bin(self.known).count("1")

    @classmethod
    def empty(cls, radius: int) -> "PartialRule":
        return cls(radius=radius, known=0, values=0, counts=(0,) * (1 << (2 * radius + 1)))

    def agrees_with(self, rule: Rule) -> bool:
        """True when every known entry matches `rule`."""
        return rule.radius == self.radius and (rule.table & self.known) == self.values


def induce_partial_rule(states: Sequence[CaState], radius: int = 2) -> PartialRule:
    """Read off every (neighborhood -> output) pair exhibited by the prefix.

    Requires at least two states (one transition). Conflicting observations
    mean the prefix was not produced by a single deterministic rule.
    """
    if len(states) < 2:
        raise ValueError(f"need at least 2 states to observe a transition, got {len(states)}")
    widths = {s.width for s in states}
    if len(widths) != 1:
        raise ValueError(f"states have mixed widths: {sorted(widths)}")
    n = 1 << (2 * radius + 1)
    known = 0
    values = 0
    counts = [0] * n
    for t in range(len(states) - 1):
        cur, nxt = states[t], states[t + 1]
        for w in range(cur.width):
            idx = neighborhood_index(cur, w, radius)
            out = (nxt.packed >> (nxt.width - 1 - w)) & 1
            bit = 1 << idx
            if known & bit:
                if ((values >> idx) & 1) != out:
                    raise InconsistentOrbitError(
                        f"neighborhood {idx:#07b} observed mapping to both 0 and 1 "
                        f"(transition {t}->{t + 1}, cell {w})"
                    )
            else:
                known |= bit
                if out:
                    values |= bit
            counts[idx] += 1
    return PartialRule(radius=radius, known=known, values=values, counts=tuple(counts))


@dataclass(frozen=True)
class OraclePrediction:
    """Iterated partial-rule forecast with per-cell determinability flags.

    states[h] is the horizon-(h+1) forecast; bit (W-1-w) of determined[h]
    flags cell w as forced by the observations. Undetermined cells hold 0.
    """

    states: tuple[CaState, ...]
    determined: tuple[int, ...]
    fully_determined: tuple[bool, ...]

    def determined_cells(self, h: int) -> tuple[bool, ...]:
        width = self.states[h].width
        mask = self.determined[h]
        return tuple(bool((mask >> (width - 1 - w)) & 1) for w in range(width))


def predict(partial: PartialRule, last_state: CaState, k: int) -> OraclePrediction:
    """Iterate the partial rule k steps from `last_state`."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    W = last_state.width
    if W < 2 * partial.radius + 1:
        raise ValueError(f"state width {W} too small for radius {partial.radius}")
    full = (1 << W) - 1
    state = last_state.packed
    det = full  # the observed state is fully determined
    states: list[CaState] = []
    det_masks: list[int] = []
    fully: list[bool] = []
    for _ in range(k):
        new_state = 0
        new_det = 0
        for w in range(W):
            contrib_ok = True
            idx = 0
            for off in range(-partial.radius, partial.radius + 1):
                pos = W - 1 - ((w + off) % W)
                idx = (idx << 1) | ((state >> pos) & 1)
                if not (det >> pos) & 1:
                    contrib_ok = False
            bit_pos = W - 1 - w
            if contrib_ok and (partial.known >> idx) & 1:
                new_det |= 1 << bit_pos
                if (partial.values >> idx) & 1:
                    new_state |= 1 << bit_pos
        state, det = new_state, new_det
        states.append(CaState(packed=state, width=W))
        det_masks.append(det)
        fully.append(det == full)
    return OraclePrediction(
        states=tuple(states), determined=tuple(det_masks), fully_determined=tuple(fully)
    )


# ---------------------------------------------------------------------------
# Brute-force reference (small rule spaces)
# ---------------------------------------------------------------------------


def consistent_rules(partial: PartialRule) -> list[Rule]:
    """Every rule that agrees with all observed entries (2^unknown of them)."""
    n = partial.n_entries
    unknown = [i for i in range(n) if not (partial.known >> i) & 1]
    if len(unknown) > 20:
        raise ValueError(f"{len(unknown)} unknown entries is too many to enumerate")
    rules = []
    for combo in range(1 << len(unknown)):
        table = partial.values
        for j, idx in enumerate(unknown):
            if (combo >> j) & 1:
                table |= 1 << idx
        rules.append(Rule(radius=partial.radius, table=table))
    return rules


def brute_force_prediction(
    partial: PartialRule, last_state: CaState, k: int
) -> OraclePrediction:
    """Ground-truth determinability: iterate every consistent rule.

    A cell is determined at horizon h exactly when all consistent rules
    agree on its value there. Determined cells carry that agreed value;
    undetermined cells carry 0, mirroring `predict`.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    W = last_state.width
    full = np.uint64((1 << W) - 1)
    rules = consistent_rules(partial)
    tables = np.array([r.table for r in rules], dtype=np.uint64)
    inits = np.full(len(rules), last_state.packed, dtype=np.uint64)
    trajs = orbit_packed(inits, tables, W, partial.radius, k + 1)
    states: list[CaState] = []
    det_masks: list[int] = []
    fully: list[bool] = []
    for h in range(1, k + 1):
        col = trajs[:, h]
        ones = np.bitwise_and.reduce(col)
        anyone = np.bitwise_or.reduce(col)
        det = int(~(ones ^ anyone) & full)
        value = int(ones) & det  # agreed bits, zeroed where undetermined
        states.append(CaState(packed=value, width=W))
        det_masks.append(det)
        fully.append(det == int(full))
    return OraclePrediction(
        states=tuple(states), determined=tuple(det_masks), fully_determined=tuple(fully)
    )


# ---------------------------------------------------------------------------
# Vectorized pipeline
# ---------------------------------------------------------------------------


def _packed_induce(states: np.ndarray, width: int, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """(known, values) packed masks per instance from (n, C) packed prefixes."""
    n, C = states.shape
    if C < 2:
        return np.zeros(n, dtype=np.uint64), np.zeros(n, dtype=np.uint64)
    known = np.zeros(n, dtype=np.uint64)
    values = np.zeros(n, dtype=np.uint64)
    one = np.uint64(1)
    for t in range(C - 1):
        nb = neighborhood_values_packed(states[:, t], width, radius)  # (n, W)
        for w in range(width):
            idx = nb[:, w]
            out = (states[:, t + 1] >> np.uint64(width - 1 - w)) & one
            entry = one << idx
            seen = (known & entry) != 0
            conflict = seen & (((values >> idx) & one) != out)
            if conflict.any():
                bad = int(np.nonzero(conflict)[0][0])
                raise InconsistentOrbitError(
                    f"instance row {bad}: neighborhood {int(idx[bad])} observed "
                    f"mapping to both 0 and 1"
                )
            known |= entry
            values |= entry * out
    return known, values


def _packed_predict_step(
    state: np.ndarray, det: np.ndarray, known: np.ndarray, values: np.ndarray,
    width: int, radius: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One propagation step over packed arrays; returns (new_state, new_det)."""
    one = np.uint64(1)
    contrib = det.copy()
    for off in range(-radius, radius + 1):
        if off:
            contrib &= rotl_packed(det, off, width)
    nb = neighborhood_values_packed(state, width, radius)  # (n, W)
    entry_known = (known[:, None] >> nb) & one
    entry_value = (values[:, None] >> nb) & one
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    known_mask = np.bitwise_or.reduce(entry_known << shifts[None, :], axis=1)
    value_mask = np.bitwise_or.reduce(entry_value << shifts[None, :], axis=1)
    new_det = contrib & known_mask
    return value_mask & new_det, new_det


def _packed_predict(
    last_state: np.ndarray, known: np.ndarray, values: np.ndarray,
    width: int, radius: int, k: int,
) -> tuple[np.ndarray, np.ndarray]:
    """(k, n) arrays of (conventional states, determined masks)."""
    n = last_state.shape[0]
    state = last_state.astype(np.uint64, copy=True)
    det = np.full(n, (1 << width) - 1, dtype=np.uint64)
    out_states = np.empty((k, n), dtype=np.uint64)
    out_det = np.empty((k, n), dtype=np.uint64)
    for h in range(k):
        state, det = _packed_predict_step(state, det, known, values, width, radius)
        out_states[h] = state
        out_det[h] = det
    return out_states, out_det


def _popcount(arr: np.ndarray) -> np.ndarray:
    # numpy 1.x has no uint64 popcount ufunc; bytes-view + unpackbits is exact
    return np.unpackbits(arr.view(np.uint8).reshape(arr.size, 8), axis=1).sum(axis=1)


def _guess_optimal_mass(
    values_i: int, known_i: int, last_state: int, width: int, radius: int, h: int,
    enum_cap: int,
) -> float:
    """Best achievable success probability on one undetermined instance.

    Enumerates every completion of the unobserved entries, iterates h+1
    steps, and returns the modal final-state frequency: the success rate of
    a predictor that guesses the most likely completion class. Instances
    with more than `enum_cap` unknown entries return 0 (a pessimistic
    under-count; they are rare and their modal mass is tiny anyway).
    """
    n_entries = 1 << (2 * radius + 1)
    unknown = [b for b in range(n_entries) if not (known_i >> b) & 1]
    u = len(unknown)
    if u > enum_cap:
        return 0.0
    combos = np.arange(1 << u, dtype=np.uint64)
    tabs = np.full(1 << u, values_i, dtype=np.uint64)
    for j, b in enumerate(unknown):
        tabs |= ((combos >> np.uint64(j)) & np.uint64(1)) << np.uint64(b)
    trajs = orbit_packed(
        np.full(1 << u, last_state, dtype=np.uint64), tabs, width, radius, h + 2
    )
    _, counts = np.unique(trajs[:, h + 1], return_counts=True)
    return float(counts.max()) / (1 << u)


def ceiling_report(
    instances: Iterable[Instance] | str | Path,
    variant: str = "os",
    context_len: int = 10,
    k_max: int = 4,
    limit: int | None = None,
    guess_enum_cap: int = 16,
) -> dict:
    """Measure oracle exact-match ceilings per horizon over a dataset.

    For each k:
      exact_match_ceiling      fraction of instances whose horizon-k state is
                               fully determined from the context; the strict,
                               deduction-only ceiling and the headline number
      mean_determined_cells    mean fraction of determined cells
      conventional_exact_match exact match the zero-filled forecast would
                               score (>= strict, since zeros can be lucky)
      guess_optimal_ceiling    upper bound for *any* predictor: determined
                               instances count 1, the rest contribute the
                               modal completion mass (no predictor can beat
                               the Bayes guess over unobserved entries)

    Also reports rule-table observability: the mean fraction of entries
    pinned by the context and the bit accuracy of a table with unknowns
    defaulting to 0.

    `variant` is recorded and handled: with the rule given (ros), every
    horizon is fully determined and the ceilings are exactly 1.
    """
    if isinstance(instances, (str, Path)):
        instances = iter_instances(instances, validate="none")
    insts = []
    for inst in instances:
        insts.append(inst)
        if limit is not None and len(insts) >= limit:
            break
    if not insts:
        raise ValueError("no instances to report on")
    width = insts[0].orbit.width
    radius = insts[0].rule.radius
    T = len(insts[0].orbit.states)
    if context_len < 1 or context_len + k_max > T:
        raise ValueError(
            f"need 1 <= context_len and context_len + k_max <= {T}, "
            f"got context_len={context_len}, k_max={k_max}"
        )
    n = len(insts)
    n_entries = 1 << (2 * radius + 1)

    prefix = np.array(
        [[s.packed for s in inst.orbit.states[:context_len]] for inst in insts],
        dtype=np.uint64,
    )
    truth = np.array(
        [
            [inst.orbit.states[context_len + h].packed for h in range(k_max)]
            for inst in insts
        ],
        dtype=np.uint64,
    ).T  # (k_max, n)
    true_tables = np.array([inst.rule.table for inst in insts], dtype=np.uint64)

    if variant == "ros":
        known = np.full(n, (1 << n_entries) - 1, dtype=np.uint64)
        values = true_tables.copy()
    else:
        known, values = _packed_induce(prefix, width, radius)
    states, det = _packed_predict(prefix[:, -1], known, values, width, radius, k_max)

    full = np.uint64((1 << width) - 1)
    report: dict = {
        "variant": variant,
        "context_len": context_len,
        "width": width,
        "radius": radius,
        "n_instances": n,
        "per_k": {},
    }
    last = prefix[:, -1]
    for h in range(k_max):
        fully = det[h] == full
        exact_conventional = states[h] == truth[h]
        # soundness: determined cells must match the ground truth
        mismatch = (states[h] ^ truth[h]) & det[h]
        if mismatch.any():
            bad = int(np.nonzero(mismatch)[0][0])
            raise AssertionError(
                f"oracle soundness violated at horizon {h + 1}, instance row {bad}"
            )
        guess_total = float(fully.sum())
        for i in np.nonzero(~fully)[0]:
            guess_total += _guess_optimal_mass(
                int(values[i]), int(known[i]), int(last[i]), width, radius, h,
                guess_enum_cap,
            )
        report["per_k"][str(h + 1)] = {
            "exact_match_ceiling": float(fully.mean()),
            "mean_determined_cells": float(_popcount(det[h]).mean() / width),
            "conventional_exact_match": float(exact_conventional.mean()),
            "guess_optimal_ceiling": guess_total / n,
            "n_fully_determined": int(fully.sum()),
        }
    known_frac = _popcount(known) / n_entries
    # bit accuracy with unknown entries defaulting to 0: correct on every known
    # entry (they match by construction) plus unknown entries whose true bit is 0
    wrong = (true_tables ^ values) & np.uint64((1 << n_entries) - 1)
    default0_acc = 1.0 - _popcount(wrong) / n_entries
    report["rule_bits"] = {
        "observable_fraction_mean": float(known_frac.mean()),
        "bit_accuracy_ceiling": float(known_frac.mean()),
        "default0_bit_accuracy_mean": float(default0_acc.mean()),
    }
    return report


def oracle_prediction_records(
    instances: Iterable[Instance],
    variant: str = "os",
    k: int = 1,
    context_len: int = 10,
) -> Iterable[dict]:
    """Prediction records in the scorer's wire format, one per instance.

    Emits the forecast only when it is fully determined; otherwise emits an
    empty token string, which parses as a failure and scores 0. Scoring
    these records therefore reproduces the strict ceiling exactly.
    """
    from .tasks import SEP, Variant

    var = Variant.parse(variant)
    for inst in instances:
        states = inst.orbit.states
        if var is Variant.ROS:
            partial = PartialRule(
                radius=inst.rule.radius,
                known=(1 << inst.rule.n_entries) - 1,
                values=inst.rule.table,
                counts=(0,) * inst.rule.n_entries,
            )
        else:
            partial = induce_partial_rule(states[:context_len], radius=inst.rule.radius)
        pred = predict(partial, states[context_len - 1], k)
        if var is Variant.OO:
            ok = all(pred.fully_determined[:k])
            tokens = SEP.join(s.to_string() for s in pred.states[:k]) if ok else ""
        elif var is Variant.ORS:
            ok = pred.fully_determined[k - 1]
            rule_str = Rule(radius=partial.radius, table=partial.values).to_string()
            tokens = (rule_str + SEP + pred.states[k - 1].to_string()) if ok else ""
        else:
            ok = pred.fully_determined[k - 1]
            tokens = pred.states[k - 1].to_string() if ok else ""
        yield {
            "instance_id": inst.id,
            "variant": var.value,
            "k": k,
            "tokens": tokens,
        }
