"""One-dimensional binary cellular automata on a periodic lattice.

A configuration of W cells evolves synchronously: every cell reads its
(2r+1)-cell neighborhood (r cells to each side, wrapping around the ring)
and looks the pattern up in a Boolean rule table. The neighborhood is read
most-significant-bit first, with the leftmost cell most significant, so a
pattern maps to an integer in [0, 2^(2r+1)), and character i of the rule
string is the output for pattern value i.

States and rule tables are stored as packed integers; the bit-string codec
(`CaState.from_string` / `Rule.from_string` and friends) is the public text
representation. Everything here is immutable and purely functional, so all
types are safe to share across threads.

Batch kernels (`step_packed`, `orbit_packed`) operate on numpy uint64 arrays
of packed states, one lattice per element, and are the high-throughput path
used by dataset generation and the analytic oracle. They require
width <= 63 and radius <= 2 (rule table must fit one machine word); the
scalar path has no such limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "Rule",
    "CaState",
    "Orbit",
    "neighborhood_index",
    "step",
    "orbit",
    "rule_encode",
    "rule_decode",
    "rotate",
    "reflect_state",
    "reflect_rule",
    "rotl_packed",
    "step_packed",
    "orbit_packed",
    "neighborhood_values_packed",
]

_UINT64_MAX_WIDTH = 63


def _check_bitstring(s: str, what: str) -> None:
    if not s:
        raise ValueError(f"{what} must be a non-empty string of '0'/'1'")
    bad = set(s) - {"0", "1"}
    if bad:
        raise ValueError(f"{what} contains non-binary characters: {sorted(bad)!r}")


@dataclass(frozen=True)
class Rule:
    """Boolean lookup table mapping a (2r+1)-cell pattern to the next cell value.

    `table` packs the 2^(2r+1) outputs as an integer: bit i is the output
    for the neighborhood whose MSB-first value is i. In the string form,
    character i (left to right) is that same output, so the string is the
    packed integer printed LSB-first.
    """

    radius: int
    table: int

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if not 0 <= self.table < (1 << self.n_entries):
            raise ValueError(
                f"rule table {self.table:#x} out of range for radius {self.radius} "
                f"({self.n_entries} entries)"
            )

    @property
    def n_entries(self) -> int:
        return 1 << (2 * self.radius + 1)

    @property
    def bits(self) -> tuple[int, ...]:
        """Outputs indexed by neighborhood value."""
        return tuple((self.table >> i) & 1 for i in range(self.n_entries))

    def output(self, neighborhood: int) -> int:
        if not 0 <= neighborhood < self.n_entries:
            raise ValueError(
                f"neighborhood value {neighborhood} out of range [0, {self.n_entries})"
            )
        return (self.table >> neighborhood) & 1

    @classmethod
    def from_string(cls, s: str, radius: int | None = None) -> "Rule":
        _check_bitstring(s, "rule string")
        if radius is None:
            n = len(s)
            width = n.bit_length() - 1
            if n != (1 << width) or width % 2 == 0:
                raise ValueError(
                    f"rule string length {n} is not 2^(2r+1) for any radius r"
                )
            radius = (width - 1) // 2
        expected = 1 << (2 * radius + 1)
        if len(s) != expected:
            raise ValueError(
                f"rule string length {len(s)} != {expected} required for radius {radius}"
            )
        table = 0
        for i, c in enumerate(s):
            if c == "1":
                table |= 1 << i
        return cls(radius=radius, table=table)

    def to_string(self) -> str:
        return "".join("1" if (self.table >> i) & 1 else "0" for i in range(self.n_entries))


@dataclass(frozen=True)
class CaState:
    """A ring of `width` binary cells.

    Cell w sits at bit (width-1-w) of `packed`, so the binary rendering of
    `packed`, zero-padded to `width` digits, reads the lattice left to right.
    """

    packed: int
    width: int

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if not 0 <= self.packed < (1 << self.width):
            raise ValueError(f"packed value {self.packed:#x} out of range for width {self.width}")

    @classmethod
    def from_cells(cls, cells: Iterable[int]) -> "CaState":
        packed = 0
        width = 0
        for c in cells:
            if c not in (0, 1):
                raise ValueError(f"cell values must be 0 or 1, got {c!r}")
            packed = (packed << 1) | c
            width += 1
        return cls(packed=packed, width=width)

    @classmethod
    def from_string(cls, s: str) -> "CaState":
        _check_bitstring(s, "state string")
        return cls(packed=int(s, 2), width=len(s))

    @property
    def cells(self) -> tuple[int, ...]:
        return tuple((self.packed >> (self.width - 1 - w)) & 1 for w in range(self.width))

    def to_string(self) -> str:
        return format(self.packed, f"0{self.width}b")


@dataclass(frozen=True)
class Orbit:
    """A trajectory: `states[t+1]` is `step(states[t], rule)` for every t."""

    rule: Rule
    states: tuple[CaState, ...]

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("orbit must contain at least one state")
        widths = {s.width for s in self.states}
        if len(widths) != 1:
            raise ValueError(f"orbit states have mixed widths: {sorted(widths)}")

    @property
    def width(self) -> int:
        return self.states[0].width

    def validate(self) -> None:
        """Recompute every transition; raises ValueError on the first mismatch."""
        for t in range(len(self.states) - 1):
            expected = step(self.states[t], self.rule)
            if expected != self.states[t + 1]:
                raise ValueError(
                    f"orbit transition {t}->{t + 1} does not follow the rule: "
                    f"expected {expected.to_string()}, found {self.states[t + 1].to_string()}"
                )


def neighborhood_index(state: CaState, w: int, radius: int) -> int:
    """MSB-first value of the (2*radius+1)-cell window centered on cell w.

    Neighbor reads wrap around the ring; w itself must be a valid cell index.
    """
    if not 0 <= w < state.width:
        raise ValueError(f"cell index {w} out of range [0, {state.width})")
    value = 0
    for off in range(-radius, radius + 1):
        bit = (state.packed >> (state.width - 1 - ((w + off) % state.width))) & 1
        value = (value << 1) | bit
    return value


def step(state: CaState, rule: Rule) -> CaState:
    """Apply the rule to every cell simultaneously."""
    if state.width < 2 * rule.radius + 1:
        raise ValueError(
            f"state width {state.width} too small for radius {rule.radius} "
            f"(needs >= {2 * rule.radius + 1})"
        )
    packed = 0
    for w in range(state.width):
        packed = (packed << 1) | rule.output(neighborhood_index(state, w, rule.radius))
    return CaState(packed=packed, width=state.width)


def orbit(init: CaState, rule: Rule, steps: int) -> Orbit:
    """Trajectory of `steps` states starting from `init` (inclusive)."""
    if steps < 1:
        raise ValueError(f"orbit length must be >= 1, got {steps}")
    states = [init]
    current = init
    for _ in range(steps - 1):
        current = step(current, rule)
        states.append(current)
    return Orbit(rule=rule, states=tuple(states))


def rule_encode(rule: Rule) -> str:
    return rule.to_string()


def rule_decode(s: str, radius: int | None = None) -> Rule:
    return Rule.from_string(s, radius=radius)


def rotate(state: CaState, j: int) -> CaState:
    """Rotate the ring so that cell w of the result is cell (w+j) mod W."""
    w = state.width
    j %= w
    if j == 0:
        return state
    mask = (1 << w) - 1
    packed = ((state.packed << j) | (state.packed >> (w - j))) & mask
    return CaState(packed=packed, width=w)


def reflect_state(state: CaState) -> CaState:
    """Mirror the lattice left-to-right."""
    return CaState.from_cells(reversed(state.cells))


def reflect_rule(rule: Rule) -> Rule:
    """Rule that acts on the mirrored lattice: entry n maps to entry reverse_bits(n)."""
    n_bits = 2 * rule.radius + 1
    table = 0
    for n in range(rule.n_entries):
        rev = int(format(n, f"0{n_bits}b")[::-1], 2)
        if (rule.table >> rev) & 1:
            table |= 1 << n
    return Rule(radius=rule.radius, table=table)


# ---------------------------------------------------------------------------
# Batch kernels over packed uint64 arrays (one lattice per element).
# ---------------------------------------------------------------------------


def _check_packed_args(width: int, radius: int) -> None:
    if not 1 <= width <= _UINT64_MAX_WIDTH:
        raise ValueError(f"packed kernels require 1 <= width <= {_UINT64_MAX_WIDTH}, got {width}")
    if not 1 <= radius <= 2:
        raise ValueError(f"packed kernels require 1 <= radius <= 2, got {radius}")
    if width < 2 * radius + 1:
        raise ValueError(f"width {width} too small for radius {radius}")


def rotl_packed(x: np.ndarray, j: int, width: int) -> np.ndarray:
    """Rotate packed lattices so that cell w of the result is cell (w+j) mod width."""
    j %= width
    if j == 0:
        return x.copy()
    mask = np.uint64((1 << width) - 1)
    return ((x << np.uint64(j)) | (x >> np.uint64(width - j))) & mask


def neighborhood_values_packed(states: np.ndarray, width: int, radius: int) -> np.ndarray:
    """(n, width) array of MSB-first neighborhood values, one row per lattice."""
    _check_packed_args(width, radius)
    states = np.ascontiguousarray(states, dtype=np.uint64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)  # bit position of cell w
    one = np.uint64(1)
    values = np.zeros((states.shape[0], width), dtype=np.uint64)
    for off in range(-radius, radius + 1):
        c = rotl_packed(states, off, width)
        values = (values << one) | ((c[:, None] >> shifts[None, :]) & one)
    return values


def step_packed(states: np.ndarray, tables: np.ndarray, width: int, radius: int) -> np.ndarray:
    """Vectorized `step`: states and rule tables are parallel uint64 arrays."""
    _check_packed_args(width, radius)
    tables = np.ascontiguousarray(tables, dtype=np.uint64)
    values = neighborhood_values_packed(states, width, radius)
    one = np.uint64(1)
    out_bits = (tables[:, None] >> values) & one
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return np.bitwise_or.reduce(out_bits << shifts[None, :], axis=1)


def orbit_packed(
    init: np.ndarray, tables: np.ndarray, width: int, radius: int, steps: int
) -> np.ndarray:
    """(n, steps) array of packed trajectories; column 0 is `init`."""
    if steps < 1:
        raise ValueError(f"orbit length must be >= 1, got {steps}")
    init = np.ascontiguousarray(init, dtype=np.uint64)
    out = np.empty((init.shape[0], steps), dtype=np.uint64)
    out[:, 0] = init
    for t in range(1, steps):
        out[:, t] = step_packed(out[:, t - 1], tables, width, radius)
    return out
