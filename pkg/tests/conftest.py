"""Shared fixtures: the golden orbit used as the binding format contract.

The (rule, initial state) pair below, with width 20 and radius 2, produces
a trajectory whose first 14 states are frozen here. Every format-sensitive
test (engine transitions, task emission, oracle targets) checks against
these strings bit-exactly.
"""

import pytest

from cabench.ca import CaState, Rule

GOLDEN_RULE = "01011111100100000101111011111100"
GOLDEN_INIT = "10110111001000110100"

# states[i] is the (i+1)-th state of the trajectory; states[0] == GOLDEN_INIT.
GOLDEN_STATES = [
    "10110111001000110100",
    "11101001101111101100",
    "10111011010000111011",
    "11001110111011101100",
    "10111011001100111011",
    "11001110111011101100",
    "10111011001100111011",
    "11001110111011101100",
    "10111011001100111011",
    "11001110111011101100",
    "10111011001100111011",
    "11001110111011101100",
    "10111011001100111011",
    "11001110111011101100",
]

GOLDEN_W = 20
GOLDEN_RADIUS = 2

# The four sample lines for the golden instance with a 10-state context and
# look-aheads (OS, ORS, ROS: k=1; OO: k=4). `|` marks the input/target split.
GOLDEN_CONTEXT = "<sep>".join(GOLDEN_STATES[:10])
GOLDEN_LINES = {
    "os": GOLDEN_CONTEXT + "<gen>" + "|" + GOLDEN_STATES[10],
    "oo": GOLDEN_CONTEXT + "<gen>" + "|" + "<sep>".join(GOLDEN_STATES[10:14]),
    "ors": GOLDEN_CONTEXT + "<gen>" + "|" + GOLDEN_RULE + "<sep>" + GOLDEN_STATES[10],
    "ros": GOLDEN_RULE + "<sep>" + GOLDEN_CONTEXT + "<gen>" + "|" + GOLDEN_STATES[10],
}


@pytest.fixture(scope="session")
def golden_rule() -> Rule:
    return Rule.from_string(GOLDEN_RULE)


@pytest.fixture(scope="session")
def golden_init() -> CaState:
    return CaState.from_string(GOLDEN_INIT)
