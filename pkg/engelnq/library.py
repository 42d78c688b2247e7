"""Finitely presented groups used by the experiment registry, in the input grammar."""

from __future__ import annotations

from engelnq.engel import nickel_presentation
from engelnq.words import FpPresentation, format_presentation, parse_presentation

# a and b right 3-Engel; the quotient is H3
RIGHT_3_ENGEL_PAIR = """\
group L
generators a, b, c, x
identical x
relators [a; x, x, x], [b; x, x, x]
"""

RIGHT_3_ENGEL_ONE = """\
group L2
generators a, c, x
identical x
relators [a; x, x, x]
"""

# a right 4-Engel; the quotient is M
RIGHT_4_ENGEL_ONE = """\
group U
generators a, c, x
identical x
relators [a; x, x, x, x]
"""

# a and b right 4-Engel; K at class 8, S at class 7
RIGHT_4_ENGEL_PAIR = """\
group W
generators a, b, c, x
identical x
relators [a; x, x, x, x], [b; x, x, x, x]
"""

# every element 4-Engel, two free generators
ENGEL_2_4 = """\
group E24
generators a, c, x, y
identical x, y
relators [y; x, x, x, x]
"""

FREE_2 = """\
group F2
generators a, b
relators
"""

GROUPS: dict[str, str] = {
    "L": RIGHT_3_ENGEL_PAIR,
    "L2": RIGHT_3_ENGEL_ONE,
    "U": RIGHT_4_ENGEL_ONE,
    "W": RIGHT_4_ENGEL_PAIR,
    "E24": ENGEL_2_4,
    "F2": FREE_2,
}


def get(name: str) -> FpPresentation:
    """Library group by name; ``Nickel<n>`` builds the one-law presentation for degree ``n``."""
    if name in GROUPS:
        return parse_presentation(GROUPS[name])
    if name.startswith("Nickel") and name[6:].isdigit():
        return nickel_presentation(int(name[6:]))
    raise KeyError(f"unknown library group {name!r}; known: {', '.join(sorted(GROUPS))}")


def text(name: str) -> str:
    return format_presentation(get(name))
