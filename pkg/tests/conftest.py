"""Shared pc presentations with known multiplication."""

from __future__ import annotations

import pytest

from engelnq.pcp import PcPresentation


@pytest.fixture
def heisenberg() -> PcPresentation:
    """Integer Heisenberg group: x = g1, y = g2, z = g3 with y^x = y*z, z central."""
    return PcPresentation(
        weights=(1, 1, 2),
        orders=(None, None, None),
        conj_tails={(0, 1): ((2, 1),)},
    )


@pytest.fixture
def heisenberg_mod2() -> PcPresentation:
    """Heisenberg group with the central generator of order 2."""
    return PcPresentation(
        weights=(1, 1, 2),
        orders=(None, None, 2),
        conj_tails={(0, 1): ((2, 1),)},
    )


@pytest.fixture
def d16() -> PcPresentation:
    """Dihedral group of order 16: s = g1, r = g2, r^2 = g3, r^4 = g4."""
    return PcPresentation(
        weights=(1, 1, 2, 3),
        orders=(2, 2, 2, 2),
        power_tails={1: ((2, 1),), 2: ((3, 1),)},
        conj_tails={(0, 1): ((2, 1), (3, 1)), (0, 2): ((3, 1),)},
    )
