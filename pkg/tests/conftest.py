import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from flowtrees.rules import preset
from flowtrees.trees import Arity, Rule


@pytest.fixture(scope="session")
def gkpz() -> Rule:
    return preset("gkpz")


@pytest.fixture(scope="session")
def phi4() -> Rule:
    return preset("phi4")


@pytest.fixture(scope="session")
def cubic1d() -> Rule:
    """Cubic drift, constant noise coefficient, one space dimension.

    The rule used by the numeric localization checks: every Taylor ladder
    terminates because the drift is polynomial and the noise coefficient
    constant.
    """
    return Rule(
        lam=Fraction(2),
        alpha=Fraction(-3, 2) - Fraction(1, 100),
        d=1,
        q=0,
        p=0,
        gamma=Fraction(0),
        a_cap=0,
        k_cap=2,
        arity_g=Arity(total=3),
        arity_f=Arity(total=0),
    )


@pytest.fixture(scope="session")
def singular1d() -> Rule:
    """More singular noise so that the two-leaf cherry has negative degree
    (exercises nontrivial extraction in the evaluation-map tests)."""
    return Rule(
        lam=Fraction(2),
        alpha=Fraction(-5, 2) - Fraction(1, 100),
        d=1,
        q=0,
        p=0,
        gamma=Fraction(0),
        a_cap=0,
        k_cap=3,
        arity_g=Arity(total=3),
        arity_f=Arity(total=None),
    )
