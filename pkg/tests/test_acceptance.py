"""The eleven acceptance criteria at their stated tolerances.

Each test prints one ``[PASS]`` / ``[FAIL]`` line.  Criterion 8 is an
expected failure: the stability spread of ``sup k_T / sqrt(T)`` across the
smoothing family is about 0.27 against a bound of 0.25 (see the README).
"""

import pytest

from katobranch import acceptance
from katobranch.config import load_config

KATO_SCALING_REASON = (
    "sup_T k_T/sqrt(T) grows from 0.51 to 0.69 as eps goes 0.1 -> 0.0125 (spread 0.27 > 0.25); "
    "the constants increase toward the limit value 2/sqrt(pi) and stay below it"
)


@pytest.fixture(scope="module")
def cfg():
    return load_config()


def _params():
    for cid, key, fn in acceptance.REGISTRY:
        marks = [pytest.mark.slow] if cid in (7, 8, 9, 10) else []
        if cid == 8:
            marks.append(pytest.mark.xfail(strict=True, reason=KATO_SCALING_REASON))
        yield pytest.param(fn, id=f"{cid:02d}-{key}", marks=marks)


@pytest.mark.parametrize("check", list(_params()))
def test_criterion(check, cfg, capsys):
    result = check(cfg)
    with capsys.disabled():
        print("\n" + result.line())
    if result.id == 8:
        # the parts that do hold
        assert result.details["residual_ok"]
        assert result.details["g0_ok"]
        assert result.details["bounded_by_limit"]
    assert result.passed, result.details
