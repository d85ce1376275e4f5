"""The twelve acceptance criteria at their stated sizes and tolerances.

The suite runs once per session; each criterion is reported on its own line
(PASS/FAIL with the observed value) and asserted by its own test.
"""
import pytest

from condbm import validate

ALL = [f for group in validate.CRITERIA.values() for f in group]


@pytest.fixture(scope="module")
def outcomes(pytestconfig):
    reporter = pytestconfig.pluginmanager.get_plugin("terminalreporter")
    results = {}

    def echo(line):
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)

    echo("")
    for r, f in zip(validate.run_suite("all", seed=validate.DEFAULT_SEED, echo=echo), ALL):
        results[f.__name__] = r
    return results


@pytest.mark.slow
@pytest.mark.parametrize("criterion", [f.__name__ for f in ALL])
def test_criterion(outcomes, criterion):
    r = outcomes[criterion]
    assert r.verdict, r.line()
