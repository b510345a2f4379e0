import itertools

import numpy as np
import pytest

from betashap.game import TableGame

ACCEPTANCE_LINES = []


def random_table_game(n, rng, ids=None):
    return TableGame(rng.normal(size=1 << n), ids)


def permutation_shapley(table, n):
    """Average marginal contribution over all n! orderings."""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    bits = np.int64(1) << perms
    prefix = np.cumsum(bits, axis=1)
    before = prefix - bits
    diffs = table[prefix] - table[before]
    out = np.zeros(n)
    np.add.at(out, perms.ravel(), diffs.ravel())
    return out / len(perms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
