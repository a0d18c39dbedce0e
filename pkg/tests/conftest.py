"""Shared brute-force oracles used to cross-check the library."""
import itertools
import random

import pytest

from freimanlab.groups import (FiniteAbelian, Heisenberg, IntegerLattice, Integers, Lamplighter,
                               PeriodicLamplighter, UT3)

ALL_GROUPS = [
    Integers(),
    IntegerLattice(2),
    FiniteAbelian((4, 4, 2)),
    Lamplighter(16),
    PeriodicLamplighter(8),
    UT3(5),
    Heisenberg(),
]


def matmul(x, y, p=None):
    out = [[sum(x[i][k] * y[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
    if p is not None:
        out = [[v % p for v in row] for row in out]
    return out


def naive_sumset(G, A, B):
    return {G.mul(a, b) for a in A for b in B}


def naive_power(G, A, k):
    out = {G.identity()}
    for _ in range(k):
        out = naive_sumset(G, out, A)
    return out


def naive_representations(n, A, m, target):
    """Number of (a_1..a_m, b_1..b_m) in A^(2m) with sum a - sum b == target mod n."""
    return sum(1 for t in itertools.product(A, repeat=2 * m)
               if (sum(t[:m]) - sum(t[m:]) - target) % n == 0)


@pytest.fixture
def rng():
    return random.Random(20240611)


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
