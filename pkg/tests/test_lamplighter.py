import random
from fractions import Fraction

import pytest

from freimanlab.errors import ConfigError, WindowOverflow
from freimanlab.groups import Integers, Lamplighter, PeriodicLamplighter
from freimanlab.lamplighter import (OFFSET, F2Span, Lamps, classify, converse_doubling,
                                    find_progression, planted_graph, verify_freiman_mod_V)
from freimanlab.setcalc import GroupSet, control_holds


def test_f2_span_basics():
    S = F2Span([0b011, 0b110, 0b101])
    assert S.dim == 2
    assert 0b101 in S and 0b001 not in S
    assert S.elements() == [0, 0b011, 0b101, 0b110]
    assert F2Span([0b011]) <= S


def test_lamps_round_trip():
    L = Lamps(Lamplighter(8))
    g = (3, (-2, 0, 5))
    assert L.element(3, L.vector(g)) == g
    assert L.vector(L.G.mul(g, (1, ()))) == L.shift(L.vector(g), 1)


def test_lamps_rejects_other_groups():
    with pytest.raises(ConfigError):
        Lamps(Integers())


def test_find_progression_interval_and_step():
    P = find_progression([-4, 0, 4], range(-20, 21))
    assert (P.v, P.N) == ((4,), (1,))
    assert find_progression([0], [0]).rank == 0


def test_case1_subgroup():
    G = PeriodicLamplighter(8)
    U = F2Span([0b11, 0b1100])
    A = GroupSet(G, [(0, v) for v in U.elements()])
    cls = classify(A)
    assert cls.case == "Case1"
    assert cls.V == U
    assert cls.control.X == GroupSet(G, [G.identity()])
    assert all(cls.checks.values())
    assert converse_doubling(cls) == (1, False)


def test_case2_abelian_section():
    G = Lamplighter(64)
    A = GroupSet(G, [(n, ()) for n in range(-4, 5)])
    cls = classify(A)
    assert cls.case == "Case2" and cls.d == 1
    assert (cls.P.v, cls.P.N) == ((1,), (4,))
    assert set(cls.phi.values()) == {0}
    assert cls.V.dim == 0
    assert all(cls.checks.values())
    assert converse_doubling(cls) == (Fraction(17, 9), False)


def test_case2_records_gcd():
    G = Lamplighter(64)
    cls = classify(GroupSet(G, [(2 * n, ()) for n in range(-4, 5)]))
    assert cls.case == "Case2" and cls.d == 2
    assert all(n % 2 == 0 for n in cls.phi)


def test_case2_planted_graph_windowed():
    G = Lamplighter(128)
    A, phi = planted_graph(G, [0, 2], 8)
    cls = classify(A)
    assert cls.case == "Case2" and cls.V.dim == 0
    assert cls.phi == phi
    assert all(cls.checks.values())
    assert control_holds(A, cls.B, cls.control.X)
    k, flagged = converse_doubling(cls)
    assert k == Fraction(33, 17) and not flagged


def test_case2_planted_graph_periodic():
    G = PeriodicLamplighter(8)
    A, phi = planted_graph(G, [0, 3], 8)
    cls = classify(A)
    assert cls.case == "Case2"
    assert all(cls.V.reduce(cls.phi[n]) == cls.V.reduce(phi[n]) for n in phi)
    assert converse_doubling(cls)[0] <= 4


def test_case2_with_invariant_subspace():
    G = PeriodicLamplighter(8)
    U = [0, 0x55, 0xAA, 0xFF]
    A = GroupSet(G, [(n, u) for n in range(-3, 4) for u in U])
    cls = classify(A)
    assert cls.case == "Case2"
    assert cls.V.elements() == U
    assert cls.checks["V_shift_invariant"]


def test_window_overflow_is_reported():
    A, _ = planted_graph(Lamplighter(64), [0, 2], 8)
    with pytest.raises(WindowOverflow):
        classify(A)


def test_doubling_bound_enforced():
    G = Lamplighter(32)
    A = GroupSet(G, [(0, ()), (1, ()), (0, (0,)), (3, (1,))])
    with pytest.raises(ConfigError):
        classify(A, K=1)


def test_freiman_zero_map_passes():
    phi = {n: 0 for n in range(-4, 5)}
    assert verify_freiman_mod_V(Lamplighter(16), phi) is None


def test_freiman_random_map_fails_with_quadruple():
    G = Lamplighter(16)
    r = random.Random(1)
    phi = {n: (r.getrandbits(6) << OFFSET) if n else 0 for n in range(-3, 4)}
    quad = verify_freiman_mod_V(G, phi)
    assert quad == (-3, -2, -2, -3)
    n1, n2, n3, n4 = quad
    assert n1 + n2 == n3 + n4
    L = Lamps(G)
    g = {n: L.element(n, v) for n, v in phi.items()}
    assert G.mul(g[n1], g[n2]) != G.mul(g[n3], g[n4])


def test_freiman_whole_space_is_vacuous():
    G = PeriodicLamplighter(8)
    r = random.Random(2)
    phi = {n: r.getrandbits(8) for n in range(-3, 4)}
    assert verify_freiman_mod_V(G, phi, F2Span([1 << i for i in range(8)])) is None


def test_span_chain_non_decreasing():
    A, _ = planted_graph(PeriodicLamplighter(8), [0, 1], 4)
    cls = classify(A)
    assert cls.chain == sorted(cls.chain)
