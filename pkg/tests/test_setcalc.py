import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import naive_power, naive_sumset
from freimanlab.errors import ConfigError, MixedGroupError
from freimanlab.groups import FiniteAbelian, Heisenberg, Integers, Lamplighter, UT3
from freimanlab.nilprog import enumerate_cnp, helfgott1
from freimanlab.setcalc import (GroupSet, approx_certificate, ball_sizes, certificate_checks,
                                compose_control, control_certificate, control_holds,
                                expansion_constants, fiber_statistics, iterated_set, power_sizes,
                                product_set, symmetric_hull, symmetrized_cube)

Z = Integers()


def interval(lo, hi):
    return GroupSet(Z, range(lo, hi + 1))


def heis_ball(r):
    H = Heisenberg()
    S = GroupSet(H, [(0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)])
    return iterated_set(S, r)


def test_small_sumset():
    assert product_set(interval(0, 1), interval(0, 1)) == interval(0, 2)


def test_subgroup_squared_is_itself():
    G = FiniteAbelian((6,))
    H = GroupSet(G, [(0,), (2,), (4,)])
    assert product_set(H, H) == H
    assert expansion_constants(H) == (1, 1)
    assert symmetrized_cube(H) == H


def test_mixed_groups_rejected():
    with pytest.raises(MixedGroupError):
        product_set(interval(0, 1), GroupSet(FiniteAbelian((2,)), [(0,)]))


def test_helfgott_product_set_against_brute_force():
    A = enumerate_cnp(helfgott1(5, 1, 2, 3))
    G = A.group
    AA = product_set(A, A)
    assert (len(A), len(AA)) == (375, 500)
    assert AA.elements == naive_sumset(G, A.elements, A.elements)


def test_helfgott_expansion_constants_n2():
    # at N = 2 the set already fills its 500-element subgroup
    A = enumerate_cnp(helfgott1(5, 2, 2, 3))
    assert expansion_constants(A) == (1, 1)


def test_iterated_set_examples():
    one = GroupSet(Z, [0])
    assert iterated_set(one, 4, signed=True) == one
    A = interval(-5, 5)
    for n in range(1, 6):
        An = iterated_set(A, n, signed=True)
        assert An == interval(-5 * n, 5 * n)
        assert len(An) == 10 * n + 1


def test_lamplighter_powers_grow_exponentially():
    L = Lamplighter(64)
    A = GroupSet(L, [(1, ()), (-1, ()), (0, (0,))])
    sizes = [len(iterated_set(A, r, signed=True)) for r in range(5, 13)]
    assert sizes == [84, 155, 278, 490, 850, 1457, 2474, 4167]
    assert all(b >= 1.2 * a for a, b in zip(sizes, sizes[1:]))


def test_interval_doubling():
    assert expansion_constants(interval(0, 9)) == (Fraction(19, 10), Fraction(28, 10))


def test_expansion_needs_elements():
    with pytest.raises(ConfigError):
        expansion_constants(GroupSet(Z, []))


def test_symmetrized_cube_of_interval():
    assert symmetrized_cube(interval(0, 9)) == interval(-27, 27)


def test_certificate_subgroup():
    G = FiniteAbelian((4, 2))
    H = GroupSet(G, [(0, 0), (2, 0), (0, 1), (2, 1)])
    cert = approx_certificate(H)
    assert cert.K == 1 and cert.X == GroupSet(G, [(0, 0)]) and cert.valid


def test_certificate_interval():
    N = 6
    cert = approx_certificate(interval(-N, N))
    assert cert.K == 2 and cert.X == GroupSet(Z, [-N, N]) and cert.valid


def test_exhaustive_certificate_is_minimal():
    cert = approx_certificate(interval(-3, 3), method="exhaustive")
    assert cert.K == 2 and cert.valid


def test_heisenberg_ball_certificate():
    A = heis_ball(2)
    cert = approx_certificate(A)
    assert (len(A), cert.K) == (17, 12)
    assert certificate_checks(A, cert.X) == cert.checks
    assert cert.valid


def test_certificate_needs_centred_set():
    with pytest.raises(ConfigError):
        approx_certificate(interval(0, 3))


def test_power_bound_from_certificate():
    for A in (interval(-4, 4), heis_ball(1), heis_ball(2)):
        cert = approx_certificate(A)
        for k in range(1, 6):
            assert len(iterated_set(A, k)) <= cert.K ** (k - 1) * len(A)


def test_control_self():
    A = interval(3, 8)
    cert = control_certificate(A, A)
    assert cert.K == 1 and cert.X == GroupSet(Z, [0])


def test_control_interval_by_half():
    A, B = interval(0, 19), interval(0, 9)
    cert = control_certificate(A, B)
    assert cert.K == 2 and cert.X == GroupSet(Z, [0, 10])
    assert control_holds(A, B, cert.X)


def test_control_transitivity():
    A, B, C = interval(0, 39), interval(0, 19), interval(0, 4)
    c1 = control_certificate(A, B)
    c2 = control_certificate(B, C)
    comp = compose_control(A, c1.X, c2.X, C)
    assert control_holds(A, C, comp.X)
    assert comp.K <= c1.K * c2.K * 2


def test_control_transitivity_nonabelian():
    A = heis_ball(3)
    B = heis_ball(2)
    C = heis_ball(1)
    c1, c2 = control_certificate(A, B), control_certificate(B, C)
    comp = compose_control(A, c1.X, c2.X, C)
    assert control_holds(A, C, comp.X)
    assert len(comp.X) <= len(c1.X) * len(c2.X) * 2


def test_fiber_statistics_against_enumeration():
    L = Lamplighter(8)
    A = GroupSet(L, [(n, x) for n in range(-2, 3) for x in [(), (0,)]])
    rep = fiber_statistics(A, "pi", 3)
    A3 = naive_power(L, A.elements, 3)
    fibres = {}
    for n, _ in A3:
        fibres[n] = fibres.get(n, 0) + 1
    assert (rep.image_size, rep.fiber_min, rep.fiber_max, rep.kernel_size) == (5, 16, 24, 16)
    assert rep.kernel_size == fibres[0]
    assert rep.fiber_max == max(fibres[n] for n in range(-2, 3))


def test_fiber_statistics_equal_fibres_for_products():
    L = Lamplighter(4)
    # only lamps at position 0 and shifts 0 -> the fibre over 0 is the subgroup
    A = GroupSet(L, [(0, ()), (0, (0,))])
    rep = fiber_statistics(A, "pi", 3)
    assert rep.fiber_min == rep.fiber_max == 2 and rep.comparability == 1.0


def test_kernel_lower_bound_on_random_lamplighter_sets(rng):
    L = Lamplighter(32)
    for _ in range(10):
        A = symmetric_hull(GroupSet(L, [L.random_element(rng, 2) for _ in range(4)]))
        rep = fiber_statistics(A, "pi", 3)
        assert rep.kernel_size * rep.image_size >= len(A)


def test_ball_sizes_needs_identity():
    with pytest.raises(ConfigError):
        ball_sizes(GroupSet(Z, [1]), 2)


def test_heisenberg_power_sizes_fast_path_matches_bfs():
    S = symmetric_hull(GroupSet(Heisenberg(), [(1, 0, 0), (0, 1, 0), (1, 1, 2)]))
    assert power_sizes(S, 6) == ball_sizes(S, 6)[0][1:]


random_sets = st.lists(st.integers(-20, 20), min_size=1, max_size=8)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_inverse_identities(seed):
    r = random.Random(seed)
    G = UT3(3)
    A = GroupSet(G, [G.random_element(r) for _ in range(4)])
    B = GroupSet(G, [G.random_element(r) for _ in range(4)])
    assert A.inverse().inverse() == A
    assert product_set(A, B).inverse() == product_set(B.inverse(), A.inverse())


@settings(max_examples=80, deadline=None)
@given(random_sets, random_sets)
def test_product_size_bounds(a, b):
    A, B = GroupSet(Z, a + [0]), GroupSet(Z, b + [0])
    AB = product_set(A, B)
    assert max(len(A), len(B)) <= len(AB) <= len(A) * len(B)


@settings(max_examples=40, deadline=None)
@given(random_sets)
def test_signed_powers_nested_and_centred(a):
    A = GroupSet(Z, a)
    prev = iterated_set(A, 1, signed=True)
    for k in range(2, 4):
        cur = iterated_set(A, k, signed=True)
        assert prev <= cur and cur.is_centred()
        prev = cur


@settings(max_examples=40, deadline=None)
@given(random_sets)
def test_tripling_at_least_doubling(a):
    A = GroupSet(Z, a + [0])
    k2, k3 = expansion_constants(A)
    assert 1 <= k2 <= k3
