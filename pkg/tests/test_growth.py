from collections import deque

import pytest

from conftest import matmul
from freimanlab.errors import BudgetExceeded
from freimanlab.groups import Heisenberg, IntegerLattice, Integers, Lamplighter
from freimanlab.growth import (ball, classify_curve, covering_iteration, curve_csv,
                               generators, growth_profile, small_doubling_scale)
from freimanlab.setcalc import GroupSet, iterated_set

Z, Z2 = Integers(), IntegerLattice(2)
HEIS_BALLS = [1, 5, 17, 53, 135, 299, 593, 1069, 1793, 2845, 4309]


def lamp_gens():
    L = Lamplighter(64)
    return GroupSet(L, [(1, ()), (0, (0,))])


def matrix_ball_sizes(r_max):
    """BFS over 3x3 integer matrices, independent of the Mal'cev law."""
    gens = [[[1, 1, 0], [0, 1, 0], [0, 0, 1]], [[1, 0, 0], [0, 1, 1], [0, 0, 1]],
            [[1, -1, 0], [0, 1, 0], [0, 0, 1]], [[1, 0, 0], [0, 1, -1], [0, 0, 1]]]
    key = lambda m: tuple(map(tuple, m))
    one = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    seen = {key(one)}
    frontier = deque([one])
    sizes = [1]
    for _ in range(r_max):
        nxt = deque()
        for m in frontier:
            for g in gens:
                y = matmul(m, g)
                if key(y) not in seen:
                    seen.add(key(y))
                    nxt.append(y)
        frontier = nxt
        sizes.append(len(seen))
    return sizes


def test_ball_integers():
    for r in range(6):
        assert len(ball(GroupSet(Z, [1]), r)) == 2 * r + 1


def test_ball_lattice_diamond():
    S = GroupSet(Z2, [(1, 0), (0, 1)])
    for r in range(7):
        assert len(ball(S, r)) == 2 * r * r + 2 * r + 1


def test_heisenberg_balls_match_matrix_bfs():
    S = GroupSet(Heisenberg(), [(1, 0, 0), (0, 1, 0)])
    curve = growth_profile(S, 10)
    assert curve.sizes == HEIS_BALLS
    assert matrix_ball_sizes(7) == HEIS_BALLS[:8]


def test_ball_equals_signed_power():
    for S in (GroupSet(Heisenberg(), [(1, 0, 0), (0, 1, 0)]), lamp_gens(),
              GroupSet(Z2, [(1, 2), (0, 1)])):
        T = GroupSet(S.group, S.elements | {S.group.identity()})
        for r in range(1, 5):
            assert ball(S, r) == iterated_set(T, r, signed=True)


def test_ratio_bounded_by_generator_count():
    for S in (lamp_gens(), GroupSet(Heisenberg(), [(1, 0, 0), (0, 1, 0)])):
        curve = growth_profile(S, 8)
        k = len(generators(S))
        assert all(b <= k * a for a, b in zip(curve.sizes, curve.sizes[1:]))


def test_profile_integers_polynomial():
    curve = growth_profile(GroupSet(Z, [1]), 40)
    assert curve.classification == "polynomial-like"
    assert abs(curve.estimate - 1.0) < 0.1


def test_profile_lattice_polynomial():
    curve = growth_profile(GroupSet(Z2, [(1, 0), (0, 1)]), 40)
    assert curve.classification == "polynomial-like"
    assert abs(curve.estimate - 2.0) < 0.15


def test_profile_heisenberg_slope_trend():
    curve = growth_profile(GroupSet(Heisenberg(), [(1, 0, 0), (0, 1, 0)]), 10)
    assert curve.classification != "exponential-like"
    tail = curve.slopes[6:]
    assert tail == sorted(tail) and 3 < tail[-1] < 4


def test_profile_lamplighter_exponential():
    curve = growth_profile(lamp_gens(), 12)
    assert curve.classification == "exponential-like"
    assert all(r >= 1.2 for r in curve.ratios[5:])


def test_profile_saturates_in_finite_quotient():
    from freimanlab.groups import FiniteAbelian
    curve = growth_profile(GroupSet(FiniteAbelian((5,)), [(1,)]), 5)
    assert curve.classification == "saturated"


def test_partial_curve_flagged():
    curve = growth_profile(lamp_gens(), 30, budget=500)
    assert curve.partial and curve.r_max < 30
    assert any("stopped" in n for n in curve.notes)


def test_classify_curve_short():
    assert classify_curve([1, 3, 5])[0] == "indeterminate"


def test_csv_columns():
    text = curve_csv({0: 1, 1: 3, 2: 5})
    lines = text.strip().splitlines()
    assert lines[0] == "r,size,ratio,slope"
    assert lines[1].startswith("0,1,")
    assert lines[2].split(",")[:3] == ["1", "3", "3.000000"]


def test_scale_integers():
    sc = small_doubling_scale(GroupSet(Z, [1]), 100)
    assert sc.radius_range == (40, 63)
    assert sc.doubling <= 2.1


def test_scale_lattice():
    sc = small_doubling_scale(GroupSet(Z2, [(1, 0), (0, 1)]), 64)
    assert sc.doubling <= 4.2
    assert sc.doubling <= 2 ** 2 + 0.3


def test_scale_lamplighter_contrast():
    small = small_doubling_scale(lamp_gens(), 4).doubling
    large = small_doubling_scale(lamp_gens(), 8).doubling
    assert 1.5 <= small < large


def test_covering_integers():
    rep = covering_iteration(GroupSet(Z, [1]), GroupSet(Z, range(-5, 6)), 5)
    assert rep.X_prime == [0] and rep.n == 1
    assert rep.exponent == 1 and rep.r1 == 0
    assert rep.verified


def test_covering_lattice():
    S = GroupSet(Z2, [(1, 0), (0, 1)])
    rep = covering_iteration(S, ball(S, 2), 6)
    assert rep.verified
    assert len(rep.X) == 13 and len(rep.X_prime) == 1 and rep.n == 7
    assert rep.exponent == 1


def test_covering_n_cap():
    S = GroupSet(Z2, [(1, 0), (0, 1)])
    with pytest.raises(BudgetExceeded):
        covering_iteration(S, ball(S, 2), 6, n_cap=3)


def test_covering_report_serializes():
    rep = covering_iteration(GroupSet(Z, [1]), GroupSet(Z, range(-2, 3)), 4)
    d = rep.to_dict(Z)
    assert d["checks"] == rep.checks and d["X_prime"]
