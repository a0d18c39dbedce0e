import warnings
from fractions import Fraction

import numpy as np
import pytest

from freimanlab.action import (SCENARIOS, ActionContext, PreconditionWarning,
                               composition_defect, defect, ess_check, good_coset_progression,
                               invariant_torsion_group, key_proposition, near_invariant,
                               orbit_set, planted_mismatches, scenario, verify_report)
from freimanlab.abelian import enumerate_progression
from freimanlab.errors import ConfigError, FreimanError
from freimanlab.groups import FiniteAbelian, Integers
from freimanlab.setcalc import GroupSet, iterated_set

EPS = Fraction(1, 5)
Z = Integers()


def interval(n):
    return GroupSet(Z, range(-n, n + 1))


def coordinate_context(V, act, E=None):
    E = E or GroupSet(V, [V.identity()])
    return ActionContext(Z, V, act, interval(1), E)


def swap(g, c):
    return c[:, ::-1] if g % 2 else c


def cyclic_shift(g, c):
    return np.roll(c, g, axis=1)


def test_scenarios_are_actions():
    for name in SCENARIOS:
        ctx = scenario(name)
        assert ctx.check_action(30) == [], name


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        scenario("nosuch")


def test_context_requires_centred_sets():
    V = FiniteAbelian((5,))
    with pytest.raises(ConfigError):
        ActionContext(Z, V, lambda g, c: c, GroupSet(Z, [0, 1]), GroupSet(V, [(0,)]))


def test_orbit_set_trivial_action():
    ctx = scenario("trivial")
    assert orbit_set(ctx, 2, ctx.E) == ctx.E


def test_orbit_set_shift_moves_lamp():
    ctx = scenario("shift-lamplighter")
    e0 = (1,) + (0,) * 7
    out = orbit_set(ctx, GroupSet(ctx.G, [(1, ())]), GroupSet(ctx.V, [e0]))
    assert out == GroupSet(ctx.V, [(0, 1) + (0,) * 6])


def test_orbit_set_against_enumeration():
    ctx = scenario("shift-lamplighter")
    V = ctx.V
    A2 = iterated_set(ctx.A, 2)
    twoE = GroupSet(V, {V.mul(x, y) for x in ctx.E.elements for y in ctx.E.elements})
    direct = {ctx.apply(a, v) for a in A2.elements for v in twoE.elements}
    assert orbit_set(ctx, 2, twoE).elements == direct


def test_ess_hypothesis_holds_on_desk_scenarios():
    for name in ("trivial", "shift-lamplighter", "planted-unipotent"):
        assert ess_check(scenario(name)).holds


def test_near_invariant_whole_space():
    V = FiniteAbelian((7,))
    ctx = ActionContext(Z, V, lambda g, c: (c * pow(2, g % 3, 7)) % 7, interval(5),
                        GroupSet(V, V.elements()))
    res = near_invariant(ctx, EPS)
    assert res.E_prime == GroupSet(V, V.elements())
    assert res.max_defect == 0


def test_near_invariant_trivial_action():
    ctx = scenario("trivial")
    res = near_invariant(ctx, EPS)
    assert res.max_defect == 0
    assert len(res.E_prime & ctx.E) >= len(ctx.E) // 2


@pytest.mark.parametrize("name", ["trivial", "shift-lamplighter", "planted-unipotent"])
def test_near_invariant_defects_exact(name):
    ctx = scenario(name)
    res = near_invariant(ctx, EPS)
    mask = ctx.space.mask(res.E_prime.elements)
    for a in res.A_prime.elements:
        moved = {ctx.apply(a, v) for v in res.E_prime.elements}
        direct = Fraction(len(moved - res.E_prime.elements), len(res.E_prime))
        assert direct == defect(ctx, a, mask) <= EPS
    assert res.A_prime.is_centred()


def test_near_invariant_planted_golden():
    ctx = scenario("planted-unipotent")
    res = near_invariant(ctx, EPS)
    assert (len(res.E_prime), len(res.A_prime), res.max_defect) == (113, 5, Fraction(12, 113))
    assert [composition_defect(ctx, res, j) for j in range(1, 5)] == \
        [Fraction(12 * j, 113) for j in range(1, 5)]


def test_averaging_norms():
    res = near_invariant(scenario("shift-lamplighter"), EPS)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(res.l2, res.l2[1:]))
    assert all(abs(m - res.l1[0]) < 1e-9 * res.l1[0] for m in res.l1)


def test_good_coset_trivial_action():
    gc = good_coset_progression(scenario("trivial"))
    assert gc.joke and gc.contains_E


def test_good_coset_shift():
    gc = good_coset_progression(scenario("shift-lamplighter"))
    assert gc.joke and gc.contains_E


def test_good_coset_planted_invariant_progression():
    ctx = scenario("planted-invariant")
    gc = good_coset_progression(ctx)
    assert gc.joke and gc.contains_E
    assert ctx.E <= enumerate_progression(gc.C)
    assert gc.c <= 4


def test_torsion_trivial_action():
    V = FiniteAbelian((2, 2))
    ctx = coordinate_context(V, lambda g, c: c)
    Hp = frozenset({(0, 0), (1, 0)})
    X, chain = invariant_torsion_group(ctx, Hp, ctx.A)
    assert X == Hp and chain == [2]


def test_torsion_swap_fixes_diagonal():
    V = FiniteAbelian((2, 2))
    ctx = coordinate_context(V, swap)
    diag = frozenset({(0, 0), (1, 1)})
    X, _ = invariant_torsion_group(ctx, diag, ctx.A)
    assert X == diag


def test_torsion_shift_closure_is_everything():
    V = FiniteAbelian((2, 2, 2))
    ctx = coordinate_context(V, cyclic_shift)
    X, chain = invariant_torsion_group(ctx, frozenset({(0, 0, 0), (1, 0, 0)}), ctx.A)
    assert X == frozenset(V.elements())
    assert chain == [2, 8]


def test_key_proposition_trivial_has_zero_coefficients():
    ctx = scenario("trivial")
    rep = key_proposition(ctx)
    assert rep.verified
    for rows in rep.table.values():
        for h, n in rows:
            assert h == ctx.V.identity() and all(x == 0 for x in n)


def test_key_proposition_shift():
    ctx = scenario("shift-lamplighter")
    rep = key_proposition(ctx)
    assert rep.verified
    assert verify_report(ctx, rep, 1000, seed=1) == 0


def test_key_proposition_planted_recovers_shear():
    ctx = scenario("planted-unipotent")
    rep = key_proposition(ctx)
    assert rep.verified
    assert rep.dims == [128, 8]
    assert [tuple(g) for g in rep.gens] == [(1, 0), (0, 1)]
    assert planted_mismatches(ctx, rep) == 0
    assert verify_report(ctx, rep, 1000, seed=2) == 0
    d = rep.to_dict()
    assert d["verified"] and d["dims"] == [128, 8]


def test_planted_mismatches_needs_planted_scenario():
    ctx = scenario("trivial")
    with pytest.raises(ConfigError):
        planted_mismatches(ctx, key_proposition(ctx))


def test_adversarial_warns_and_fails_with_stage():
    ctx = scenario("adversarial")
    assert not ess_check(ctx).holds
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with pytest.raises(FreimanError) as info:
            key_proposition(ctx)
    assert any(issubclass(w.category, PreconditionWarning) for w in caught)
    assert info.value.stage.startswith("good_coset")
