"""Finite product-set calculus over a group.

Everything here is exact enumeration.  A GroupSet pairs a group with a
frozenset of canonical elements; iteration is always in sorted order so
that greedy choices are reproducible.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import BudgetExceeded, ConfigError, MixedGroupError
from .groups import Group

EXHAUSTIVE_CAP = 4096


class GroupSet:
    __slots__ = ("group", "elements", "_sorted")

    def __init__(self, group: Group, elements: Iterable):
        self.group = group
        self.elements = frozenset(elements)
        self._sorted = None

    @classmethod
    def checked(cls, group: Group, elements: Iterable) -> "GroupSet":
        elements = list(elements)
        for g in elements:
            if not group.is_element(g):
                raise MixedGroupError(f"{g!r} is not an element of {group.spec}")
        return cls(group, elements)

    def sorted(self) -> List:
        if self._sorted is None:
            self._sorted = sorted(self.elements)
        return self._sorted

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.sorted())

    def __contains__(self, g):
        return g in self.elements

    def __eq__(self, other):
        return (isinstance(other, GroupSet) and self.group == other.group
                and self.elements == other.elements)

    def __hash__(self):
        return hash((self.group, self.elements))

    def __le__(self, other):
        return self.elements <= other.elements

    def __or__(self, other):
        _same(self, other)
        return GroupSet(self.group, self.elements | other.elements)

    def __and__(self, other):
        _same(self, other)
        return GroupSet(self.group, self.elements & other.elements)

    def __sub__(self, other):
        _same(self, other)
        return GroupSet(self.group, self.elements - other.elements)

    def __repr__(self):
        items = self.sorted()
        shown = ", ".join(map(repr, items[:6]))
        more = ", ..." if len(items) > 6 else ""
        return f"GroupSet({self.group.spec}, {{{shown}{more}}}, size={len(items)})"

    def inverse(self) -> "GroupSet":
        inv = self.group.inv
        return GroupSet(self.group, (inv(g) for g in self.elements))

    def is_centred(self) -> bool:
        G = self.group
        return G.identity() in self.elements and all(
            G.inv(g) in self.elements for g in self.elements)

    def serialize(self) -> List[str]:
        return [self.group.serialize(g) for g in self.sorted()]


def _same(A: GroupSet, B: GroupSet):
    if A.group != B.group:
        raise MixedGroupError(f"operands live in {A.group.spec} and {B.group.spec}")


def singleton(G: Group, g=None) -> GroupSet:
    return GroupSet(G, [G.identity() if g is None else g])


def product_set(A: GroupSet, B: GroupSet) -> GroupSet:
    _same(A, B)
    mul = A.group.mul
    return GroupSet(A.group, {mul(a, b) for a in A.elements for b in B.elements})


def product_of(sets: List[GroupSet]) -> GroupSet:
    out = sets[0]
    for S in sets[1:]:
        out = product_set(out, S)
    return out


def translate(x, A: GroupSet, side: str = "left") -> GroupSet:
    mul = A.group.mul
    if side == "left":
        return GroupSet(A.group, (mul(x, a) for a in A.elements))
    return GroupSet(A.group, (mul(a, x) for a in A.elements))


def symmetric_hull(A: GroupSet) -> GroupSet:
    """A together with 1 and A^-1."""
    G = A.group
    return GroupSet(G, A.elements | {G.inv(a) for a in A.elements} | {G.identity()})


def iterated_set(A: GroupSet, k: int, signed: bool = False,
                 budget: Optional[int] = None) -> GroupSet:
    """A^k, or A^{±k} when signed is true."""
    if k < 1:
        if k == 0:
            return singleton(A.group)
        raise ConfigError("iterated_set needs k >= 0")
    if signed:
        return ball_sizes(symmetric_hull(A), k, budget=budget)[1]
    out = A
    for _ in range(k - 1):
        out = product_set(out, A)
        if budget is not None and len(out) > budget:
            raise BudgetExceeded(f"|A^k| exceeded {budget}")
    return out


def ball_sizes(S: GroupSet, radius: int,
               budget: Optional[int] = None) -> Tuple[List[int], GroupSet]:
    """Sizes of S^0, S^1, ..., S^radius for S containing the identity.

    Only the newest shell is multiplied at each step, which is valid
    because 1 in S makes the powers nested.
    """
    G = S.group
    if G.identity() not in S.elements:
        raise ConfigError("ball_sizes needs the identity in S")
    gens = [s for s in S.sorted() if s != G.identity()]
    mul = G.mul
    seen = {G.identity()}
    frontier = [G.identity()]
    sizes = [1]
    for _ in range(radius):
        nxt = []
        for x in frontier:
            for s in gens:
                y = mul(x, s)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if budget is not None and len(seen) > budget:
            raise BudgetExceeded(f"ball exceeded {budget} elements")
        frontier = nxt
        sizes.append(len(seen))
    return sizes, GroupSet(G, seen)


def expansion_constants(A: GroupSet) -> Tuple[Fraction, Fraction]:
    if not A.elements:
        raise ConfigError("expansion constants need a non-empty set")
    A2 = product_set(A, A)
    A3 = product_set(A2, A)
    return Fraction(len(A2), len(A)), Fraction(len(A3), len(A))


def symmetrized_cube(A: GroupSet) -> GroupSet:
    return iterated_set(A, 3, signed=True)


# certificates


@dataclass
class ApproxCertificate:
    K: Fraction
    X: GroupSet
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return len(self.checks) == 4 and all(self.checks.values())


def certificate_checks(A: GroupSet, X: GroupSet) -> Dict[str, bool]:
    """The four inclusions A^2 < XA, XA < AXX, A^2 < AX, AX < XXA."""
    A2 = product_set(A, A)
    XA = product_set(X, A)
    AX = product_set(A, X)
    XX = product_set(X, X)
    return {
        "A2<XA": A2 <= XA,
        "XA<AXX": XA <= product_set(A, XX),
        "A2<AX": A2 <= AX,
        "AX<XXA": AX <= product_set(XX, A),
    }


def _require_centred(A: GroupSet):
    if not A.is_centred():
        raise ConfigError("set must contain the identity and be symmetric")


def _greedy_two_sided_cover(targets: GroupSet, B: GroupSet, limit: int) -> List:
    """Pick x's until every target lies in XB and in BX.

    Each step takes the canonically first target missing from either
    side, and among the translates that would reach it chooses the one
    covering the most still-missing targets (identity first, then
    canonical order, on ties).
    """
    G = B.group
    mul, inv = G.mul, G.inv
    B_inv = [inv(b) for b in B.sorted()]
    need_left = set(targets.elements)
    need_right = set(targets.elements)
    X: List = []
    one = G.identity()
    while need_left or need_right:
        y = min(need_left | need_right)
        cands = {mul(y, bi) for bi in B_inv} | {mul(bi, y) for bi in B_inv}
        best, best_key = None, None
        for x in cands:
            gain = (sum(1 for b in B.elements if mul(x, b) in need_left)
                    + sum(1 for b in B.elements if mul(b, x) in need_right))
            key = (-gain, x != one, x)
            if best_key is None or key < best_key:
                best, best_key = x, key
        X.append(best)
        if len(X) > limit:
            raise BudgetExceeded(f"covering needed more than {limit} translates")
        for b in B.elements:
            need_left.discard(mul(best, b))
            need_right.discard(mul(b, best))
    return X


def approx_certificate(A: GroupSet, method: str = "greedy",
                       budget: int = 4096) -> ApproxCertificate:
    _require_centred(A)
    G = A.group
    A2 = product_set(A, A)
    if method == "greedy":
        X = _greedy_two_sided_cover(A2, A, budget)
        X_set = GroupSet(G, X)
        checks = certificate_checks(A, X_set)
        # the covering step only guarantees the first and third inclusions;
        # close X under the failing ones, bounded by the budget
        while not all(checks.values()):
            XX = product_set(X_set, X_set)
            missing = (product_set(X_set, A) - product_set(A, XX)) | \
                      (product_set(A, X_set) - product_set(XX, A))
            X_set = X_set | GroupSet(G, [missing.sorted()[0]])
            if len(X_set) > budget:
                raise BudgetExceeded("greedy certificate exceeded budget")
            checks = certificate_checks(A, X_set)
        return ApproxCertificate(Fraction(len(X_set)), X_set, checks)
    if method == "exhaustive":
        if len(A) > budget:
            raise BudgetExceeded(f"exhaustive search needs |A| <= {budget}")
        inv = G.inv
        cands = sorted({G.mul(y, inv(a)) for y in A2.elements for a in A.elements}
                       | {G.mul(inv(a), y) for y in A2.elements for a in A.elements})
        tried = 0
        for size in range(1, len(cands) + 1):
            for combo in itertools.combinations(cands, size):
                tried += 1
                if tried > EXHAUSTIVE_CAP:
                    raise BudgetExceeded(
                        f"exhaustive search exceeded {EXHAUSTIVE_CAP} candidate sets")
                X_set = GroupSet(G, combo)
                checks = certificate_checks(A, X_set)
                if all(checks.values()):
                    return ApproxCertificate(Fraction(size), X_set, checks)
        raise BudgetExceeded("no certificate among candidate translates")
    raise ConfigError(f"unknown method {method!r}")


@dataclass
class ControlCertificate:
    K: Fraction
    X: GroupSet
    # the subgroup hosting B; recorded only, never enforced
    ambient: Optional[str] = None


def control_holds(A: GroupSet, B: GroupSet, X: GroupSet) -> bool:
    return A <= (product_set(X, B) & product_set(B, X))


def control_certificate(A: GroupSet, B: GroupSet,
                        budget: int = 256) -> ControlCertificate:
    """Greedy X with A inside XB and BX; K = max(|X|, |B|/|A|)."""
    _same(A, B)
    if not A.elements or not B.elements:
        raise ConfigError("control needs non-empty sets")
    X = GroupSet(A.group, _greedy_two_sided_cover(A, B, budget))
    K = max(Fraction(len(X)), Fraction(len(B), len(A)), Fraction(1))
    return ControlCertificate(K, X, ambient=B.group.spec)


def compose_control(A: GroupSet, X: GroupSet, Y: GroupSet, C: GroupSet) -> ControlCertificate:
    """From A < XB and BX and B < YC and CY, a set Z with A < ZC and CZ.

    XYC covers A on the left and CYX on the right, so Z = XY u YX works;
    in abelian groups the two products coincide.
    """
    Z = product_set(X, Y) | product_set(Y, X)
    K = max(Fraction(len(Z)), Fraction(len(C), len(A)), Fraction(1))
    return ControlCertificate(K, Z, ambient=C.group.spec)


# projections


@dataclass
class FiberReport:
    k: int
    image_size: int
    fiber_min: int
    fiber_max: int
    fiber_mean: float
    kernel_size: int
    comparability: float  # max/min fiber size, the empirical constant

    def as_dict(self):
        return dict(self.__dict__)


def fiber_statistics(A: GroupSet, projection: str, k: int = 3) -> FiberReport:
    """Fibres of A^k over the points of pi(A)."""
    G = A.group
    Q, pi = G.projection(projection)
    image = {pi(a) for a in A.elements}
    Ak = iterated_set(A, k)
    counts: Dict = {}
    for g in Ak.elements:
        h = pi(g)
        if h in image:
            counts[h] = counts.get(h, 0) + 1
    sizes = [counts.get(h, 0) for h in image]
    kernel = counts.get(Q.identity(), 0) if Q.identity() in image else sum(
        1 for g in Ak.elements if pi(g) == Q.identity())
    lo, hi = min(sizes), max(sizes)
    return FiberReport(k, len(image), lo, hi, sum(sizes) / len(sizes), kernel,
                       hi / lo if lo else float("inf"))


# fast powers in the Heisenberg group


def _runs(values: List[int]) -> List[Tuple[int, int]]:
    values = sorted(values)
    out = []
    lo = prev = values[0]
    for v in values[1:]:
        if v != prev + 1:
            out.append((lo, prev))
            lo = v
        prev = v
    out.append((lo, prev))
    return out


def _add_interval(mask: int, length: int) -> int:
    """Bit set mask + {0, ..., length}."""
    out, span = mask, 1
    while span * 2 <= length + 1:
        out |= out << span
        span *= 2
    if length + 1 > span:
        out |= out << (length + 1 - span)
    return out


def _heisenberg_power_sizes(S: GroupSet, n_max: int) -> List[int]:
    # A set is stored fibrewise over the abelianisation: (a, b) -> (base, mask)
    # where bit k of mask means (a, b, base + k) is present.
    fibres: Dict[Tuple[int, int], List[int]] = {}
    for a, b, c in S.elements:
        fibres.setdefault((a, b), []).append(c)
    step = [(ab, _runs(cs)) for ab, cs in sorted(fibres.items())]
    current = {ab: (min(cs), sum(1 << (c - min(cs)) for c in set(cs)))
               for ab, cs in fibres.items()}
    sizes = [sum(bin(m).count("1") for _, m in current.values())]
    for _ in range(n_max - 1):
        nxt: Dict[Tuple[int, int], Tuple[int, int]] = {}
        for (a, b), (base, mask) in current.items():
            for (x, y), runs in step:
                key = (a + x, b + y)
                for lo, hi in runs:
                    nb = base + lo + a * y
                    nm = _add_interval(mask, hi - lo)
                    old = nxt.get(key)
                    if old is None:
                        nxt[key] = (nb, nm)
                    elif nb >= old[0]:
                        nxt[key] = (old[0], old[1] | (nm << (nb - old[0])))
                    else:
                        nxt[key] = (nb, nm | (old[1] << (old[0] - nb)))
        current = nxt
        sizes.append(sum(bin(m).count("1") for _, m in current.values()))
    return sizes


def power_sizes(S: GroupSet, n_max: int, budget: Optional[int] = None) -> List[int]:
    """|S^1|, ..., |S^n_max| for S containing the identity."""
    from .groups import Heisenberg
    if S.group.identity() not in S.elements:
        raise ConfigError("power_sizes needs the identity in S")
    if isinstance(S.group, Heisenberg):
        return _heisenberg_power_sizes(S, n_max)
    return ball_sizes(S, n_max, budget=budget)[0][1:]
