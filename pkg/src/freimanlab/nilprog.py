"""Coset nilprogressions stored as explicit tables.

Level i (1-based) carries a finite abelian group H_{i,0} and intervals
H_{i,j} = {-N_ij..N_ij}, each with a table phi_{i,j} into the ambient.
The set itself is the ordered product over levels l down to 1, and
within a level over j = 0..r_i.
"""
from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import BudgetExceeded, ConfigError
from .groups import (UT3, FiniteAbelian, Group, Heisenberg, closure, finite_series,
                     series_length)
from .setcalc import GroupSet, power_sizes, product_set, singleton, symmetric_hull


class IntervalDomain:
    def __init__(self, N: int):
        if N < 1:
            raise ConfigError("interval dimension must be positive")
        self.N = N
        self.zero = 0

    def elements(self):
        return range(-self.N, self.N + 1)

    def add(self, n, m):
        s = n + m
        return s if -self.N <= s <= self.N else None

    def neg(self, n):
        return -n

    def __len__(self):
        return 2 * self.N + 1

    def __repr__(self):
        return f"[-{self.N}..{self.N}]"


class FiniteDomain:
    """A finite abelian group given by its elements inside some group."""

    def __init__(self, group: Group, elements=None):
        self.group = group
        if elements is None:
            elements = group.elements()
        self._elements = sorted(elements)
        self.zero = group.identity()

    @classmethod
    def cyclic(cls, *orders: int) -> "FiniteDomain":
        return cls(FiniteAbelian(tuple(orders) or (1,)))

    def elements(self):
        return self._elements

    def add(self, n, m):
        return self.group.mul(n, m)

    def neg(self, n):
        return self.group.inv(n)

    def __len__(self):
        return len(self._elements)

    def __repr__(self):
        return f"finite({len(self)})"


@dataclass
class Factor:
    domain: object
    table: Dict

    def image(self) -> set:
        return set(self.table.values())

    def __call__(self, n):
        return self.table[n]


def trivial_factor(G: Group) -> Factor:
    return Factor(FiniteDomain.cyclic(1), {(0,): G.identity()})


def power_factor(G: Group, g, N: int) -> Factor:
    return Factor(IntervalDomain(N), {n: G.pow(g, n) for n in range(-N, N + 1)})


@dataclass
class CosetNilprogression:
    group: Group
    levels: List[List[Factor]] = field(default_factory=list)
    name: str = ""

    @property
    def l(self) -> int:
        return len(self.levels)

    @property
    def ranks(self) -> Tuple[int, ...]:
        return tuple(len(level) - 1 for level in self.levels)

    def factor(self, i: int, j: int) -> Factor:
        return self.levels[i - 1][j]

    def volume(self) -> int:
        return math.prod(len(f.domain) for level in self.levels for f in level)

    def dilation_keys(self) -> List[Tuple[int, int]]:
        return [(i, j) for i in range(1, self.l + 1)
                for j in range(1, self.ranks[i - 1] + 1)]

    def ones(self) -> Dict[Tuple[int, int], int]:
        return {k: 1 for k in self.dilation_keys()}


def mutate_entry(C: CosetNilprogression, i: int, j: int, n, g) -> CosetNilprogression:
    """Copy of C with phi_{i,j}(n) replaced by g."""
    levels = [list(level) for level in C.levels]
    f = levels[i - 1][j]
    table = dict(f.table)
    if n not in table:
        raise ConfigError(f"{n!r} is not in the domain of phi_{i},{j}")
    table[n] = g
    levels[i - 1][j] = Factor(f.domain, table)
    return CosetNilprogression(C.group, levels, C.name + "*")


# enumeration


def _image_set(G, f: Factor, power: int = 1) -> GroupSet:
    img = GroupSet(G, f.image())
    if power == 0:
        return singleton(G)
    out = img
    for _ in range(power - 1):
        out = product_set(out, img)
    return out


def _check_budget(S: GroupSet, budget):
    if budget is not None and len(S) > budget:
        raise BudgetExceeded(f"enumeration exceeded {budget} elements")


def dilate(C: CosetNilprogression, M: Optional[Dict] = None,
           budget: Optional[int] = 5_000_000) -> GroupSet:
    """A^M; entries missing from M default to 1 and M_{i,0} is always 1."""
    G = C.group
    M = M or {}
    out = singleton(G)
    for i in range(C.l, 0, -1):
        for j, f in enumerate(C.levels[i - 1]):
            power = 1 if j == 0 else M.get((i, j), 1)
            out = product_set(out, _image_set(G, f, power))
            _check_budget(out, budget)
    return out


def upper_products(C: CosetNilprogression, budget: Optional[int] = 5_000_000):
    """ge[i] = A_{>=i} for i = 1..l+1, with ge[l+1] = {1}."""
    G = C.group
    ge = {C.l + 1: singleton(G)}
    for i in range(C.l, 0, -1):
        S = ge[i + 1]
        for f in C.levels[i - 1]:
            S = product_set(S, _image_set(G, f))
            _check_budget(S, budget)
        ge[i] = S
    return ge


def enumerate_cnp(C: CosetNilprogression, budget: Optional[int] = 5_000_000) -> GroupSet:
    return upper_products(C, budget)[1]


# axioms


AXIOMS = ("identity", "additivity", "commutation", "cross_level")


@dataclass
class Witness:
    axiom: str
    i: int
    j: int
    n: object
    i2: Optional[int] = None
    j2: Optional[int] = None
    n2: object = None
    value: object = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class AxiomReport:
    results: Dict[str, Optional[Witness]]

    @property
    def passed(self) -> bool:
        return all(w is None for w in self.results.values())

    def failures(self) -> List[str]:
        return [k for k, w in self.results.items() if w is not None]


def axiom_check(C: CosetNilprogression, budget: Optional[int] = 5_000_000,
                stop_at_first: bool = False) -> AxiomReport:
    """Exhaustive check of the four defining conditions.

    identity:    phi_{i,j}(0) = 1
    additivity:  phi(n) phi(n') in A_{>=i+1} phi(n + n') when n + n' stays in range
    commutation: [phi_{i,j}(n), phi_{i,j'}(n')] in A_{>=i+1}
    cross_level: [phi_{i',j'}(n'), phi_{i,j}(n)] in
                 A_{>=i+1} phi_{i,0}(H_{i,0}) ... phi_{i,max(j-1,0)}(H_{i,max(j-1,0)})
                 for i' < i
    """
    G = C.group
    mul, inv, comm = G.mul, G.inv, G.commutator
    one = G.identity()
    results: Dict[str, Optional[Witness]] = {a: None for a in AXIOMS}

    def done():
        return stop_at_first and any(w is not None for w in results.values())

    for i, level in enumerate(C.levels, 1):
        for j, f in enumerate(level):
            if f.table.get(f.domain.zero) != one:
                results["identity"] = Witness("identity", i, j, f.domain.zero,
                                              value=f.table.get(f.domain.zero))
                break
        if results["identity"] is not None:
            break
    if done() or C.l == 0:
        return AxiomReport(results)

    ge = upper_products(C, budget)

    # additivity
    for i, level in enumerate(C.levels, 1):
        target = ge[i + 1].elements
        for j, f in enumerate(level):
            dom, tab = f.domain, f.table
            inv_tab = {n: inv(g) for n, g in tab.items()}
            keys = list(dom.elements())
            for n in keys:
                a = tab[n]
                for n2 in keys:
                    s = dom.add(n, n2)
                    if s is None:
                        continue
                    if mul(mul(a, tab[n2]), inv_tab[s]) not in target:
                        results["additivity"] = Witness("additivity", i, j, n, j2=j, n2=n2)
                        break
                if results["additivity"]:
                    break
            if results["additivity"]:
                break
        if results["additivity"]:
            break
    if done():
        return AxiomReport(results)

    # commutation within a level
    for i, level in enumerate(C.levels, 1):
        target = ge[i + 1].elements
        for (j, f), (j2, f2) in itertools.product(enumerate(level), repeat=2):
            w = _first_commutator_outside(comm, f, f2, target)
            if w is not None:
                results["commutation"] = Witness("commutation", i, j, w[0],
                                                 i2=i, j2=j2, n2=w[1])
                break
        if results["commutation"]:
            break
    if done():
        return AxiomReport(results)

    # cross-level commutators
    for i in range(2, C.l + 1):
        level = C.levels[i - 1]
        partial = [ge[i + 1]]
        for f in level:
            partial.append(product_set(partial[-1], _image_set(G, f)))
            _check_budget(partial[-1], budget)
        for j, f in enumerate(level):
            target = partial[max(j - 1, 0) + 1].elements
            for i2 in range(1, i):
                for j2, f2 in enumerate(C.levels[i2 - 1]):
                    w = _first_commutator_outside(comm, f2, f, target)
                    if w is not None:
                        results["cross_level"] = Witness("cross_level", i, j, w[1],
                                                         i2=i2, j2=j2, n2=w[0])
                        return AxiomReport(results)
    return AxiomReport(results)


def _first_commutator_outside(comm, f: Factor, f2: Factor, target):
    """First (n, n2) with [f(n), f2(n2)] outside target, iterating distinct values."""
    reps = {}
    for n in f.domain.elements():
        reps.setdefault(f.table[n], n)
    reps2 = {}
    for n in f2.domain.elements():
        reps2.setdefault(f2.table[n], n)
    for g, n in reps.items():
        for h, n2 in reps2.items():
            if comm(g, h) not in target:
                return (n, n2)
    return None


# builders


def _unit(p: int, x: int, what: str) -> int:
    if x % p == 0:
        raise ConfigError(f"{what} must be invertible mod {p}")
    return x % p


def helfgott1(p: int, N: int, r: int, s: int) -> CosetNilprogression:
    """Upper triangular matrices with diagonal (r^k, s^k, (rs)^-k), |k| <= N."""
    G = UT3(p)
    r, s = _unit(p, r, "r"), _unit(p, s, "s")
    rs_inv = pow(r * s, -1, p)
    diag = Factor(IntervalDomain(N), {
        k: (pow(r, k, p), 0, 0, pow(s, k, p), 0, pow(rs_inv, k, p))
        for k in range(-N, N + 1)})
    F2 = FiniteAbelian((p, p))
    upper = Factor(FiniteDomain(F2), {(x, y): (1, x, 0, 1, y, 1) for x, y in F2.elements()})
    F1 = FiniteAbelian((p,))
    corner = Factor(FiniteDomain(F1), {(z,): (1, 0, z, 1, 0, 1) for (z,) in F1.elements()})
    return CosetNilprogression(G, [[trivial_factor(G), diag], [upper], [corner]],
                               f"helfgott1(p={p},n={N},r={r},s={s})")


def helfgott2(p: int, N: int, M: int, r: int, s: int) -> CosetNilprogression:
    """Upper triangular matrices with diagonal (r^k, r^k, r^-2k) and (1,2) entries from ms.

    Level 1 is the diagonal torus part, level 2 the (2,3) coordinate with
    the interval m -> E_12(ms), level 3 the corner.  Because the first two
    diagonal entries agree, the torus commutes with E_12 exactly.
    """
    G = UT3(p)
    r = _unit(p, r, "r")
    s = _unit(p, s, "s")
    r_inv2 = pow(r * r, -1, p)
    diag = Factor(IntervalDomain(N), {
        k: (pow(r, k, p), 0, 0, pow(r, k, p), 0, pow(r_inv2, k, p))
        for k in range(-N, N + 1)})
    F1 = FiniteAbelian((p,))
    right = Factor(FiniteDomain(F1), {(z,): (1, 0, 0, 1, z, 1) for (z,) in F1.elements()})
    top = Factor(IntervalDomain(M), {m: (1, m * s % p, 0, 1, 0, 1) for m in range(-M, M + 1)})
    corner = Factor(FiniteDomain(F1), {(y,): (1, 0, y, 1, 0, 1) for (y,) in F1.elements()})
    return CosetNilprogression(
        G, [[trivial_factor(G), diag], [right, top], [corner]],
        f"helfgott2(p={p},n={N},m={M},r={r},s={s})")


def twostep(N: int, G: Optional[Group] = None, e1=None, e2=None) -> CosetNilprogression:
    """{[e1,e2]^c e1^a e2^b : |a|, |b| <= N, |c| <= 100 N^2} in a 2-step group.

    Level 2 holds the commutator interval followed by e1, level 1 holds e2.
    """
    G = G or Heisenberg()
    e1 = (1, 0, 0) if e1 is None else e1
    e2 = (0, 1, 0) if e2 is None else e2
    z = G.commutator(e1, e2)
    top = [trivial_factor(G), power_factor(G, z, 100 * N * N), power_factor(G, e1, N)]
    bottom = [trivial_factor(G), power_factor(G, e2, N)]
    return CosetNilprogression(G, [bottom, top], f"twostep(n={N})")


def from_coset_progression(C) -> CosetNilprogression:
    """An abelian coset progression H + P as a single-level nilprogression."""
    G = C.ambient
    level = [Factor(FiniteDomain(G, C.H), {h: h for h in C.H})]
    for v, N in zip(C.P.v, C.P.N):
        level.append(power_factor(G, v, N))
    return CosetNilprogression(G, [level], "coset")


def abelian_box(G: Group, v: Sequence, N: Sequence[int]) -> CosetNilprogression:
    level = [trivial_factor(G)] + [power_factor(G, g, n) for g, n in zip(v, N)]
    return CosetNilprogression(G, [level], f"box(r={len(v)})")


def lamplighter_case2(G: Group, u: Sequence[int], N: Sequence[int], phi: Dict,
                      V: Sequence) -> CosetNilprogression:
    """The set {(n, phi(n) + v) : n in P, v in V} with P = {sum n_j u_j}.

    phi maps shifts to lamp data and V lists lamp data of a subspace
    invariant under the relevant shifts.  Level 1 carries the graph
    pieces n_j -> (n_j u_j, phi(n_j u_j)); level 2 carries V.
    """
    level1 = [trivial_factor(G)]
    for uj, Nj in zip(u, N):
        level1.append(Factor(IntervalDomain(Nj),
                             {k: (k * uj, phi[k * uj]) for k in range(-Nj, Nj + 1)}))
    Velems = sorted({(0, x) for x in V} | {G.identity()})
    level2 = [Factor(FiniteDomain(G, Velems), {g: g for g in Velems})]
    return CosetNilprogression(G, [level1, level2], "lamplighter_case2")


EXAMPLES = {
    "helfgott1": (helfgott1, ("p", "n", "r", "s")),
    "helfgott2": (helfgott2, ("p", "n", "m", "r", "s")),
    "twostep": (lambda n: twostep(n), ("n",)),
}


def build_example(name: str, **params) -> CosetNilprogression:
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}")
    fn, keys = EXAMPLES[name]
    missing = [k for k in keys if k not in params]
    extra = [k for k in params if k not in keys]
    if missing or extra:
        raise ConfigError(f"{name} takes parameters {', '.join(keys)}")
    C = fn(*[int(params[k]) for k in keys])
    return C


# dilation calculus


def minimal_containing_dilation(C: CosetNilprogression, S: GroupSet, cap: int = 16,
                                budget: Optional[int] = 5_000_000) -> Dict:
    """Smallest M (by total, then lexicographically) with S inside A^M."""
    keys = C.dilation_keys()
    if not keys:
        if S <= enumerate_cnp(C, budget):
            return {}
        raise BudgetExceeded("rank-0 progression cannot be dilated")
    last_missing = None
    for total in range(0, cap * len(keys) + 1):
        for combo in _compositions(total, len(keys), cap):
            M = dict(zip(keys, combo))
            D = dilate(C, M, budget)
            missing = S.elements - D.elements
            if not missing:
                return M
            last_missing = min(missing)
    raise BudgetExceeded(f"no dilation with entries <= {cap} contains {last_missing!r}")


def _compositions(total: int, parts: int, cap: int):
    if parts == 1:
        if total <= cap:
            yield (total,)
        return
    for first in range(0, min(cap, total) + 1):
        for rest in _compositions(total - first, parts - 1, cap):
            yield (first,) + rest


def covering_certificate(C: CosetNilprogression, M: Dict, candidates: int = 64,
                         budget: Optional[int] = 5_000_000) -> GroupSet:
    """Greedy X with A^M inside X A.

    For each uncovered point y the candidates are y a^-1 for an evenly
    spread sample of a in A (always including a = 1); the one covering
    most uncovered points wins.
    """
    G = C.group
    A = enumerate_cnp(C, budget)
    D = dilate(C, M, budget)
    mul, inv = G.mul, G.inv
    elems = A.sorted()
    stride = max(1, len(elems) // candidates)
    sample = elems[::stride]
    if G.identity() not in sample:
        sample.append(G.identity())
    sample_inv = [inv(a) for a in sample]
    uncovered = set(D.elements)
    X = []
    while uncovered:
        y = min(uncovered)
        best, gain = None, -1
        for ai in sample_inv:
            x = mul(y, ai)
            g = sum(1 for a in elems if mul(x, a) in uncovered)
            if g > gain:
                best, gain = x, g
        X.append(best)
        uncovered.difference_update(mul(best, a) for a in elems)
    Xs = GroupSet(G, X)
    if not D <= product_set(Xs, A):
        raise AssertionError("covering certificate failed re-verification")
    return Xs


# growth


def loglog_slope(ns: Sequence[int], sizes: Sequence[int]) -> float:
    """Least-squares slope of log size against log n over the trailing half."""
    pts = list(zip(ns, sizes))
    tail = pts[len(pts) // 2:] if len(pts) >= 4 else pts
    if len(tail) < 2:
        return 0.0
    xs = [math.log(n) for n, _ in tail]
    ys = [math.log(s) for _, s in tail]
    return statistics.linear_regression(xs, ys).slope


@dataclass
class GrowthCurve:
    sizes: List[int]
    slope: float
    doubling_ratios: Dict[int, float]
    subexponential: bool

    def as_dict(self):
        return dict(sizes=self.sizes, slope=self.slope,
                    doubling_ratios=self.doubling_ratios,
                    subexponential=self.subexponential)


def growth_curve_cnp(C: CosetNilprogression, n_max: int, tolerance: float = 0.25,
                     budget: Optional[int] = 20_000_000) -> GrowthCurve:
    A = enumerate_cnp(C, budget)
    sizes = power_sizes(symmetric_hull(A), n_max, budget)
    ns = list(range(1, n_max + 1))
    slope = loglog_slope(ns, sizes)
    ratios = {n: sizes[2 * n - 1] / sizes[n - 1] for n in ns if 2 * n <= n_max}
    bound = 2 ** max(slope, 0.0) * (1 + tolerance)
    sub = all(r <= bound for n, r in ratios.items() if 2 * n > n_max // 2)
    return GrowthCurve(sizes, slope, ratios, sub)


def generated_group_probe(C: CosetNilprogression, budget: int = 50_000) -> Dict:
    """Closure of all table values, with its derived and lower central series."""
    G = C.group
    gens = {g for level in C.levels for f in level for g in f.table.values()}
    try:
        whole = closure(G, gens, budget)
    except BudgetExceeded:
        return {"conclusive": False, "reason": f"closure exceeded {budget} elements"}
    derived = finite_series(G, whole, "derived", budget=budget)
    lower = finite_series(G, whole, "lower_central", budget=budget)
    step = series_length(lower)
    report = {
        "conclusive": True,
        "order": len(whole),
        "derived_length": series_length(derived),
        "derived_sizes": [len(s) for s in derived],
        "nilpotency_step": step,
        "lower_central_sizes": [len(s) for s in lower],
    }
    # first derived term that is nilpotent, with its index
    for k, term in enumerate(derived):
        s = series_length(finite_series(G, term, "lower_central", budget=budget))
        if s is not None:
            report["nilpotent_term"] = {"depth": k, "index": len(whole) // len(term),
                                        "step": s}
            break
    return report
