"""Progressions, coset progressions and Fourier-side tools in abelian groups.

Abelian groups here are Integers, IntegerLattice and FiniteAbelian; the
group law is still spelled G.mul even though it is addition.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetExceeded, ConfigError, VerificationFailure
from .groups import FiniteAbelian, Group, closure
from .setcalc import GroupSet

EPS_GRID = (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16), Fraction(1, 32))


def _require_abelian(G: Group):
    if not G.abelian:
        raise ConfigError(f"{G.spec} is not abelian")


@dataclass(frozen=True)
class GAP:
    ambient: Group
    v: Tuple = ()
    N: Tuple[int, ...] = ()

    def __post_init__(self):
        _require_abelian(self.ambient)
        if len(self.v) != len(self.N):
            raise ConfigError("need one dimension per generator")
        if any(n < 1 for n in self.N):
            raise ConfigError("dimensions must be positive")

    @property
    def rank(self) -> int:
        return len(self.v)

    def formal_size(self) -> int:
        return math.prod(2 * n + 1 for n in self.N)

    def dilate(self, l: int) -> "GAP":
        """P_l: generators l*v_i, dimensions floor(N_i / l^2), zero dims dropped."""
        G = self.ambient
        pairs = [(G.pow(v, l), n // (l * l)) for v, n in zip(self.v, self.N)]
        pairs = [(v, n) for v, n in pairs if n >= 1]
        return GAP(G, tuple(v for v, _ in pairs), tuple(n for _, n in pairs))


@dataclass(frozen=True)
class CosetProgression:
    H: frozenset
    P: GAP

    @classmethod
    def of(cls, P: GAP, H=None) -> "CosetProgression":
        G = P.ambient
        H = frozenset([G.identity()]) if H is None else frozenset(H)
        return cls(H, P)

    @property
    def ambient(self) -> Group:
        return self.P.ambient

    @property
    def rank(self) -> int:
        return self.P.rank

    def formal_size(self) -> int:
        return len(self.H) * self.P.formal_size()

    def check_subgroup(self):
        G = self.ambient
        for a in self.H:
            if G.inv(a) not in self.H or any(G.mul(a, b) not in self.H for b in self.H):
                raise ConfigError("H is not a subgroup")


def _coefficient_box(N: Sequence[int], t: int = 1):
    return itertools.product(*[range(-t * n, t * n + 1) for n in N])


def combine(G: Group, v: Sequence, coeffs: Sequence[int], base=None):
    x = G.identity() if base is None else base
    for g, c in zip(v, coeffs):
        if c:
            x = G.mul(x, G.pow(g, c))
    return x


def enumerate_progression(C, budget: int = 2_000_000) -> GroupSet:
    if isinstance(C, GAP):
        C = CosetProgression.of(C)
    G = C.ambient
    if C.formal_size() > budget:
        raise BudgetExceeded(f"progression has {C.formal_size()} formal sums")
    P = {combine(G, C.P.v, n) for n in _coefficient_box(C.P.N)}
    return GroupSet(G, {G.mul(h, p) for h in C.H for p in P})


def properness_test(C, t: int = 1, budget: int = 2_000_000):
    """None if C is t-proper, else two distinct (h, coefficients) with equal sums."""
    if isinstance(C, GAP):
        C = CosetProgression.of(C)
    G = C.ambient
    count = len(C.H) * math.prod(2 * t * n + 1 for n in C.P.N)
    if count > budget:
        raise BudgetExceeded(f"properness test needs {count} formal sums")
    seen: Dict = {}
    H = sorted(C.H)
    for n in _coefficient_box(C.P.N, t):
        p = combine(G, C.P.v, n)
        for h in H:
            x = G.mul(h, p)
            if x in seen:
                return (seen[x], (h, n))
            seen[x] = (h, n)
    return None


# rank reduction


def _shell(r: int, b: int, s: int):
    """Integer r-tuples with |c_i| <= b and l1 norm s, in lexicographic order."""
    if r == 0:
        if s == 0:
            yield ()
        return
    for a in range(-b, b + 1):
        rest = s - abs(a)
        if 0 <= rest <= (r - 1) * b:
            for tail in _shell(r - 1, b, rest):
                yield (a,) + tail


def find_relation(C: CosetProgression, bound: int) -> Optional[Tuple[int, ...]]:
    """Smallest nonzero c with |c_i| <= bound and sum c_i v_i in H.

    Ordered by max norm, then l1 norm, then lexicographically; the first
    nonzero entry is made positive.
    """
    G, v, r = C.ambient, C.P.v, C.rank
    for b in range(1, bound + 1):
        for s in range(b, r * b + 1):
            for c in _shell(r, b, s):
                if max(map(abs, c)) != b:
                    continue
                if next(x for x in c if x) < 0:
                    continue
                if combine(G, v, c) in C.H:
                    return c
    return None


def _unimodular_sending_to_e1(c: Sequence[int]):
    """Integer matrices T, T^-1 with T c = e_1; c must be primitive."""
    r = len(c)
    x = list(c)
    T = [[int(i == j) for j in range(r)] for i in range(r)]
    Ti = [[int(i == j) for j in range(r)] for i in range(r)]

    def add_row(dst, src, q):   # row dst += q * row src
        x[dst] += q * x[src]
        T[dst] = [a + q * b for a, b in zip(T[dst], T[src])]
        for row in Ti:           # inverse: column src -= q * column dst
            row[src] -= q * row[dst]

    def swap(i, j):
        x[i], x[j] = x[j], x[i]
        T[i], T[j] = T[j], T[i]
        for row in Ti:
            row[i], row[j] = row[j], row[i]

    def negate(i):
        x[i] = -x[i]
        T[i] = [-a for a in T[i]]
        for row in Ti:
            row[i] = -row[i]

    while sum(1 for a in x if a) > 1:
        piv = min((i for i in range(r) if x[i]), key=lambda i: abs(x[i]))
        for i in range(r):
            if i != piv and x[i]:
                add_row(i, piv, -(x[i] // x[piv]))
    piv = next(i for i in range(r) if x[i])
    if abs(x[piv]) != 1:
        raise ValueError("relation vector is not primitive")
    if piv:
        swap(0, piv)
    if x[0] < 0:
        negate(0)
    return T, Ti


def eliminate_relation(C: CosetProgression, c: Tuple[int, ...]) -> CosetProgression:
    """Rank r-1 coset progression containing C, using the relation c.

    The coefficient lattice is rebased so that c becomes the first basis
    vector; that direction lands in H and is absorbed, and the remaining
    dimensions are inflated to cover the old box.
    """
    G = C.ambient
    g = 0
    for a in c:
        g = math.gcd(g, a)
    prim = tuple(a // g for a in c)
    H = C.H
    torsion = combine(G, C.P.v, prim)
    if torsion not in H:
        H = closure(G, list(H) + [torsion])
    T, Ti = _unimodular_sending_to_e1(prim)
    r = C.rank
    gens, dims = [], []
    for k in range(1, r):
        w = combine(G, C.P.v, [Ti[i][k] for i in range(r)])
        n = sum(abs(T[k][i]) * C.P.N[i] for i in range(r))
        if n >= 1:
            gens.append(w)
            dims.append(n)
    return CosetProgression(frozenset(H), GAP(G, tuple(gens), tuple(dims)))


@dataclass
class RankStep:
    rank: int
    M: Fraction
    t: int
    proper: bool
    relation: Optional[Tuple[int, ...]] = None


def rank_reduce(C: CosetProgression, F: Callable[[Fraction], int],
                relation_budget: int = 4, A: Optional[GroupSet] = None,
                budget: int = 2_000_000):
    """Shrink the rank until the progression is F(M)-proper.

    M is |H+P| / |A|, where A defaults to the set enumerated by the input.
    Returns the final progression and a trace with one entry per pass.
    """
    A = enumerate_progression(C, budget) if A is None else A
    trace: List[RankStep] = []
    while True:
        S = enumerate_progression(C, budget)
        M = Fraction(len(S), len(A))
        t = max(1, int(F(M)))
        proper = properness_test(C, t, budget) is None
        trace.append(RankStep(C.rank, M, t, proper))
        if proper:
            break
        c = find_relation(C, relation_budget)
        if c is None:
            raise VerificationFailure(
                f"no integer relation with coefficients <= {relation_budget} "
                f"among rank-{C.rank} generators")
        trace[-1].relation = c
        C = eliminate_relation(C, c)
    if not A <= enumerate_progression(C, budget):
        raise VerificationFailure("rank reduction lost containment")
    return C, trace


# Fourier analysis on finite abelian groups


def _require_finite(G: Group) -> FiniteAbelian:
    if not isinstance(G, FiniteAbelian):
        raise ConfigError(f"{G.spec} is not a finite abelian group")
    return G


def indicator(A: GroupSet) -> np.ndarray:
    G = _require_finite(A.group)
    f = np.zeros(G.orders)
    for a in A.elements:
        f[a] = 1.0
    return f


def fourier_transform(f: np.ndarray) -> np.ndarray:
    """f^(xi) = |G|^-1 sum_x f(x) e(-xi.x) with xi.x = sum xi_i x_i / n_i."""
    return np.fft.fftn(f) / f.size


def inverse_fourier_transform(F: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(F) * F.size


def character_pairing(G: FiniteAbelian, xi, x) -> Fraction:
    return sum((Fraction(a * b, n) for a, b, n in zip(xi, x, G.orders)),
               Fraction(0)) % 1


@dataclass
class Spectrum:
    eps: Fraction
    delta: Fraction
    characters: List[Tuple[int, ...]] = field(default_factory=list)


def spectrum(A: GroupSet, eps: Fraction) -> Spectrum:
    G = _require_finite(A.group)
    delta = Fraction(len(A), G.order)
    power = np.abs(fourier_transform(indicator(A))) ** 2
    cut = float((1 - eps) * delta * delta)
    chars = sorted(tuple(int(i) for i in idx) for idx in zip(*np.nonzero(power > cut)))
    zero = G.identity()
    if zero not in chars:   # guards against float noise at the trivial character
        chars.insert(0, zero)
    return Spectrum(eps, delta, chars)


def annihilator(G: FiniteAbelian, characters) -> frozenset:
    """{x : xi.x = 0 mod 1 for every listed xi}."""
    return frozenset(x for x in G.elements()
                     if all(character_pairing(G, xi, x) == 0 for xi in characters))


def subgroups(G: Group, H) -> List[frozenset]:
    """All subgroups of the finite subgroup H, largest first."""
    H = frozenset(H)
    found = {frozenset([G.identity()])}
    frontier = list(found)
    while frontier:
        nxt = []
        for S in frontier:
            for h in sorted(H - S):
                T = closure(G, list(S) + [h])
                if T not in found:
                    found.add(T)
                    nxt.append(T)
        frontier = nxt
    return sorted(found, key=lambda S: (-len(S), sorted(S)))


# representation counts


def _convolve(G: Group, f: Dict, g: Dict) -> Dict:
    out: Dict = {}
    mul = G.mul
    for x, a in f.items():
        for y, b in g.items():
            z = mul(x, y)
            out[z] = out.get(z, 0) + a * b
    return out


def difference_counts(A: GroupSet, m: int, budget: int = 10_000_000) -> Dict:
    """h -> number of (a_1..a_m, b_1..b_m) in A^2m with h = sum a - sum b."""
    G = A.group
    _require_abelian(G)
    if m < 1:
        raise ConfigError("m must be positive")
    base = {a: 1 for a in A.elements}
    S = base
    for _ in range(m - 1):
        S = _convolve(G, S, base)
        if len(S) > budget:
            raise BudgetExceeded("convolution table exceeded budget")
    neg = {G.inv(x): c for x, c in S.items()}
    if len(S) * len(neg) > budget * 10:
        raise BudgetExceeded("convolution table exceeded budget")
    return _convolve(G, S, neg)


def representation_count(A: GroupSet, m: int, target) -> int:
    return difference_counts(A, m).get(target, 0)


def fourier_count(A: GroupSet, m: int, target) -> float:
    """The same count computed on the Fourier side, as a float.

    With the 1/|G| normalisation of the transform the prefactor is
    |G|^(2m-1).
    """
    G = _require_finite(A.group)
    Ahat = fourier_transform(indicator(A))
    weights = np.abs(Ahat) ** (2 * m)
    grids = np.meshgrid(*[np.arange(n) for n in G.orders], indexing="ij")
    phase = sum(g * (h / n) for g, h, n in zip(grids, target, G.orders))
    total = np.sum(weights * np.exp(2j * np.pi * phase))
    return float(total.real) * G.order ** (2 * m - 1)


# Sarkozy-type extraction


@dataclass
class SarkozyResult:
    m: int
    l: int
    H: frozenset
    witness: int          # minimum representation count over the certified set
    eps: Optional[Fraction] = None
    certified_set: Optional[GroupSet] = None

    def as_tuple(self):
        return (self.m, self.l, self.H)


def _min_count(counts: Dict, targets) -> int:
    return min(counts.get(x, 0) for x in targets)


def sarkozy_abelian(A: GroupSet, delta: Fraction, m_max: int = 4) -> SarkozyResult:
    G = _require_finite(A.group)
    if len(A) < delta * G.order:
        raise ConfigError("A is sparser than the stated density")
    counts = [None] + [difference_counts(A, m) for m in range(1, m_max + 1)]
    best = None
    for eps in EPS_GRID:
        sigma = spectrum(A, eps)
        H = annihilator(G, sigma.characters)
        for m in range(1, m_max + 1):
            w = _min_count(counts[m], H)
            if w > 0:
                cand = SarkozyResult(m, 1, H, w, eps)
                if best is None or (-len(H), m) < (-len(best.H), best.m):
                    best = cand
                break
    if best is None:
        raise VerificationFailure(
            f"no spectral subgroup certified within m <= {m_max}")
    best.certified_set = GroupSet(G, best.H)
    return best


def _progression_points(G, H, P: GAP) -> List:
    pts = [combine(G, P.v, n) for n in _coefficient_box(P.N)]
    return sorted({G.mul(h, p) for h in H for p in pts})


def sarkozy_progression(A: GroupSet, P: GAP, delta: Fraction,
                        m_max: int = 4, l_max: int = 4) -> SarkozyResult:
    """Smallest (m, l), in that order, with P_l inside mA - mA."""
    C = CosetProgression.of(P)
    res = sarkozy_coset(A, C, delta, m_max, l_max, descend=False)
    return res


def sarkozy_coset(A: GroupSet, C: CosetProgression, delta: Fraction,
                  m_max: int = 4, l_max: int = 4, descend: bool = True) -> SarkozyResult:
    """Largest H' <= H, then smallest (m, l), with H' + P_l inside mA - mA.

    Only dilations keeping every dimension at least 1 are considered, so
    P_l never collapses to a point.
    """
    G = C.ambient
    if not A <= enumerate_progression(C):
        raise ConfigError("A is not contained in the coset progression")
    if len(A) < delta * C.formal_size():
        raise ConfigError("A is sparser than the stated density")
    if properness_test(C, 1) is not None:
        raise ConfigError("coset progression is not proper")
    counts = [None] + [difference_counts(A, m) for m in range(1, m_max + 1)]
    dilates = []
    for l in range(1, l_max + 1):
        Pl = C.P.dilate(l)
        if Pl.rank == C.rank:
            dilates.append((l, Pl))
    def candidates():
        # H itself is the largest candidate; the full subgroup list is only
        # built when H fails, since it can be large
        yield C.H
        if descend:
            yield from (S for S in subgroups(G, C.H) if S != C.H)

    for Hs in candidates():
        for m in range(1, m_max + 1):
            for l, Pl in dilates:
                pts = _progression_points(G, Hs, Pl)
                w = _min_count(counts[m], pts)
                if w > 0:
                    return SarkozyResult(m, l, Hs, w, None, GroupSet(G, pts))
    raise VerificationFailure(
        f"no (H', m, l) certified within m <= {m_max}, l <= {l_max}")


def difference_set(A: GroupSet, m: int) -> GroupSet:
    """mA - mA as a set, by repeated sumsets."""
    G = A.group
    S = A
    for _ in range(m - 1):
        S = GroupSet(G, {G.mul(x, a) for x in S.elements for a in A.elements})
    return GroupSet(G, {G.mul(x, G.inv(y)) for x in S.elements for y in S.elements})
