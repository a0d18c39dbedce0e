"""Cayley-ball growth and the covering waypoints of the polynomial-growth argument.

Balls are B_S(r) = (S u S^-1 u {1})^r.  The covering iteration works with
A^{±n} = (A u A^-1 u {1})^n for a candidate set A at a scale r_0.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .errors import BudgetExceeded, ConfigError, VerificationFailure
from .setcalc import GroupSet, ball_sizes, symmetric_hull

# classification heuristics
POLY_SLOPE_SPREAD = 0.25      # slope spread over the last three doublings of r
EXP_RATIO = 1.15              # successive ratio floor for exponential-like
EXP_SLOPE_GAIN = 1.5          # doubling slope must grow by this factor per doubling of r

DEFAULT_BUDGET = 2_000_000


def generators(S: GroupSet) -> GroupSet:
    """S u S^-1 u {1}."""
    return symmetric_hull(S)


def ball(S: GroupSet, r: int, budget: Optional[int] = DEFAULT_BUDGET) -> GroupSet:
    if r < 0:
        raise ConfigError("radius must be non-negative")
    return ball_sizes(generators(S), r, budget=budget)[1]


def _doubling_slope(sizes: List[int], r: int) -> Optional[float]:
    h = r // 2
    if h < 1:
        return None
    return math.log(sizes[r] / sizes[h]) / math.log(r / h)


def curve_csv(sizes: Dict[int, int]) -> str:
    """CSV with columns r, size, ratio (|B(r)|/|B(r-1)|) and doubling slope."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "size", "ratio", "slope"])
    for r in sorted(sizes):
        ratio = sizes[r] / sizes[r - 1] if r - 1 in sizes else None
        h = r // 2
        slope = (math.log(sizes[r] / sizes[h]) / math.log(r / h)
                 if h >= 1 and h in sizes else None)
        w.writerow([r, sizes[r], "" if ratio is None else f"{ratio:.6f}",
                    "" if slope is None else f"{slope:.6f}"])
    return buf.getvalue()


@dataclass
class GrowthCurve:
    generators: GroupSet
    sizes: List[int]                    # |B(r)| for r = 0..r_max
    classification: str = ""            # polynomial-like | exponential-like | saturated | indeterminate
    estimate: Optional[float] = None    # degree or ratio, depending on the class
    partial: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def r_max(self) -> int:
        return len(self.sizes) - 1

    @property
    def ratios(self) -> List[Optional[float]]:
        return [None] + [self.sizes[r] / self.sizes[r - 1] for r in range(1, len(self.sizes))]

    @property
    def slopes(self) -> List[Optional[float]]:
        """log(|B(r)| / |B(r // 2)|) / log(r / (r // 2)) at each radius."""
        return [_doubling_slope(self.sizes, r) for r in range(len(self.sizes))]

    def rows(self) -> List[Tuple]:
        return list(zip(range(len(self.sizes)), self.sizes, self.ratios, self.slopes))

    def to_csv(self) -> str:
        return curve_csv(dict(enumerate(self.sizes)))

    def as_dict(self) -> Dict:
        return {"sizes": self.sizes, "classification": self.classification,
                "estimate": self.estimate, "partial": self.partial, "notes": self.notes,
                "ratios": self.ratios, "slopes": self.slopes}


def classify_curve(sizes: List[int]) -> Tuple[str, Optional[float], List[str]]:
    notes = []
    r_max = len(sizes) - 1
    if r_max >= 1 and sizes[-1] == sizes[-2]:
        return "saturated", float(sizes[-1]), notes
    if r_max < 4:
        return "indeterminate", None, ["fewer than four radii"]
    ratios = [sizes[r] / sizes[r - 1] for r in range(1, r_max + 1)]
    checkpoints = [r for r in (r_max, r_max // 2, r_max // 4) if r >= 2]
    slopes = [_doubling_slope(sizes, r) for r in checkpoints]
    tail = ratios[r_max // 2:]
    # polynomial growth has ratios 1 + O(1/r) and bounded slopes, so a ratio
    # floor alone misfires at small r; the slope must also keep scaling with r
    if min(tail) >= EXP_RATIO and len(slopes) >= 2 and all(
            a >= EXP_SLOPE_GAIN * b for a, b in zip(slopes, slopes[1:2])):
        # geometric mean ratio over the trailing half
        est = (sizes[-1] / sizes[r_max - len(tail)]) ** (1 / len(tail))
        return "exponential-like", est, notes
    if len(slopes) == 3 and max(slopes) - min(slopes) < POLY_SLOPE_SPREAD:
        return "polynomial-like", slopes[0], notes
    notes.append("doubling slopes at r = %s: %s" % (
        checkpoints, ", ".join(f"{s:.3f}" for s in slopes)))
    return "indeterminate", None, notes


def growth_profile(S: GroupSet, r_max: int, budget: Optional[int] = DEFAULT_BUDGET) -> GrowthCurve:
    """Exact ball sizes up to r_max with a heuristic growth class.

    If the budget runs out the curve is cut at the last complete radius
    and flagged partial rather than raising.
    """
    T = generators(S)
    G = T.group
    gens = [s for s in T.sorted() if s != G.identity()]
    seen = {G.identity()}
    frontier = [G.identity()]
    sizes = [1]
    partial = False
    for _ in range(r_max):
        nxt = []
        for x in frontier:
            for s in gens:
                y = G.mul(x, s)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        if budget is not None and len(seen) > budget:
            partial = True
            break
        frontier = nxt
        sizes.append(len(seen))
    cls, est, notes = classify_curve(sizes)
    if partial:
        notes.append(f"stopped at r = {len(sizes) - 1}: ball exceeded {budget} elements")
    return GrowthCurve(T, sizes, cls, est, partial, notes)


@dataclass
class ScaleChoice:
    r0: int
    doubling: Fraction
    radius_range: Tuple[int, int]
    table: Dict[int, Fraction]
    ball_R: int


def small_doubling_scale(S: GroupSet, R: int,
                         budget: Optional[int] = DEFAULT_BUDGET) -> ScaleChoice:
    """Radius r in [R^0.8, R^0.9] minimising |B(2r)| / |B(r)|.

    Only integers inside the real interval are scanned; if there are none
    the nearest integer to R^0.8 is used.  Ties go to the smaller radius.
    """
    if R < 1:
        raise ConfigError("R must be positive")
    lo = math.ceil(R ** 0.8 - 1e-9)
    hi = math.floor(R ** 0.9 + 1e-9)
    if hi < lo:
        lo = hi = max(1, round(R ** 0.8))
    sizes = ball_sizes(generators(S), max(2 * hi, R), budget=budget)[0]
    table = {r: Fraction(sizes[2 * r], sizes[r]) for r in range(lo, hi + 1)}
    r0 = min(table, key=lambda r: (table[r], r))
    return ScaleChoice(r0, table[r0], (lo, hi), table, sizes[R])


# covering iteration


class _Powers:
    """Cached A^{±n} for n = 0, 1, ..."""

    def __init__(self, A: GroupSet, budget: Optional[int]):
        self.T = symmetric_hull(A)
        self.G = A.group
        self.budget = budget
        self.gens = [a for a in self.T.sorted() if a != self.G.identity()]
        self.levels = [frozenset([self.G.identity()])]
        self._seen = set(self.levels[0])
        self._frontier = [self.G.identity()]

    def __call__(self, n: int) -> frozenset:
        mul = self.G.mul
        while len(self.levels) <= n:
            nxt = []
            for x in self._frontier:
                for a in self.gens:
                    y = mul(x, a)
                    if y not in self._seen:
                        self._seen.add(y)
                        nxt.append(y)
            if self.budget is not None and len(self._seen) > self.budget:
                raise BudgetExceeded(
                    f"A^(±{len(self.levels)}) exceeded {self.budget} elements")
            self._frontier = nxt
            self.levels.append(frozenset(self._seen))
        return self.levels[n]


def _translate(G, x, D) -> set:
    return {G.mul(x, d) for d in D}


def _greedy_cover(G, targets: frozenset, A: frozenset) -> List:
    """Left translates x.A covering targets, chosen greedily (ties by sort order)."""
    inv = [G.inv(a) for a in sorted(A)]
    left = set(targets)
    X = []
    while left:
        gain: Dict = {}
        for b in left:
            for ai in inv:
                x = G.mul(b, ai)
                gain[x] = gain.get(x, 0) + 1
        best = max(sorted(gain), key=lambda x: gain[x])
        X.append(best)
        left -= _translate(G, best, A)
    return sorted(X)


def _covers(G, targets, X, D) -> bool:
    cover = set()
    for x in X:
        cover |= _translate(G, x, D)
    return targets <= cover


def _within(G, powers: "_Powers", g, m: int) -> bool:
    """g in A^{±m}, growing A^{±k} only as far as k = ceil(m/2).

    With D_k = A^{±k} symmetric: g in D_{2k} iff gD_k meets D_k, and
    g in D_{2k+1} iff gD_k meets D_{k+1}.
    """
    k = 0
    while 2 * k <= m:
        Dk = powers(k)
        moved = _translate(G, g, Dk)
        if moved & Dk:
            return True
        if 2 * k + 1 <= m and moved & powers(k + 1):
            return True
        k += 1
    return False


def _first_overlap(G, X, powers: "_Powers", m: int):
    """First pair (i, j) with x_i A^{±m} meeting x_j A^{±m}."""
    for i in range(len(X)):
        xi = G.inv(X[i])
        for j in range(i + 1, len(X)):
            if _within(G, powers, G.mul(xi, X[j]), 2 * m):
                return i, j
    return None


@dataclass
class CoveringReport:
    X: List                      # initial cover, B(r0) inside X.A
    X_prime: List                # after disjointification
    n: int
    merges: List[Dict]           # one entry per removed translate
    r1: int
    trace: List[int]             # |X'_r| for r = 0..r1+1
    X_r1: List
    rho: Dict                    # (s, x) -> rho(s)(x)
    exponent: int                # smallest k with S.X'_r1 inside X'_r1.A^{±k}
    A_radius: int                # smallest r with A inside B(r)
    checks: Dict[str, bool]

    @property
    def verified(self) -> bool:
        return all(self.checks.values())

    def to_dict(self, G) -> Dict:
        ser = G.serialize
        return {
            "X": [ser(x) for x in self.X], "X_prime": [ser(x) for x in self.X_prime],
            "n": self.n, "merges": self.merges, "r1": self.r1, "trace": self.trace,
            "X_r1": [ser(x) for x in self.X_r1],
            "rho": [{"s": ser(s), "x": ser(x), "image": ser(y)}
                    for (s, x), y in sorted(self.rho.items())],
            "exponent": self.exponent, "A_radius": self.A_radius, "checks": self.checks,
        }


def covering_iteration(S: GroupSet, A: GroupSet, r0: int, n_cap: int = 8,
                       budget: Optional[int] = DEFAULT_BUDGET,
                       radius_cap: Optional[int] = None) -> CoveringReport:
    """Run the cover, disjointify, stabilise, and check S.X' inside X'.A^{±k}.

    Disjointification: while two translates x.A^{±10n}, x'.A^{±10n} meet,
    x' is dropped and n is raised to the smallest value for which the
    remaining translates x.A^{±n} still cover B(r0).  Overlap forces
    x'.A^{±n} inside x.A^{±21n}, so that value never exceeds 21n.
    """
    G = S.group
    if A.group != G:
        raise ConfigError("S and A live in different groups")
    T = generators(S)
    gens = [s for s in T.sorted() if s != G.identity()]
    B0 = frozenset(ball(S, r0, budget).elements)
    powers = _Powers(A, budget)

    # A inside B(O(r0)): measure the radius
    radius_cap = radius_cap if radius_cap is not None else 64 * max(r0, 1)
    A_radius, have = None, {G.identity()}
    frontier = [G.identity()]
    for r in range(radius_cap + 1):
        if A.elements <= have:
            A_radius = r
            break
        nxt = []
        for x in frontier:
            for s in gens:
                y = G.mul(x, s)
                if y not in have:
                    have.add(y)
                    nxt.append(y)
        frontier = nxt
        if budget is not None and len(have) > budget:
            raise BudgetExceeded(f"ball exceeded {budget} elements while locating A")
    if A_radius is None:
        raise ConfigError(f"A is not inside B(r) for r <= {radius_cap}")

    X = _greedy_cover(G, B0, A.elements)
    checks = {"initial_cover": _covers(G, B0, X, A.elements)}

    Xp, n, merges = list(X), 1, []
    while True:
        hit = _first_overlap(G, Xp, powers, 10 * n)
        if hit is None:
            break
        i, j = hit
        dropped = Xp.pop(j)
        n_new = n
        while not _covers(G, B0, Xp, powers(n_new)):
            n_new += 1
            if n_new > 21 * n:
                raise VerificationFailure("overlap bound violated while merging translates")
            if n_new > n_cap:
                raise BudgetExceeded(f"disjointification needed n > n_cap = {n_cap}")
        merges.append({"kept": G.serialize(Xp[i]), "dropped": G.serialize(dropped),
                       "n_before": n, "n_after": n_new})
        n = n_new
    checks["disjoint_10n"] = _first_overlap(G, Xp, powers, 10 * n) is None
    Dn = powers(n)
    checks["cover_n"] = _covers(G, B0, Xp, Dn)

    # stabilisation scan over X'_r
    translates = {x: _translate(G, x, Dn) for x in Xp}
    ballset, frontier = {G.identity()}, [G.identity()]

    def members():
        return frozenset(x for x in Xp if translates[x] & ballset)

    trace_sets = [members()]
    r = 0
    while True:
        nxt = []
        for x in frontier:
            for s in gens:
                y = G.mul(x, s)
                if y not in ballset:
                    ballset.add(y)
                    nxt.append(y)
        frontier = nxt
        trace_sets.append(members())
        if trace_sets[-1] == trace_sets[-2]:
            break
        r += 1
        if r > r0 + 1:
            raise VerificationFailure("X'_r did not stabilise by r0")
    r1 = r
    Xr1 = sorted(trace_sets[r1])
    checks["monotone"] = all(a <= b for a, b in zip(trace_sets, trace_sets[1:]))
    checks["stable"] = trace_sets[r1] == trace_sets[r1 + 1]

    # rho(s): the unique x' whose translate meets s x A^{±n}
    rho, unique = {}, True
    for s in gens:
        for x in Xr1:
            moved = _translate(G, G.mul(s, x), Dn)
            hits = [y for y in Xr1 if moved & translates[y]]
            if len(hits) != 1:
                unique = False
                continue
            rho[(s, x)] = hits[0]
    checks["rho_well_defined"] = unique

    # smallest exponent for S.X'_r1 inside X'_r1.A^{±k}; 2n always suffices
    exponent = None
    targets = {G.mul(s, x) for s in gens for x in Xr1}
    for k in range(0, 2 * n + 1):
        Dk = powers(k)
        cover = set()
        for y in Xr1:
            cover |= _translate(G, y, Dk)
        if targets <= cover:
            exponent = k
            break
    checks["xr1"] = exponent is not None
    checks["rho_within_2n"] = unique and all(
        _within(G, powers, G.mul(G.inv(y), G.mul(s, x)), 2 * n)
        for (s, x), y in rho.items())
    return CoveringReport(X, Xp, n, merges, r1, [len(t) for t in trace_sets], Xr1, rho,
                          exponent if exponent is not None else -1, A_radius, checks)
