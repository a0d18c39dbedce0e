"""Regularity partitions and Balog-Szemeredi type refinements.

The graphs are small enough to hold as dense numpy boolean matrices.
Verdicts from heuristic checks are labelled so that a caller never
mistakes "found nothing" for a proof.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetExceeded, ConfigError, VerificationFailure
from .setcalc import GroupSet, product_set

EXHAUSTIVE_LIMIT = 18
EXACT_TUPLE_LIMIT = 10 ** 7
SAMPLE_SIZE = 10 ** 6
CONFIDENCE = 0.99

CERTIFIED_NEGATIVE = "certified negative"
UNCERTIFIED_POSITIVE = "uncertified positive"
REGULAR = "regular"
IRREGULAR = "irregular"


@dataclass
class BipartiteGraph:
    adj: np.ndarray   # bool, shape (|V|, |W|)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "BipartiteGraph":
        return cls(np.array(rows, dtype=bool))

    @property
    def shape(self):
        return self.adj.shape

    def edges(self) -> int:
        return int(self.adj.sum())

    def density(self) -> Fraction:
        n, m = self.shape
        return Fraction(self.edges(), n * m)

    def restrict(self, rows, cols) -> "BipartiteGraph":
        return BipartiteGraph(self.adj[np.ix_(list(rows), list(cols))])

    def to_text(self) -> str:
        return "\n".join("".join("1" if x else "0" for x in row) for row in self.adj)


def regularity_defect(G: BipartiteGraph, Vp, Wp) -> Fraction:
    """| e(V', W') - delta |V'||W'| | / (|V||W|), exactly."""
    n, m = G.shape
    Vp, Wp = list(Vp), list(Wp)
    e = int(G.adj[np.ix_(Vp, Wp)].sum()) if Vp and Wp else 0
    total = n * m
    return Fraction(abs(e * total - G.edges() * len(Vp) * len(Wp)), total * total)


@dataclass
class RegularityVerdict:
    label: str
    defect: Fraction
    witness: Tuple[Tuple[int, ...], Tuple[int, ...]]

    @property
    def irregular(self) -> bool:
        return self.label in (IRREGULAR, CERTIFIED_NEGATIVE)


def _best_columns(adj: np.ndarray, rows_mask: np.ndarray, delta: float):
    """Given V', the W' maximising the positive and the negative deviation."""
    deg = adj[rows_mask].sum(axis=0)
    dev = deg - delta * rows_mask.sum()
    return dev > 0, dev < 0


def _exhaustive(G: BipartiteGraph) -> Tuple[Fraction, tuple]:
    adj = G.adj
    transposed = False
    if adj.shape[0] > adj.shape[1]:
        adj, transposed = adj.T, True
    n, m = adj.shape
    if n > EXHAUSTIVE_LIMIT:
        raise BudgetExceeded(f"exhaustive regularity check needs a side <= {EXHAUSTIVE_LIMIT}")
    delta = adj.sum() / (n * m)
    subsets = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(np.int64)
    deg = subsets @ adj.astype(np.int64)              # (2^n, m)
    dev = deg - delta * subsets.sum(axis=1, keepdims=True)
    pos = np.where(dev > 0, dev, 0).sum(axis=1)
    neg = np.where(dev < 0, -dev, 0).sum(axis=1)
    best_pos, best_neg = int(pos.argmax()), int(neg.argmax())
    if pos[best_pos] >= neg[best_neg]:
        s, cols = best_pos, dev[best_pos] > 0
    else:
        s, cols = best_neg, dev[best_neg] < 0
    rows = tuple(int(i) for i in range(n) if (s >> i) & 1)
    cols = tuple(int(j) for j in np.nonzero(cols)[0])
    if transposed:
        rows, cols = cols, rows
    return regularity_defect(G, rows, cols), (rows, cols)


def _local_search(G: BipartiteGraph, restarts: int, rng: random.Random):
    adj = G.adj
    n, m = adj.shape
    delta = adj.sum() / (n * m)
    best = (Fraction(0), ((), ()))
    for _ in range(restarts):
        rows = np.array([rng.random() < 0.5 for _ in range(n)], dtype=bool)
        sign = rng.choice((1, -1))
        for _ in range(20):
            pos, neg = _best_columns(adj, rows, delta)
            cols = pos if sign > 0 else neg
            dev_rows = adj[:, cols].sum(axis=1) - delta * cols.sum()
            new_rows = dev_rows > 0 if sign > 0 else dev_rows < 0
            if np.array_equal(new_rows, rows):
                break
            rows = new_rows
        pos, neg = _best_columns(adj, rows, delta)
        cols = pos if sign > 0 else neg
        witness = (tuple(int(i) for i in np.nonzero(rows)[0]),
                   tuple(int(j) for j in np.nonzero(cols)[0]))
        d = regularity_defect(G, *witness)
        if d > best[0]:
            best = (d, witness)
    return best


def regularity_estimate(G: BipartiteGraph, eps, mode: str = "auto", restarts: int = 8,
                        seed: int = 0) -> RegularityVerdict:
    """Largest defect found, with an honest label.

    exhaustive: exact maximum over V' (W' chosen optimally for each V').
    local_search: alternating best responses from random starts; finding
    a defect above eps is a certified negative, otherwise the verdict is
    an uncertified positive.
    """
    eps = Fraction(eps).limit_denominator(10 ** 6) if not isinstance(eps, Fraction) else eps
    if mode == "auto":
        mode = "exhaustive" if min(G.shape) <= EXHAUSTIVE_LIMIT else "local_search"
    if mode == "exhaustive":
        d, w = _exhaustive(G)
        return RegularityVerdict(IRREGULAR if d > eps else REGULAR, d, w)
    if mode == "local_search":
        d, w = _local_search(G, restarts, random.Random(seed))
        return RegularityVerdict(CERTIFIED_NEGATIVE if d > eps else UNCERTIFIED_POSITIVE, d, w)
    raise ConfigError(f"unknown mode {mode!r}")


# partitions


@dataclass
class RegularityPartition:
    blocks: List[List[List[int]]]                 # class -> blocks -> vertices
    verdicts: Dict[Tuple[int, int, int, int], RegularityVerdict]
    densities: Dict[Tuple[int, int, int, int], Fraction]
    energy_history: List[Fraction]
    regular_fraction: float
    target_met: bool

    def block_of(self, cls: int, v: int) -> int:
        for b, blk in enumerate(self.blocks[cls]):
            if v in blk:
                return b
        raise KeyError(v)


def _energy(graphs, sizes, blocks) -> Fraction:
    total = Fraction(0)
    for (i, j), G in graphs.items():
        norm = sizes[i] * sizes[j]
        for Bi in blocks[i]:
            for Bj in blocks[j]:
                e = int(G.adj[np.ix_(Bi, Bj)].sum())
                total += Fraction(e * e, len(Bi) * len(Bj) * norm)
    return total / len(graphs)


def regularity_partition(graphs: Dict[Tuple[int, int], BipartiteGraph], eps,
                         max_blocks: int = 8, seed: int = 0, strict: bool = True,
                         restarts: int = 6) -> RegularityPartition:
    """Halve every block each round until enough block pairs look regular.

    Blocks touching a certified irregular pair are halved along the
    witness (witness vertices first), the others by index, so block sizes
    inside a class stay within one of each other.
    """
    rng = random.Random(seed)
    sizes: Dict[int, int] = {}
    for (i, j), G in graphs.items():
        n, m = G.shape
        if sizes.setdefault(i, n) != n or sizes.setdefault(j, m) != m:
            raise ConfigError("inconsistent class sizes")
    if max(sizes.values()) > 512:
        raise ConfigError("vertex classes are limited to 512 vertices")
    classes = sorted(sizes)
    blocks = {c: [list(range(sizes[c]))] for c in classes}
    history = []
    while True:
        history.append(_energy(graphs, sizes, blocks))
        if len(history) > 1 and history[-1] < history[-2]:
            raise AssertionError("energy decreased under refinement")
        verdicts, densities, hints = {}, {}, {}
        for (i, j), G in graphs.items():
            for a, Bi in enumerate(blocks[i]):
                for b, Bj in enumerate(blocks[j]):
                    sub = G.restrict(Bi, Bj)
                    v = regularity_estimate(sub, eps, restarts=restarts,
                                            seed=rng.randrange(1 << 30))
                    verdicts[(i, j, a, b)] = v
                    densities[(i, j, a, b)] = sub.density()
                    if v.irregular:
                        rows, cols = v.witness
                        hints.setdefault((i, a), [Bi[r] for r in rows])
                        hints.setdefault((j, b), [Bj[c] for c in cols])
        bad = sum(1 for v in verdicts.values() if v.irregular)
        frac = 1 - bad / len(verdicts)
        if frac >= 1 - float(eps):
            return RegularityPartition([blocks[c] for c in classes], verdicts, densities,
                                       history, frac, True)
        if any(len(blocks[c]) * 2 > max_blocks for c in classes) or all(
                len(b) == 1 for c in classes for b in blocks[c]):
            if strict:
                raise BudgetExceeded(
                    f"block limit reached with regular fraction {frac:.3f}")
            return RegularityPartition([blocks[c] for c in classes], verdicts, densities,
                                       history, frac, False)
        for c in classes:
            new = []
            for a, blk in enumerate(blocks[c]):
                marked = set(hints.get((c, a), ()))
                order = sorted(blk, key=lambda v: (v not in marked, v))
                half = len(order) // 2
                if half:
                    new.append(sorted(order[:half]))
                new.append(sorted(order[half:]))
            blocks[c] = new


# popular quotients and tuple counting


def quotient_counts(A: GroupSet) -> Dict:
    G = A.group
    mul, inv = G.mul, G.inv
    counts: Dict = {}
    inverses = [inv(b) for b in A.elements]
    for a in A.elements:
        for bi in inverses:
            d = mul(a, bi)
            counts[d] = counts.get(d, 0) + 1
    return counts


def popular_quotients(A: GroupSet, c) -> GroupSet:
    """{d in A A^-1 : d has at least c|A| representations a1 a2^-1}."""
    if not A.elements:
        raise ConfigError("popular quotients need a non-empty set")
    bound = Fraction(c) * len(A)
    return GroupSet(A.group, [d for d, k in quotient_counts(A).items() if k >= bound])


@dataclass
class TupleCheck:
    k: int
    fraction: float
    lower_bound: float
    mode: str                # "exact" or "sampled"
    tuples: int
    samples: int = 0

    def holds(self, eps) -> bool:
        return self.lower_bound >= 1 - float(eps)


def _hoeffding_lower(p: float, n: int) -> float:
    return p - math.sqrt(math.log(1 / (1 - CONFIDENCE)) / (2 * n))


def count_pattern(G, factors: List[Dict], target, table_budget: int = 400_000):
    """Weighted count of tuples (x_1..x_k), x_i from factors[i], with product in target.

    factors are dicts element -> weight.  Returns None when the prefix
    product table outgrows the budget.
    """
    mul = G.mul
    dist = {G.identity(): 1}
    for f in factors:
        nxt: Dict = {}
        for x, c in dist.items():
            for y, w in f.items():
                z = mul(x, y)
                nxt[z] = nxt.get(z, 0) + c * w
        dist = nxt
        if len(dist) > table_budget:
            return None
    return sum(c for x, c in dist.items() if x in target)


def verify_pattern(G, factors: List[List], target, eps, rng: random.Random,
                   k: int) -> TupleCheck:
    """Fraction of tuples from the given factor lists whose product lies in target."""
    total = math.prod(len(f) for f in factors)
    weighted = [{x: 1 for x in f} for f in factors]
    hit = count_pattern(G, weighted, target)
    if hit is not None:
        p = hit / total
        return TupleCheck(k, p, p, "exact", total)
    mul = G.mul
    good = 0
    for _ in range(SAMPLE_SIZE):
        x = G.identity()
        for f in factors:
            x = mul(x, f[rng.randrange(len(f))])
        good += x in target
    p = good / SAMPLE_SIZE
    return TupleCheck(k, p, _hoeffding_lower(p, SAMPLE_SIZE), "sampled", total, SAMPLE_SIZE)


def alternating_check(A_prime: GroupSet, AAinv: GroupSet, k: int, eps,
                      rng: random.Random) -> TupleCheck:
    """Tuples in A'^{2k} with a1 a2^-1 a3 a4^-1 ... a_{2k}^-1 in A A^-1."""
    G = A_prime.group
    S = A_prime.sorted()
    Sinv = [G.inv(a) for a in S]
    return verify_pattern(G, [S, Sinv] * k, AAinv.elements, eps, rng, k)


def product_check(D: GroupSet, AAinv: GroupSet, k: int, eps, rng: random.Random) -> TupleCheck:
    """Tuples in D^k with d1 ... dk in A A^-1."""
    S = D.sorted()
    return verify_pattern(D.group, [S] * k, AAinv.elements, eps, rng, k)


# the two propositions


@dataclass
class BSGReport:
    A_prime: GroupSet
    ratio: float
    checks: List[TupleCheck]
    eps: float
    partition: Optional[RegularityPartition] = None
    cell: Optional[int] = None
    cells_tried: List[int] = field(default_factory=list)
    seed: int = 0
    draws: List[List[int]] = field(default_factory=list)
    markov: List[Dict] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return all(c.holds(self.eps) for c in self.checks)

    def summary(self) -> Dict:
        return {
            "size": len(self.A_prime), "ratio": self.ratio, "eps": self.eps,
            "verified": self.verified, "cell": self.cell, "cells_tried": self.cells_tried,
            "checks": [c.__dict__ for c in self.checks], "seed": self.seed,
            "attempts": len(self.markov) or 1, "markov": self.markov,
        }


def _quotient_set(A: GroupSet) -> GroupSet:
    return product_set(A, A.inverse())


def _check_doubling(A: GroupSet, K) -> GroupSet:
    AAinv = _quotient_set(A)
    if len(AAinv) > Fraction(K) * len(A):
        raise ConfigError(f"|A A^-1| = {len(AAinv)} exceeds K|A| = {float(K) * len(A):g}")
    return AAinv


def _score_cells(graphs, part, floor):
    # a cell is scored by the share of its edges landing in good cells:
    # regular and of density at least the floor
    scores = []
    for a, cell in enumerate(part.blocks[0]):
        share = []
        for side in (1, 2):
            good = total = 0
            for b, blk in enumerate(part.blocks[side]):
                e = int(graphs[(0, side)].adj[np.ix_(cell, blk)].sum())
                total += e
                v = part.verdicts[(0, side, a, b)]
                if not v.irregular and part.densities[(0, side, a, b)] >= floor:
                    good += e
            share.append(good / total if total else 0.0)
        scores.append((min(share), a))
    scores.sort(key=lambda t: (-t[0], t[1]))
    return scores


def bsg_refine(A: GroupSet, K, k0: int, eps, seed: int = 0, max_blocks: int = 8,
               block_cap: int = 64, c=None) -> BSGReport:
    """A cell A' of the popular quotients with the alternating tuple property.

    When no cell verifies, the partition is refined further (doubling the
    block limit up to block_cap) before giving up.
    """
    eps = Fraction(eps)
    rng = random.Random(seed)
    AAinv = _check_doubling(A, K)
    G = A.group
    D = popular_quotients(A, Fraction(1, 2) / Fraction(K) if c is None else c)
    V0, V1 = D.sorted(), A.sorted()
    index1 = {a: i for i, a in enumerate(V1)}
    E01 = np.zeros((len(V0), len(V1)), dtype=bool)
    E02 = np.zeros((len(V0), len(V1)), dtype=bool)
    for r, d in enumerate(V0):
        dinv = G.inv(d)
        for a in V1:
            a2 = G.mul(dinv, a)        # d = a a2^-1
            if a2 in index1:
                E01[r, index1[a]] = True
                E02[r, index1[a2]] = True
    graphs = {(0, 1): BipartiteGraph(E01), (0, 2): BipartiteGraph(E02)}
    tried = []
    limit = max_blocks
    while True:
        part = regularity_partition(graphs, eps / 8, max_blocks=limit,
                                    seed=rng.randrange(1 << 30), strict=False)
        for score, a in _score_cells(graphs, part, eps / 4):
            cell = GroupSet(G, [V0[r] for r in part.blocks[0][a]])
            tried.append((len(part.blocks[0]), a))
            checks = [alternating_check(cell, AAinv, k, eps, rng) for k in range(1, k0 + 1)]
            report = BSGReport(cell, len(cell) / len(A), checks, float(eps), part, a,
                               tried, seed)
            if report.verified:
                return report
        if part.target_met or limit >= block_cap or max(map(len, part.blocks[0])) < 2:
            break
        limit *= 2
    raise VerificationFailure(
        f"no cell of the popular quotients passed the tuple check (tried {len(tried)})")


def bsg_symmetrize(A: GroupSet, K, k0: int, eps, seed: int = 0, max_retries: int = 10,
                   max_blocks: int = 8) -> BSGReport:
    """A centred D inside A A^-1 with the k-fold product property."""
    eps = Fraction(eps)
    eps_inner = eps / 4
    base = bsg_refine(A, K, k0, eps_inner, seed, max_blocks)
    rng = random.Random(seed + 1)
    G = A.group
    AAinv = _quotient_set(A)
    Ap = base.A_prime.sorted()
    n = len(Ap)
    draws, markov = [], []
    for attempt in range(max_retries):
        idx = [rng.randrange(n) for _ in range(2 * n + 2)]
        a = [Ap[i] for i in idx]
        d = [None] * (2 * n + 1)
        for j in range(1, n + 1):
            d[j] = G.mul(a[2 * j], G.inv(a[2 * j + 1]))
            d[j + n] = G.mul(a[2 * j + 1], G.inv(a[2 * j]))
        mu: Dict = {}
        for x in d[1:]:
            mu[x] = mu.get(x, 0) + 1
        energy = sum(m * m for m in mu.values())
        mark1 = energy <= 60 * n
        failing = []
        for k in range(1, k0 + 1):
            hit = count_pattern(G, [mu] * k, AAinv.elements)
            if hit is None:
                failing.append(None)
            else:
                failing.append(1 - hit / (2 * n) ** k)
        mark2 = all(f is not None and f <= float(eps) / 2 for f in failing)
        draws.append(idx)
        stats = {"attempt": attempt, "energy": energy, "mark1": mark1,
                 "weighted_failure": failing, "mark2": mark2}
        markov.append(stats)
        if not (mark1 and mark2):
            continue
        D = GroupSet(G, set(mu) | {G.identity()})
        checks = [product_check(D, AAinv, k, eps, rng) for k in range(1, k0 + 1)]
        stats["verified"] = all(c.holds(eps) for c in checks)
        if stats["verified"]:
            return BSGReport(D, len(D) / len(A), checks, float(eps), base.partition,
                             base.cell, base.cells_tried, seed, draws, markov)
    raise VerificationFailure(f"symmetrization failed after {max_retries} attempts: {markov}")
