"""Concrete groups with exact arithmetic.

Elements are plain hashable Python values (ints and tuples) in canonical
form, so they can live in sets and be sorted deterministically.  A group
object knows how to multiply, invert, validate, serialize and sample its
elements; it never stores mutable state.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Iterable, List, Sequence, Tuple

from .errors import (BudgetExceeded, ConfigError, MixedGroupError,
                     UndefinedProjection, WindowOverflow)

Element = Any


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    d = 2
    while d * d <= p:
        if p % d == 0:
            return False
        d += 1
    return True


def _encode_ints(values: Sequence[int]) -> str:
    parts = [str(len(values))]
    for v in values:
        s = str(int(v))
        parts.append(f"{len(s)}:{s}")
    return "|".join(parts)


def _decode_ints(text: str) -> List[int]:
    try:
        head, *rest = text.split("|")
        count = int(head)
        out = []
        for chunk in rest:
            n, s = chunk.split(":", 1)
            if int(n) != len(s):
                raise ValueError("length prefix mismatch")
            out.append(int(s))
    except ValueError as exc:
        raise ConfigError(f"malformed serialized element {text!r}: {exc}")
    if count != len(out):
        raise ConfigError(f"malformed serialized element {text!r}: count mismatch")
    return out


class Group:
    """Base class: subclasses define identity, mul, inv and the codec."""

    abelian = False
    finite = False

    def identity(self) -> Element:
        raise NotImplementedError

    def mul(self, g: Element, h: Element) -> Element:
        raise NotImplementedError

    def inv(self, g: Element) -> Element:
        raise NotImplementedError

    def is_element(self, g: Element) -> bool:
        raise NotImplementedError

    def to_ints(self, g: Element) -> List[int]:
        raise NotImplementedError

    def from_ints(self, values: List[int]) -> Element:
        raise NotImplementedError

    def random_element(self, rng: random.Random, size: int = 3) -> Element:
        raise NotImplementedError

    @property
    def spec(self) -> str:
        raise NotImplementedError

    # generic helpers

    def serialize(self, g: Element) -> str:
        return _encode_ints(self.to_ints(g))

    def deserialize(self, text: str) -> Element:
        g = self.from_ints(_decode_ints(text))
        if not self.is_element(g):
            raise ConfigError(f"{text!r} is not an element of {self.spec}")
        return g

    def pow(self, g: Element, n: int) -> Element:
        if n < 0:
            g, n = self.inv(g), -n
        result = self.identity()
        base = g
        while n:
            if n & 1:
                result = self.mul(result, base)
            base = self.mul(base, base)
            n >>= 1
        return result

    def prod(self, elements: Iterable[Element]) -> Element:
        out = self.identity()
        for g in elements:
            out = self.mul(out, g)
        return out

    def commutator(self, g: Element, h: Element) -> Element:
        return self.mul(self.mul(g, h), self.mul(self.inv(g), self.inv(h)))

    def conj(self, g: Element, h: Element) -> Element:
        """g h g^-1"""
        return self.mul(self.mul(g, h), self.inv(g))

    def projection(self, name: str) -> Tuple["Group", Any]:
        raise UndefinedProjection(f"no projection {name!r} on {self.spec}")

    def __repr__(self):
        return self.spec


@dataclass(frozen=True, repr=False)
class Integers(Group):
    abelian = True

    def identity(self):
        return 0

    def mul(self, g, h):
        return g + h

    def inv(self, g):
        return -g

    def pow(self, g, n):
        return g * n

    def is_element(self, g):
        return isinstance(g, int) and not isinstance(g, bool)

    def to_ints(self, g):
        return [g]

    def from_ints(self, values):
        if len(values) != 1:
            raise ConfigError("integer element needs one field")
        return values[0]

    def random_element(self, rng, size=3):
        return rng.randint(-size, size)

    @property
    def spec(self):
        return "z()"


@dataclass(frozen=True, repr=False)
class IntegerLattice(Group):
    rank: int
    abelian = True

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("lattice rank must be positive")

    def identity(self):
        return (0,) * self.rank

    def mul(self, g, h):
        return tuple(a + b for a, b in zip(g, h))

    def inv(self, g):
        return tuple(-a for a in g)

    def pow(self, g, n):
        return tuple(a * n for a in g)

    def is_element(self, g):
        return (isinstance(g, tuple) and len(g) == self.rank
                and all(isinstance(a, int) for a in g))

    def to_ints(self, g):
        return list(g)

    def from_ints(self, values):
        return tuple(values)

    def random_element(self, rng, size=3):
        return tuple(rng.randint(-size, size) for _ in range(self.rank))

    @property
    def spec(self):
        return f"z(r={self.rank})"


@dataclass(frozen=True, repr=False)
class FiniteAbelian(Group):
    orders: Tuple[int, ...]
    abelian = True
    finite = True

    def __post_init__(self):
        if not self.orders or any(n < 1 for n in self.orders):
            raise ConfigError("cyclic orders must be positive")

    @property
    def order(self) -> int:
        out = 1
        for n in self.orders:
            out *= n
        return out

    def identity(self):
        return (0,) * len(self.orders)

    def mul(self, g, h):
        return tuple((a + b) % n for a, b, n in zip(g, h, self.orders))

    def inv(self, g):
        return tuple((-a) % n for a, n in zip(g, self.orders))

    def pow(self, g, n):
        return tuple((a * n) % m for a, m in zip(g, self.orders))

    def reduce(self, values) -> Tuple[int, ...]:
        return tuple(int(a) % n for a, n in zip(values, self.orders))

    def is_element(self, g):
        return (isinstance(g, tuple) and len(g) == len(self.orders)
                and all(isinstance(a, int) and 0 <= a < n
                        for a, n in zip(g, self.orders)))

    def elements(self) -> List[Tuple[int, ...]]:
        out = [()]
        for n in self.orders:
            out = [e + (a,) for e in out for a in range(n)]
        return out

    def to_ints(self, g):
        return list(g)

    def from_ints(self, values):
        return tuple(values)

    def random_element(self, rng, size=3):
        return tuple(rng.randrange(n) for n in self.orders)

    @property
    def spec(self):
        return "finab(" + ",".join(map(str, self.orders)) + ")"


@dataclass(frozen=True, repr=False)
class Lamplighter(Group):
    """Z acting on finitely supported F_2 sequences by the shift T.

    An element is (n, positions) with positions a sorted tuple of lit
    lamps.  Law: (n, x)(n', x') = (n + n', T^{n'}(x) + x'), where T moves
    every lamp one step to the right.
    """

    window: int

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("lamplighter window must be positive")

    def _check(self, support):
        w = self.window
        for p in support:
            if p < -w or p > w:
                raise WindowOverflow(
                    f"lamp at position {p} leaves window [-{w},{w}]")
        return support

    def identity(self):
        return (0, ())

    def mul(self, g, h):
        n, x = g
        m, y = h
        shifted = {p + m for p in x}
        return (n + m, self._check(tuple(sorted(shifted.symmetric_difference(y)))))

    def inv(self, g):
        n, x = g
        return (-n, self._check(tuple(p - n for p in x)))

    def is_element(self, g):
        if not (isinstance(g, tuple) and len(g) == 2 and isinstance(g[0], int)
                and isinstance(g[1], tuple)):
            return False
        x = g[1]
        return (list(x) == sorted(set(x))
                and all(-self.window <= p <= self.window for p in x))

    def to_ints(self, g):
        return [g[0], len(g[1]), *g[1]]

    def from_ints(self, values):
        if len(values) < 2 or values[1] != len(values) - 2:
            raise ConfigError("lamplighter element needs shift, count, positions")
        return (values[0], tuple(values[2:]))

    def random_element(self, rng, size=3):
        size = min(size, self.window)
        n = rng.randint(-size, size)
        support = tuple(sorted(p for p in range(-size, size + 1)
                               if rng.random() < 0.5))
        return (n, support)

    def projection(self, name):
        if name in ("shift", "pi"):
            return Integers(), lambda g: g[0]
        return super().projection(name)

    @property
    def spec(self):
        return f"lamplighter(window={self.window})"


@dataclass(frozen=True, repr=False)
class PeriodicLamplighter(Group):
    """Z acting on period-W bit vectors by cyclic shift.

    Bit vectors are stored as integer masks; bit i is the lamp at
    position i mod W.
    """

    period: int

    def __post_init__(self):
        if self.period < 1:
            raise ConfigError("period must be positive")

    @property
    def full_mask(self) -> int:
        return (1 << self.period) - 1

    def shift_mask(self, mask: int, n: int) -> int:
        w = self.period
        n %= w
        if n == 0:
            return mask
        return ((mask << n) | (mask >> (w - n))) & self.full_mask

    def identity(self):
        return (0, 0)

    def mul(self, g, h):
        return (g[0] + h[0], self.shift_mask(g[1], h[0]) ^ h[1])

    def inv(self, g):
        return (-g[0], self.shift_mask(g[1], -g[0]))

    def is_element(self, g):
        return (isinstance(g, tuple) and len(g) == 2
                and all(isinstance(a, int) for a in g)
                and 0 <= g[1] <= self.full_mask)

    def bits(self, g) -> Tuple[int, ...]:
        return tuple((g[1] >> i) & 1 for i in range(self.period))

    def reduce(self, lamplighter_element) -> Tuple[int, int]:
        """Image of a windowed lamplighter element under reduction mod W."""
        n, support = lamplighter_element
        mask = 0
        for p in support:
            mask ^= 1 << (p % self.period)
        return (n, mask)

    def to_ints(self, g):
        return [g[0], *self.bits(g)]

    def from_ints(self, values):
        if len(values) != self.period + 1 or any(b not in (0, 1) for b in values[1:]):
            raise ConfigError("periodic lamplighter element needs shift and W bits")
        return (values[0], sum(b << i for i, b in enumerate(values[1:])))

    def random_element(self, rng, size=3):
        return (rng.randint(-size, size), rng.randrange(1 << self.period))

    def projection(self, name):
        if name in ("shift", "pi"):
            return Integers(), lambda g: g[0]
        return super().projection(name)

    @property
    def spec(self):
        return f"plamplighter(period={self.period})"


@dataclass(frozen=True, repr=False)
class UT3(Group):
    """Invertible upper triangular 3x3 matrices over F_p.

    Stored row-major as (a11, a12, a13, a22, a23, a33).
    """

    p: int
    finite = True

    def __post_init__(self):
        if not _is_prime(self.p):
            raise ConfigError(f"ut3 needs a prime, got {self.p}")

    def identity(self):
        return (1, 0, 0, 1, 0, 1)

    def mul(self, g, h):
        a11, a12, a13, a22, a23, a33 = g
        b11, b12, b13, b22, b23, b33 = h
        p = self.p
        return (a11 * b11 % p,
                (a11 * b12 + a12 * b22) % p,
                (a11 * b13 + a12 * b23 + a13 * b33) % p,
                a22 * b22 % p,
                (a22 * b23 + a23 * b33) % p,
                a33 * b33 % p)

    def inv(self, g):
        a11, a12, a13, a22, a23, a33 = g
        p = self.p
        i11, i22, i33 = pow(a11, -1, p), pow(a22, -1, p), pow(a33, -1, p)
        i12 = -a12 * i11 * i22 % p
        i23 = -a23 * i22 * i33 % p
        i13 = (a12 * a23 - a13 * a22) * i11 * i22 * i33 % p
        return (i11, i12, i13, i22, i23, i33)

    def matrix(self, g) -> List[List[int]]:
        a11, a12, a13, a22, a23, a33 = g
        return [[a11, a12, a13], [0, a22, a23], [0, 0, a33]]

    def from_matrix(self, m) -> Tuple[int, ...]:
        p = self.p
        if any(m[i][j] % p for i in range(3) for j in range(i)):
            raise ConfigError("matrix is not upper triangular")
        return (m[0][0] % p, m[0][1] % p, m[0][2] % p,
                m[1][1] % p, m[1][2] % p, m[2][2] % p)

    def is_element(self, g):
        return (isinstance(g, tuple) and len(g) == 6
                and all(isinstance(a, int) and 0 <= a < self.p for a in g)
                and g[0] and g[3] and g[5])

    def elements(self) -> List[Tuple[int, ...]]:
        p = self.p
        units = range(1, p)
        return [(a, b, c, d, e, f) for a in units for b in range(p) for c in range(p)
                for d in units for e in range(p) for f in units]

    def to_ints(self, g):
        return list(g)

    def from_ints(self, values):
        return tuple(values)

    def random_element(self, rng, size=3):
        p = self.p
        return (rng.randrange(1, p), rng.randrange(p), rng.randrange(p),
                rng.randrange(1, p), rng.randrange(p), rng.randrange(1, p))

    def projection(self, name):
        if name == "diagonal":
            return self, lambda g: (g[0], 0, 0, g[3], 0, g[5])
        return super().projection(name)

    @property
    def spec(self):
        return f"ut3(p={self.p})"


@dataclass(frozen=True, repr=False)
class Heisenberg(Group):
    """Integer Heisenberg group in Mal'cev coordinates.

    (a, b, c) is the matrix [[1, a, c], [0, 1, b], [0, 0, 1]].
    """

    def identity(self):
        return (0, 0, 0)

    def mul(self, g, h):
        a, b, c = g
        x, y, z = h
        return (a + x, b + y, c + z + a * y)

    def inv(self, g):
        a, b, c = g
        return (-a, -b, a * b - c)

    def commutator(self, g, h):
        return (0, 0, g[0] * h[1] - h[0] * g[1])

    def matrix(self, g) -> List[List[int]]:
        a, b, c = g
        return [[1, a, c], [0, 1, b], [0, 0, 1]]

    def is_element(self, g):
        return (isinstance(g, tuple) and len(g) == 3
                and all(isinstance(a, int) for a in g))

    def to_ints(self, g):
        return list(g)

    def from_ints(self, values):
        if len(values) != 3:
            raise ConfigError("heisenberg element needs three coordinates")
        return tuple(values)

    def random_element(self, rng, size=3):
        return tuple(rng.randint(-size, size) for _ in range(3))

    def projection(self, name):
        if name in ("abelianization", "ab"):
            return IntegerLattice(2), lambda g: (g[0], g[1])
        return super().projection(name)

    @property
    def spec(self):
        return "heis()"


# checked entry points


def _require(G: Group, *elements):
    for g in elements:
        if not G.is_element(g):
            raise MixedGroupError(f"{g!r} is not an element of {G.spec}")


def group_law(G: Group, g: Element, h: Element | None = None, mode: str = "multiply"):
    if mode == "identity":
        return G.identity()
    if mode == "invert":
        _require(G, g)
        return G.inv(g)
    if mode == "multiply":
        _require(G, g, h)
        return G.mul(g, h)
    raise ConfigError(f"unknown mode {mode!r}")


def commutator(G: Group, g: Element, h: Element) -> Element:
    _require(G, g, h)
    return G.commutator(g, h)


def projection_hom(G: Group, name: str, g: Element) -> Element:
    _require(G, g)
    _, f = G.projection(name)
    return f(g)


# finite closures and series


def closure(G: Group, generators: Iterable[Element], budget: int = 200_000) -> frozenset:
    """Subgroup generated by `generators`, by BFS on right multiplication."""
    gens = set(generators)
    gens |= {G.inv(g) for g in gens}
    gens.discard(G.identity())
    seen = {G.identity()}
    frontier = [G.identity()]
    while frontier:
        nxt = []
        for x in frontier:
            for s in gens:
                y = G.mul(x, s)
                if y not in seen:
                    seen.add(y)
                    if len(seen) > budget:
                        raise BudgetExceeded(
                            f"closure exceeded {budget} elements in {G.spec}")
                    nxt.append(y)
        frontier = nxt
    return frozenset(seen)


def _commutator_subgroup(G, left, right, budget):
    comms = {G.commutator(a, b) for a in left for b in right}
    return closure(G, comms, budget)


def _is_normal_in(G, sub, gens):
    return all(G.conj(g, h) in sub for g in gens for h in sub)


def finite_series(G: Group, generators: Iterable[Element], kind: str = "derived",
                  max_depth: int = 16, budget: int = 200_000) -> List[frozenset]:
    """Derived or lower central series of the subgroup generated by `generators`.

    Returns the chain as explicit element sets, starting with the closure
    itself and stopping at the trivial group or after max_depth steps.
    """
    if kind not in ("derived", "lower_central"):
        raise ConfigError(f"unknown series kind {kind!r}")
    whole = closure(G, generators, budget)
    series = [whole]
    trivial = frozenset([G.identity()])
    while series[-1] != trivial and len(series) <= max_depth:
        prev = series[-1]
        left = prev if kind == "derived" else whole
        nxt = _commutator_subgroup(G, left, prev, budget)
        if nxt == prev:
            break
        if not _is_normal_in(G, nxt, prev):
            raise AssertionError("series term is not normal in its predecessor")
        series.append(nxt)
    return series


def series_length(series: List[frozenset]) -> int | None:
    """Number of steps to reach the trivial group, or None if it stalls."""
    if len(series[-1]) != 1:
        return None
    return len(series) - 1
