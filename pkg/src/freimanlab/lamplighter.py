"""Classification of small-doubling sets in lamplighter groups.

Case 1: A is controlled by a finite subgroup {0} x V of the lamp group.
Case 2: A is controlled by B = {(n, phi(n)) + V : n in P}, with P a
progression in dZ, V a T^d-invariant lamp subspace and the graph of phi
a Freiman isomorphism modulo V.

Lamp vectors are handled as Python ints: bit p + OFFSET is the lamp at
position p for the windowed group, bit i is lamp i for the periodic one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConfigError, VerificationFailure
from .groups import Integers, Lamplighter, PeriodicLamplighter
from .setcalc import (ControlCertificate, GroupSet, approx_certificate, control_certificate,
                      control_holds, iterated_set, product_set, symmetric_hull)

OFFSET = 1 << 12


class Lamps:
    """Conversions between group elements and integer lamp vectors."""

    def __init__(self, G):
        if not isinstance(G, (Lamplighter, PeriodicLamplighter)):
            raise ConfigError(f"{G.spec} is not a lamplighter group")
        self.G = G
        self.periodic = isinstance(G, PeriodicLamplighter)

    def vector(self, g) -> int:
        if self.periodic:
            return g[1]
        out = 0
        for p in g[1]:
            out |= 1 << (p + OFFSET)
        return out

    def element(self, n: int, vec: int):
        if self.periodic:
            return (n, vec)
        positions = []
        i = 0
        while vec:
            if vec & 1:
                positions.append(i - OFFSET)
            vec >>= 1
            i += 1
        return (n, self.G._check(tuple(positions)))

    def shift(self, vec: int, v: int) -> int:
        """T^v: every lamp moves v steps to the right."""
        if self.periodic:
            return self.G.shift_mask(vec, v)
        if v >= 0:
            return vec << v
        out = vec >> -v
        if bin(out).count("1") != bin(vec).count("1"):
            raise VerificationFailure("lamp shifted below the representable range")
        return out

    def bits(self, vec: int) -> str:
        if self.periodic:
            return "".join(str((vec >> i) & 1) for i in range(self.G.period))
        return ",".join(str(p) for p in self.element(0, vec)[1])


class F2Span:
    """Reduced row echelon basis over F_2 of integer bit vectors."""

    def __init__(self, vectors: Sequence[int] = ()):
        self.rows: Dict[int, int] = {}        # pivot bit -> row
        for v in vectors:
            self.add(v)

    def reduce(self, v: int) -> int:
        for piv in sorted(self.rows, reverse=True):
            if (v >> piv) & 1:
                v ^= self.rows[piv]
        return v

    def add(self, v: int) -> bool:
        v = self.reduce(v)
        if not v:
            return False
        piv = v.bit_length() - 1
        for p, row in list(self.rows.items()):
            if (row >> piv) & 1:
                self.rows[p] = row ^ v
        self.rows[piv] = v
        return True

    def __contains__(self, v: int) -> bool:
        return self.reduce(v) == 0

    @property
    def dim(self) -> int:
        return len(self.rows)

    def basis(self) -> List[int]:
        return [self.rows[p] for p in sorted(self.rows)]

    def elements(self) -> List[int]:
        out = [0]
        for b in self.basis():
            out += [x ^ b for x in out]
        return sorted(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, F2Span) and self.basis() == other.basis()

    def __le__(self, other: "F2Span") -> bool:
        return all(b in other for b in self.basis())


# one-dimensional progressions


@dataclass
class Progression1D:
    v: Tuple[int, ...]
    N: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.v)

    def elements(self) -> List[int]:
        out = {0}
        for g, n in zip(self.v, self.N):
            out = {x + k * g for x in out for k in range(-n, n + 1)}
        return sorted(out)


def find_progression(core: Sequence[int], room: Sequence[int]) -> Progression1D:
    """Smallest GAP of rank <= 2 containing core and lying inside room.

    Rank 1 is tried first with step gcd(core); if its hull leaves room,
    a second generator is added (the smallest element of core outside the
    first direction) and the box that fits is taken.
    """
    core = sorted(set(core))
    room = set(room)
    nz = [abs(x) for x in core if x]
    if not nz:
        return Progression1D((), ())
    d = 0
    for x in nz:
        d = math.gcd(d, x)
    N = max(nz) // d
    if all(k * d in room for k in range(-N, N + 1)):
        return Progression1D((d,), (N,))
    best = None
    for v2 in sorted(nz):
        for N1 in range(1, N + 1):
            P1 = {k * d for k in range(-N1, N1 + 1)}
            if not P1 <= room:
                break
            N2 = 0
            while all(x + s * (N2 + 1) * v2 in room for x in P1 for s in (1, -1)):
                N2 += 1
                if N2 > len(room):
                    break
            if N2 == 0:
                continue
            P = Progression1D((d, v2), (N1, N2))
            pts = set(P.elements())
            if set(core) <= pts:
                key = (len(pts), N1)
                if best is None or key < best[0]:
                    best = (key, P)
    if best is None:
        raise VerificationFailure("no progression of rank <= 2 contains the projection")
    return best[1]


# Freiman check


def _product_vector(L: Lamps, g, h) -> int:
    return L.vector(L.G.mul(g, h))


def verify_freiman_mod_V(G, phi: Dict[int, int], V: Optional[F2Span] = None):
    """None if n -> (n, phi(n)) is Freiman modulo V, else a bad quadruple.

    phi maps n to a lamp vector.  Pairs are grouped by n1 + n2 and their
    products compared, which covers every quadruple with n1+n2 = n3+n4.
    """
    L = Lamps(G)
    V = V or F2Span()
    seen: Dict[int, Tuple[int, int, int]] = {}
    keys = sorted(phi)
    for n1 in keys:
        g1 = L.element(n1, phi[n1])
        for n2 in keys:
            g2 = L.element(n2, phi[n2])
            val = V.reduce(_product_vector(L, g1, g2))
            s = n1 + n2
            if s in seen:
                m1, m2, other = seen[s]
                if other != val:
                    return (m1, m2, n1, n2)
            else:
                seen[s] = (n1, n2, val)
    return None


# classification


@dataclass
class LampClassification:
    case: str                          # "Case1" or "Case2"
    V: F2Span
    d: int
    P: Progression1D
    phi: Dict[int, int]
    B: GroupSet
    control: ControlCertificate
    checks: Dict[str, bool]
    chain: List[int]
    K_approx: Fraction
    notes: List[str] = field(default_factory=list)

    def report(self, L: Lamps) -> Dict:
        return {
            "case": self.case,
            "V_basis": [L.bits(b) for b in self.V.basis()],
            "d": self.d, "P": {"v": list(self.P.v), "N": list(self.P.N)},
            "phi": {str(n): L.bits(v) for n, v in sorted(self.phi.items())},
            "B_size": len(self.B), "X_size": len(self.control.X),
            "K_control": str(self.control.K), "checks": self.checks,
            "chain": self.chain, "notes": self.notes,
        }


def _kernel_vectors(L: Lamps, S: GroupSet) -> List[int]:
    return sorted(L.vector(g) for g in S.elements if g[0] == 0)


def classify(A: GroupSet, K=None, C_cap: int = 2, e_kernel: int = 6, e_span: int = 12,
             n_cap: int = 64, budget: int = 200_000) -> LampClassification:
    G = A.group
    L = Lamps(G)
    if not A.elements:
        raise ConfigError("classify needs a non-empty set")
    AA = product_set(A, A)
    doubling = Fraction(len(AA), len(A))
    if K is not None and doubling > Fraction(K):
        raise ConfigError(f"doubling {float(doubling):.3f} exceeds K = {K}")
    notes = []
    At = symmetric_hull(A)
    K_approx = approx_certificate(At).K

    # projection to Z and a controlling progression inside pi(At^4)
    Z = Integers()
    core = sorted({g[0] for g in At.elements})
    room = GroupSet(Z, core)
    room = iterated_set(room, 4)
    P = find_progression(core, room.elements)
    kept = [(v, n) for v, n in zip(P.v, P.N) if n >= C_cap]
    if len(kept) < P.rank:
        notes.append(f"dropped {P.rank - len(kept)} dimension(s) below {C_cap}")
    P = Progression1D(tuple(v for v, _ in kept), tuple(n for _, n in kept))

    # E and the spans W_n
    E = _kernel_vectors(L, iterated_set(At, e_kernel, budget=budget))
    W = F2Span(_kernel_vectors(L, iterated_set(At, e_span, budget=budget)))

    def span_at(n):
        pts = {0}
        for g in P.v:
            pts = {x + k * g for x in pts for k in range(-n, n + 1)}
        return F2Span([L.shift(e, s) for e in E for s in sorted(pts)])

    chain = []
    prev = span_at(0)
    chain.append(prev.dim)
    for n in range(n_cap):
        nxt = span_at(n + 1)
        chain.append(nxt.dim)
        if not prev <= nxt:
            raise AssertionError("span chain decreased")
        if nxt == prev:
            break
        prev = nxt
    else:
        raise VerificationFailure(f"span chain did not stabilise within {n_cap} steps")
    V = prev
    checks = {"V_contains_E": all(e in V for e in E), "V_inside_W": V <= W}

    if P.rank == 0:
        case, d, phi = "Case1", 0, {0: 0}
        B = GroupSet(G, [L.element(0, v) for v in V.elements()])
        checks["B_subgroup"] = all(G.mul(x, G.inv(y)) in B for x in B.elements
                                   for y in B.elements)
    else:
        case = "Case2"
        d = 0
        for g in P.v:
            d = math.gcd(d, g)
        checks["V_shift_invariant"] = all(L.shift(b, d) in V for b in V.basis())
        if not L.periodic and V.dim:
            raise AssertionError("non-periodic lamplighter gave a nontrivial V in Case 2")
        pts = set(P.elements())
        slab = [g for g in iterated_set(At, 4, budget=budget).elements if g[0] in pts]
        phi, fibres_ok = {}, True
        for g in slab:
            r = V.reduce(L.vector(g))
            if phi.setdefault(g[0], r) != r:
                fibres_ok = False
        checks["single_coset_fibres"] = fibres_ok
        if not fibres_ok:
            raise VerificationFailure("a fibre of B meets several cosets of V")
        checks["phi_zero"] = phi.get(0) == 0
        checks["freiman_mod_V"] = verify_freiman_mod_V(G, phi, V) is None
        B = GroupSet(G, [L.element(n, phi[n] ^ v) for n in sorted(phi) for v in V.elements()])
        checks["P_in_dZ"] = all(n % d == 0 for n in pts)
    cert = control_certificate(A, B)
    checks["control"] = control_holds(A, B, cert.X)
    checks["B_size"] = len(B) <= cert.K * len(A)
    return LampClassification(case, V, d, P, phi, B, cert, checks, chain, K_approx, notes)


def converse_doubling(cls: LampClassification, bound=4) -> Tuple[Fraction, bool]:
    """Exact |B.B| / |B| and whether it exceeds the bound."""
    B = cls.B
    k = Fraction(len(product_set(B, B)), len(B))
    return k, k > bound


# planted inputs


def planted_graph(G, u_positions: Sequence[int], N: int) -> Tuple[GroupSet, Dict[int, int]]:
    """A = {(n, T^n u + u) : |n| <= N}, the conjugate of an interval by (0, u)."""
    L = Lamps(G)
    u = L.vector((0, tuple(sorted(u_positions))) if not L.periodic else
                 (0, sum(1 << (p % G.period) for p in u_positions)))
    phi = {n: L.shift(u, n) ^ u for n in range(-N, N + 1)}
    return GroupSet(G, [L.element(n, v) for n, v in phi.items()]), phi
