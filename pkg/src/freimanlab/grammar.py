"""Text grammars for groups, elements, sets, progressions and nilprogressions.

    group        name(args)             z(r=2), finab(4,4,2), lamplighter(window=16),
                                        plamplighter(period=8), ut3(p=5), heis()
    element      int | (int, ...)       coordinates as in Group.from_ints
    elements     element (; element)*   or (a,b),(c,d) when parenthesised
    set          interval(lo,hi) | box(n1,...) | ball(r) | cnp(...) | elements
    progression  gap(group; v=elements; n=ints)
                 coset(group; h=elements; v=elements; n=ints)
    cnp          cnp(name; key=int, ...)

Errors raise ConfigError tagged with the character offset.
"""
from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Tuple

from .abelian import GAP, CosetProgression
from .errors import ConfigError
from .groups import (FiniteAbelian, Group, Heisenberg, IntegerLattice, Integers, Lamplighter,
                     PeriodicLamplighter, UT3, closure)
from .setcalc import GroupSet

# name -> (constructor, parameter names); None means variadic positional orders
GROUPS = {
    "z": (None, ("r",)),
    "finab": (None, None),
    "lamplighter": (Lamplighter, ("window",)),
    "plamplighter": (PeriodicLamplighter, ("period",)),
    "ut3": (UT3, ("p",)),
    "heis": (Heisenberg, ()),
}


class Scanner:
    def __init__(self, text: str, offset: int = 0):
        self.text = text
        self.i = 0
        self.offset = offset

    @property
    def pos(self) -> int:
        return self.offset + self.i

    def error(self, msg: str):
        raise ConfigError(msg, self.pos)

    def skip(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.i] if self.i < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            got = repr(self.peek()) if self.peek() else "end of input"
            self.error(f"expected {ch!r}, got {got}")
        self.i += 1

    def accept(self, ch: str) -> bool:
        if self.peek() == ch:
            self.i += 1
            return True
        return False

    def name(self) -> str:
        self.skip()
        j = self.i
        while self.i < len(self.text) and (self.text[self.i].isalnum() or self.text[self.i] in "_-"):
            self.i += 1
        if j == self.i:
            self.error("expected a name")
        return self.text[j:self.i]

    def integer(self) -> int:
        self.skip()
        j = self.i
        if self.i < len(self.text) and self.text[self.i] in "+-":
            self.i += 1
        while self.i < len(self.text) and self.text[self.i].isdigit():
            self.i += 1
        if self.text[j:self.i] in ("", "+", "-"):
            self.i = j
            self.error("expected an integer")
        return int(self.text[j:self.i])

    def end(self):
        if self.peek():
            self.error(f"unexpected trailing text {self.text[self.i:]!r}")


# groups


def _group_args(sc: Scanner) -> Tuple[List[int], Dict[str, int]]:
    pos, kw = [], {}
    sc.expect("(")
    if sc.accept(")"):
        return pos, kw
    while True:
        save = sc.i
        if sc.peek().isalpha():
            key = sc.name()
            sc.expect("=")
            kw[key] = sc.integer()
        else:
            sc.i = save
            if kw:
                sc.error("positional argument after keyword")
            pos.append(sc.integer())
        if sc.accept(")"):
            return pos, kw
        sc.expect(",")


def _group(sc: Scanner) -> Group:
    start = sc.pos
    name = sc.name()
    if name not in GROUPS:
        raise ConfigError(f"unknown group {name!r}", start)
    # a bare name means no arguments, as in gap(z; ...)
    pos, kw = _group_args(sc) if sc.peek() == "(" else ([], {})
    ctor, keys = GROUPS[name]
    if keys is None:                      # finab
        if kw or not pos:
            raise ConfigError("finab takes positional cyclic orders", start)
        return FiniteAbelian(tuple(pos))
    if len(pos) > len(keys):
        raise ConfigError(f"{name} takes at most {len(keys)} argument(s)", start)
    args = dict(zip(keys, pos))
    for k, v in kw.items():
        if k not in keys:
            raise ConfigError(f"{name} has no parameter {k!r}", start)
        if k in args:
            raise ConfigError(f"{name} got {k!r} twice", start)
        args[k] = v
    if name == "z":
        r = args.get("r", 1)
        return Integers() if r == 1 else IntegerLattice(r)
    missing = [k for k in keys if k not in args]
    if missing:
        raise ConfigError(f"{name} needs {', '.join(missing)}", start)
    return ctor(**args)


def parse_group(text: str) -> Group:
    sc = Scanner(text)
    G = _group(sc)
    sc.end()
    return G


# elements


def _make_element(G: Group, values: List[int], pos: int):
    try:
        g = G.from_ints(values)
        if isinstance(G, FiniteAbelian):
            if len(g) != len(G.orders):
                raise ConfigError(f"{G.spec} element needs {len(G.orders)} coordinates")
            g = G.reduce(g)
    except ConfigError as e:
        raise ConfigError(str(e), pos) from None
    if isinstance(G, IntegerLattice) and len(g) != G.rank:
        raise ConfigError(f"{G.spec} element needs {G.rank} coordinates", pos)
    if not G.is_element(g):
        raise ConfigError(f"{values} is not an element of {G.spec}", pos)
    if isinstance(G, Lamplighter):
        G._check(g[1])
    return g


def _element(sc: Scanner, G: Group):
    pos = sc.pos
    if sc.accept("("):
        vals = [sc.integer()]
        while sc.accept(","):
            vals.append(sc.integer())
        sc.expect(")")
    else:
        vals = [sc.integer()]
    return _make_element(G, vals, pos), pos


def _scalar(G: Group) -> bool:
    return len(G.to_ints(G.identity())) == 1


def _elements(sc: Scanner, G: Group, stop: str = "") -> List:
    """Parenthesised elements, or ';'-separated comma lists.

    In a one-coordinate group a bare comma list is several elements.
    """
    out = []
    if sc.peek() == "(":
        while True:
            out.append(_element(sc, G)[0])
            if sc.peek() not in (",", ";") or sc.peek() == stop:
                return out
            sc.i += 1
    while True:
        pos = sc.pos
        vals = _ints(sc)
        if _scalar(G):
            out.extend(_make_element(G, [v], pos) for v in vals)
        else:
            out.append(_make_element(G, vals, pos))
        if sc.peek() != ";" or stop == ";":
            return out
        sc.i += 1


def parse_elements(G: Group, text: str) -> List:
    sc = Scanner(text)
    out = _elements(sc, G)
    sc.end()
    return out


# sets


def _box_set(G: Group, N: List[int], pos: int) -> GroupSet:
    if isinstance(G, Integers):
        if len(N) != 1:
            raise ConfigError("box over z() takes one radius", pos)
        return GroupSet(G, range(-N[0], N[0] + 1))
    if isinstance(G, (IntegerLattice, FiniteAbelian)):
        rank = G.rank if isinstance(G, IntegerLattice) else len(G.orders)
        if len(N) != rank:
            raise ConfigError(f"box over {G.spec} takes {rank} radii", pos)
        pts = itertools.product(*[range(-n, n + 1) for n in N])
        if isinstance(G, FiniteAbelian):
            return GroupSet(G, {G.reduce(p) for p in pts})
        return GroupSet(G, [tuple(p) for p in pts])
    raise ConfigError(f"box needs an abelian coordinate group, not {G.spec}", pos)


def parse_set(G: Group, text: str, gens: Optional[GroupSet] = None,
              budget: Optional[int] = None) -> GroupSet:
    from .growth import ball
    from .nilprog import enumerate_cnp
    sc = Scanner(text)
    save = sc.i
    if sc.peek().isalpha():
        pos = sc.pos
        kind = sc.name()
        if kind == "cnp":
            sc.i = save
            C = _cnp(sc)
            sc.end()
            if C.group != G:
                raise ConfigError(f"nilprogression lives in {C.group.spec}, not {G.spec}", pos)
            return enumerate_cnp(C, budget)
        sc.expect("(")
        args = [sc.integer()]
        while sc.accept(","):
            args.append(sc.integer())
        sc.expect(")")
        sc.end()
        if kind == "interval":
            if not isinstance(G, Integers) or len(args) != 2:
                raise ConfigError("interval(lo,hi) is for z()", pos)
            return GroupSet(G, range(args[0], args[1] + 1))
        if kind == "box":
            return _box_set(G, args, pos)
        if kind == "ball":
            if gens is None:
                raise ConfigError("ball(r) needs --gens", pos)
            if len(args) != 1:
                raise ConfigError("ball takes one radius", pos)
            return ball(gens, args[0], budget)
        raise ConfigError(f"unknown set form {kind!r}", pos)
    out = _elements(sc, G)
    sc.end()
    return GroupSet(G, out)


# progressions


def _ints(sc: Scanner) -> List[int]:
    out = [sc.integer()]
    while sc.peek() == ",":
        sc.i += 1
        out.append(sc.integer())
    return out


def _field(sc: Scanner, key: str):
    pos = sc.pos
    got = sc.name()
    if got != key:
        raise ConfigError(f"expected field {key!r}, got {got!r}", pos)
    sc.expect("=")


def _vector_list(sc: Scanner, G: Group) -> List:
    if sc.peek() == "(":
        return _elements(sc, G, ";")
    pos = sc.pos
    return [_make_element(G, [x], pos) for x in _ints(sc)]


def parse_progression(text: str) -> CosetProgression:
    sc = Scanner(text)
    pos = sc.pos
    kind = sc.name()
    if kind not in ("gap", "coset"):
        raise ConfigError(f"expected gap(...) or coset(...), got {kind!r}", pos)
    sc.expect("(")
    G = _group(sc)
    sc.expect(";")
    H = None
    if kind == "coset":
        _field(sc, "h")
        H = _vector_list(sc, G)
        sc.expect(";")
    _field(sc, "v")
    v = _vector_list(sc, G)
    sc.expect(";")
    _field(sc, "n")
    npos = sc.pos
    N = _ints(sc)
    sc.expect(")")
    sc.end()
    if len(N) != len(v):
        raise ConfigError(f"{len(v)} generator(s) but {len(N)} dimension(s)", npos)
    P = GAP(G, tuple(v), tuple(N))
    if H is None:
        return CosetProgression.of(P)
    return CosetProgression.of(P, closure(G, H))


# nilprogressions


def _cnp(sc: Scanner):
    from .nilprog import EXAMPLES, build_example
    pos = sc.pos
    if sc.name() != "cnp":
        raise ConfigError("expected cnp(...)", pos)
    sc.expect("(")
    npos = sc.pos
    name = sc.name()
    if name not in EXAMPLES:
        raise ConfigError(f"unknown nilprogression {name!r}", npos)
    params = {}
    if sc.accept(";"):
        while True:
            kpos = sc.pos
            key = sc.name()
            sc.expect("=")
            if key in params:
                raise ConfigError(f"parameter {key!r} given twice", kpos)
            params[key] = sc.integer()
            if not sc.accept(","):
                break
    sc.expect(")")
    try:
        return build_example(name, **params)
    except ConfigError as e:
        raise ConfigError(str(e), npos) from None


def parse_cnp(text: str):
    sc = Scanner(text)
    C = _cnp(sc)
    sc.end()
    return C
