"""Signatures, set-coded formula ASTs, finite structures and brute-force oracles.

Formulas are hash-consed: constructing a node that is structurally equal to a
live node returns that same object.  Because conjunction children are stored
as a frozenset of interned nodes, structural equality under set semantics is
object identity, which keeps the heavily shared Scott formulas cheap.
"""

from __future__ import annotations

import itertools
import re
import weakref
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence


class LogicError(ValueError):
    """Raised for malformed signatures, structures, formulas or assignments."""


class FormulaSyntaxError(LogicError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


# ---------------------------------------------------------------------------
# signatures and structures


_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_VAR_NAME_RE = re.compile(r"x[0-9]+\Z")
KEYWORDS = frozenset({"Not", "And", "Exists", "Or", "Forall"})


def check_symbol_name(name: str) -> None:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise LogicError(f"invalid symbol name {name!r}")
    if name in KEYWORDS or _VAR_NAME_RE.match(name):
        raise LogicError(f"symbol name {name!r} clashes with the formula syntax")


@dataclass(frozen=True)
class Signature:
    """A purely relational vocabulary: symbol name to arity."""

    relations: tuple[tuple[str, int], ...]

    def __init__(self, relations: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = list(relations.items()) if isinstance(relations, Mapping) else list(relations)
        seen: dict[str, int] = {}
        for name, arity in items:
            check_symbol_name(name)
            if name in seen:
                raise LogicError(f"duplicate symbol {name!r}")
            if not isinstance(arity, int) or isinstance(arity, bool) or arity < 0:
                raise LogicError(f"invalid arity {arity!r} for {name!r}")
            seen[name] = arity
        object.__setattr__(self, "relations", tuple(sorted(seen.items())))

    def arity(self, name: str) -> int:
        for sym, ar in self.relations:
            if sym == name:
                return ar
        raise LogicError(f"unknown symbol {name!r}")

    def __contains__(self, name: object) -> bool:
        return any(sym == name for sym, _ in self.relations)

    def as_dict(self) -> dict[str, int]:
        return dict(self.relations)

    def names(self) -> list[str]:
        return [sym for sym, _ in self.relations]


class FiniteStructure:
    """Relational structure on the universe 0..size-1.  Immutable."""

    __slots__ = ("signature", "size", "tables", "_key")

    def __init__(self, signature: Signature, size: int, tables: Mapping[str, Iterable[Sequence[int]]]):
        if not isinstance(size, int) or isinstance(size, bool) or size < 1:
            raise LogicError(f"structure size must be a positive integer, got {size!r}")
        sig = signature.as_dict()
        extra = set(tables) - set(sig)
        if extra:
            raise LogicError(f"tables for unknown symbols: {sorted(extra)}")
        frozen = {}
        for name, arity in sig.items():
            rows = frozenset(tuple(int(v) for v in row) for row in tables.get(name, ()))
            for row in rows:
                if len(row) != arity:
                    raise LogicError(f"tuple {row} in {name} has length {len(row)}, arity is {arity}")
                if any(v < 0 or v >= size for v in row):
                    raise LogicError(f"tuple {row} in {name} is outside 0..{size - 1}")
            frozen[name] = rows
        self._set(signature, size, frozen)

    def _set(self, signature, size, frozen):
        object.__setattr__(self, "signature", signature)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "tables", frozen)
        object.__setattr__(self, "_key", None)

    @classmethod
    def trusted(cls, signature: Signature, size: int, tables: dict[str, frozenset]) -> "FiniteStructure":
        """Construct without validation; callers guarantee well-formed frozenset tables."""
        out = object.__new__(cls)
        out._set(signature, size, tables)
        return out

    def __setattr__(self, name, value):
        raise AttributeError("FiniteStructure is immutable")

    def key(self) -> tuple:
        if self._key is None:
            k = (self.signature, self.size, tuple(tuple(sorted(self.tables[n])) for n in sorted(self.tables)))
            object.__setattr__(self, "_key", k)
        return self._key

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteStructure):
            return NotImplemented
        return self is other or self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        body = ", ".join(f"{n}={sorted(self.tables[n])}" for n in sorted(self.tables))
        return f"FiniteStructure(size={self.size}, {body})"

    def __reduce__(self):
        return (FiniteStructure, (self.signature, self.size, dict(self.tables)))

    def holds(self, name: str, args: Sequence[int]) -> bool:
        return tuple(args) in self.tables[name]

    def relabel(self, perm: Sequence[int]) -> "FiniteStructure":
        """Image of the structure under the bijection i -> perm[i]."""
        return FiniteStructure.trusted(
            self.signature,
            self.size,
            {name: frozenset(tuple(perm[v] for v in row) for row in rows) for name, rows in self.tables.items()},
        )


def relationalize_function(size: int, arity: int, graph: Iterable[Sequence[int]], name: str = "F") -> frozenset:
    """Validate a function graph (args..., value) as total and functional; return it as a relation."""
    rows = {tuple(int(v) for v in row) for row in graph}
    seen: dict[tuple, int] = {}
    for row in rows:
        if len(row) != arity + 1:
            raise LogicError(f"graph row {row} of {name} should have length {arity + 1}")
        if any(v < 0 or v >= size for v in row):
            raise LogicError(f"graph row {row} of {name} is outside the universe")
        args, value = row[:-1], row[-1]
        if args in seen and seen[args] != value:
            raise LogicError(f"{name} is not functional at {args}")
        seen[args] = value
    missing = [args for args in itertools.product(range(size), repeat=arity) if args not in seen]
    if missing:
        raise LogicError(f"{name} is not total: undefined at {missing[0]}")
    return frozenset(rows)


# ---------------------------------------------------------------------------
# formulas


_INTERN_LOCK = threading.Lock()


class Formula:
    """Base class of interned formula nodes.  Equality is identity."""

    __slots__ = ("_hash", "free", "size", "height", "_digest", "__weakref__")
    _table: "weakref.WeakValueDictionary[tuple, Formula]" = weakref.WeakValueDictionary()

    kind = "?"

    @classmethod
    def _intern(cls, key: tuple, free: frozenset, size: int, height: int):
        node = Formula._table.get(key)
        if node is not None:
            return node
        with _INTERN_LOCK:
            node = Formula._table.get(key)
            if node is not None:
                return node
            node = object.__new__(cls)
            node._hash = hash(key)
            node.free = free
            node.size = size
            node.height = height
            node._digest = None
            node._init_payload(key)
            Formula._table[key] = node
        return node

    def _init_payload(self, key: tuple) -> None:  # pragma: no cover - overridden
        raise NotImplementedError

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return self is other

    def __ne__(self, other: object) -> bool:
        return self is not other

    def children(self) -> tuple["Formula", ...]:
        return ()

    def free_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.free))

    def is_sentence(self) -> bool:
        return not self.free

    def __repr__(self) -> str:
        text = to_text(self)
        if len(text) > 120:
            text = text[:117] + "..."
        return f"<{type(self).__name__} {text}>"

    def __str__(self) -> str:
        return to_text(self)


class Atom(Formula):
    __slots__ = ("symbol", "args")
    kind = "atom"

    def __new__(cls, symbol: str, args: Sequence[int]):
        args = tuple(args)
        return cls._intern(("A", symbol, args), frozenset(args), 1, 0)

    def _init_payload(self, key):
        _, self.symbol, self.args = key

    def __reduce__(self):
        return (Atom, (self.symbol, self.args))


class Equal(Formula):
    __slots__ = ("left", "right")
    kind = "eq"

    def __new__(cls, left: int, right: int):
        return cls._intern(("E", left, right), frozenset((left, right)), 1, 0)

    def _init_payload(self, key):
        _, self.left, self.right = key

    def __reduce__(self):
        return (Equal, (self.left, self.right))


class Not(Formula):
    __slots__ = ("child",)
    kind = "not"

    def __new__(cls, child: Formula):
        return cls._intern(("N", child), child.free, child.size + 1, child.height + 1)

    def _init_payload(self, key):
        self.child = key[1]

    def children(self):
        return (self.child,)

    def __reduce__(self):
        return (Not, (self.child,))


class Conj(Formula):
    __slots__ = ("items",)
    kind = "and"

    def __new__(cls, items: Iterable[Formula] = ()):
        items = frozenset(items)
        key = ("C", items)
        node = Formula._table.get(key)
        if node is not None:
            return node
        free = frozenset().union(*(c.free for c in items)) if items else frozenset()
        size = 1 + sum(c.size for c in items)
        height = 1 + max((c.height for c in items), default=-1)
        return cls._intern(key, free, size, height)

    def _init_payload(self, key):
        self.items = key[1]

    def children(self):
        return tuple(self.items)

    def __reduce__(self):
        return (Conj, (tuple(self.items),))


class Exists(Formula):
    __slots__ = ("var", "child")
    kind = "exists"

    def __new__(cls, var: int, child: Formula):
        return cls._intern(("X", var, child), child.free - {var}, child.size + 1, child.height + 1)

    def _init_payload(self, key):
        _, self.var, self.child = key

    def children(self):
        return (self.child,)

    def __reduce__(self):
        return (Exists, (self.var, self.child))


TRUE = Conj()
FALSE = Not(TRUE)


def Or(items: Iterable[Formula]) -> Formula:
    """Disjunction as the abbreviation Not And{Not ...}."""
    return Not(Conj(Not(f) for f in items))


def Forall(var: int, child: Formula) -> Formula:
    return Not(Exists(var, Not(child)))


def forall_many(variables: Iterable[int], child: Formula) -> Formula:
    out = child
    for v in sorted(variables, reverse=True):
        out = Forall(v, out)
    return out


def exists_many(variables: Iterable[int], child: Formula) -> Formula:
    out = child
    for v in sorted(variables, reverse=True):
        out = Exists(v, out)
    return out


def Implies(a: Formula, b: Formula) -> Formula:
    return Not(Conj((a, Not(b))))


def Iff(a: Formula, b: Formula) -> Formula:
    return Conj((Implies(a, b), Implies(b, a)))


def closure(phi: Formula) -> list[Formula]:
    """Distinct subformulas of phi (including phi), children before parents."""
    seen: set[int] = set()
    out: list[Formula] = []
    stack: list[tuple[Formula, bool]] = [(phi, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for ch in node.children():
            if id(ch) not in seen:
                stack.append((ch, False))
    return out


def symbols_of(phi: Formula) -> dict[str, int]:
    out: dict[str, int] = {}
    for node in closure(phi):
        if isinstance(node, Atom):
            prev = out.setdefault(node.symbol, len(node.args))
            if prev != len(node.args):
                raise LogicError(f"symbol {node.symbol} used with arities {prev} and {len(node.args)}")
    return out


def check_signature(phi: Formula, sig: Signature) -> None:
    table = sig.as_dict()
    for name, arity in symbols_of(phi).items():
        if name not in table:
            raise LogicError(f"unknown symbol {name!r}")
        if table[name] != arity:
            raise LogicError(f"arity mismatch for {name}: expected {table[name]}, got {arity}")


# ---------------------------------------------------------------------------
# canonical ordering and digests


def canonical_ranks(phi: Formula) -> dict[Formula, int]:
    """Number the distinct subformulas of phi canonically.

    Nodes are grouped by height; within a height they are sorted by a key
    built from their kind, payload and the ranks of their children.  The
    numbering depends only on the set-coded AST, so two equal formulas get
    identical numberings and the order respects the subformula relation.
    """
    by_height: dict[int, list[Formula]] = {}
    for node in closure(phi):
        by_height.setdefault(node.height, []).append(node)
    ranks: dict[Formula, int] = {}
    for h in sorted(by_height):
        keyed = sorted((_local_key(node, ranks), node) for node in by_height[h])
        for key, node in keyed:
            ranks[node] = len(ranks)
    return ranks


def _local_key(node: Formula, ranks: Mapping[Formula, int]) -> tuple:
    if isinstance(node, Atom):
        return (0, node.symbol, node.args)
    if isinstance(node, Equal):
        return (1, "", (node.left, node.right))
    if isinstance(node, Not):
        return (2, "", (ranks[node.child],))
    if isinstance(node, Exists):
        return (3, "", (node.var, ranks[node.child]))
    return (4, "", tuple(sorted(ranks[c] for c in node.items)))


def canonical_digest(phi: Formula) -> str:
    """Exact canonical serialization of phi as a numbered DAG.

    Equal digests iff the formulas are equal under set semantics; no hashing
    is involved, so there is no collision risk.
    """
    if phi._digest is not None:
        return phi._digest
    ranks = canonical_ranks(phi)
    lines = []
    for node, r in sorted(ranks.items(), key=lambda kv: kv[1]):
        if isinstance(node, Atom):
            lines.append(f"{r}:A:{node.symbol}:{','.join(map(str, node.args))}")
        elif isinstance(node, Equal):
            lines.append(f"{r}:E:{node.left},{node.right}")
        elif isinstance(node, Not):
            lines.append(f"{r}:N:{ranks[node.child]}")
        elif isinstance(node, Exists):
            lines.append(f"{r}:X:{node.var}:{ranks[node.child]}")
        else:
            lines.append(f"{r}:C:{','.join(map(str, sorted(ranks[c] for c in node.items)))}")
    phi._digest = ";".join(lines)
    return phi._digest


def short_fingerprint(phi: Formula) -> str:
    """A short display fingerprint of the exact digest (sha256 prefix; not used for equality)."""
    import hashlib

    return hashlib.sha256(canonical_digest(phi).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# printing and parsing


def to_text(phi: Formula, sugar: bool = False) -> str:
    """Render phi in the concrete grammar; conjunction children are sorted by their text."""
    memo: dict[Formula, str] = {}
    for node in closure(phi):
        memo[node] = _render(node, memo, sugar)
    return memo[phi]


def _render(node: Formula, memo: Mapping[Formula, str], sugar: bool) -> str:
    if isinstance(node, Atom):
        return f"{node.symbol}({','.join(f'x{v}' for v in node.args)})"
    if isinstance(node, Equal):
        return f"x{node.left} = x{node.right}"
    if isinstance(node, Exists):
        return f"Exists x{node.var} . {memo[node.child]}"
    if isinstance(node, Conj):
        return "And{" + ", ".join(sorted(memo[c] for c in node.items)) + "}"
    child = node.child
    if sugar:
        if isinstance(child, Exists) and isinstance(child.child, Not):
            return f"Forall x{child.var} . {memo[child.child.child]}"
        if isinstance(child, Conj) and child.items and all(isinstance(c, Not) for c in child.items):
            return "Or{" + ", ".join(sorted(memo[c.child] for c in child.items)) + "}"
    return f"Not {memo[child]}"


_TOKEN_RE = re.compile(r"\s*(?:(?P<var>x[0-9]+\b)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(){},.=]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, sig: Signature | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.sig = sig.as_dict() if sig is not None else None

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str | None = None, value: str | None = None):
        tok = self.tokens[self.i]
        if (kind is not None and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] if tok[0] != "eof" else "end of input"
            raise FormulaSyntaxError(f"expected {want!r}, found {got!r}", tok[2])
        self.i += 1
        return tok

    def var(self) -> int:
        return int(self.take("var")[1][1:])

    def formula(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "var":
            left = self.var()
            self.take("punct", "=")
            return Equal(left, self.var())
        if kind == "punct" and value == "(":
            self.take()
            inner = self.formula()
            self.take("punct", ")")
            return inner
        if kind != "name":
            raise FormulaSyntaxError(f"expected a formula, found {value or 'end of input'!r}", pos)
        self.take()
        if value == "Not":
            return Not(self.formula())
        if value in ("And", "Or"):
            self.take("punct", "{")
            items = []
            if not (self.peek()[0] == "punct" and self.peek()[1] == "}"):
                items.append(self.formula())
                while self.peek()[0] == "punct" and self.peek()[1] == ",":
                    self.take()
                    items.append(self.formula())
            self.take("punct", "}")
            return Conj(items) if value == "And" else Or(items)
        if value in ("Exists", "Forall"):
            v = self.var()
            self.take("punct", ".")
            body = self.formula()
            return Exists(v, body) if value == "Exists" else Forall(v, body)
        args = []
        bare = not (self.peek()[0] == "punct" and self.peek()[1] == "(")
        if not bare:
            self.take("punct", "(")
            if not (self.peek()[0] == "punct" and self.peek()[1] == ")"):
                args.append(self.var())
                while self.peek()[0] == "punct" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.var())
            self.take("punct", ")")
        if self.sig is not None:
            if value not in self.sig:
                raise FormulaSyntaxError(f"unknown symbol {value!r}", pos)
            if self.sig[value] != len(args):
                raise FormulaSyntaxError(
                    f"arity mismatch for {value}: expected {self.sig[value]}, got {len(args)}", pos
                )
        elif bare:
            raise FormulaSyntaxError(f"expected '(' after {value!r}", self.peek()[2])
        return Atom(value, tuple(args))


def parse_formula(text: str, sig: Signature | None = None) -> Formula:
    """Parse the concrete grammar.  With a signature, symbols and arities are checked."""
    p = _Parser(text, sig)
    phi = p.formula()
    p.take("eof")
    return phi


# ---------------------------------------------------------------------------
# evaluation


class Evaluator:
    """Memoized evaluation of formulas in one structure.

    The memo key is (node, values of the node's free variables), so shared
    subformulas in large DAGs are evaluated once per relevant assignment.
    """

    def __init__(self, structure: FiniteStructure):
        self.M = structure
        self.memo: dict[tuple, bool] = {}
        self._sig = structure.signature.as_dict()

    def holds(self, phi: Formula, asg: Mapping[int, int] | Sequence[int] = ()) -> bool:
        env = dict(asg) if isinstance(asg, Mapping) else dict(enumerate(asg))
        missing = phi.free - env.keys()
        if missing:
            raise LogicError(f"unbound free variables: {', '.join(f'x{v}' for v in sorted(missing))}")
        check_signature(phi, self.M.signature)
        for v in env.values():
            if not (0 <= v < self.M.size):
                raise LogicError(f"assignment value {v} outside the universe")
        return self._eval(phi, env)

    def _eval(self, node: Formula, env: dict[int, int]) -> bool:
        if isinstance(node, Atom):
            return tuple(env[v] for v in node.args) in self.M.tables[node.symbol]
        if isinstance(node, Equal):
            return env[node.left] == env[node.right]
        key = (node, tuple(env[v] for v in sorted(node.free)))
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Not):
            val = not self._eval(node.child, env)
        elif isinstance(node, Conj):
            val = all(self._eval(c, env) for c in sorted(node.items, key=lambda c: c.size))
        else:
            var = node.var
            saved = env.get(var)
            val = False
            for a in range(self.M.size):
                env[var] = a
                if self._eval(node.child, env):
                    val = True
                    break
            if saved is None:
                env.pop(var, None)
            else:
                env[var] = saved
        self.memo[key] = val
        return val


def evaluate(M: FiniteStructure, phi: Formula, asg: Mapping[int, int] | Sequence[int] = ()) -> bool:
    return Evaluator(M).holds(phi, asg)


def extension(M: FiniteStructure, phi: Formula, variables: Sequence[int]) -> frozenset[tuple[int, ...]]:
    """Set of assignments (in the order of `variables`) satisfying phi."""
    ev = Evaluator(M)
    check_signature(phi, M.signature)
    if not phi.free <= set(variables):
        raise LogicError("extension variables must cover the free variables")
    out = []
    for vals in itertools.product(range(M.size), repeat=len(variables)):
        if ev._eval(phi, dict(zip(variables, vals))):
            out.append(vals)
    return frozenset(out)


# ---------------------------------------------------------------------------
# brute-force oracles


def _same_signature(M: FiniteStructure, N: FiniteStructure) -> None:
    if M.signature != N.signature:
        raise LogicError("structures have different signatures")


def is_isomorphism(M: FiniteStructure, N: FiniteStructure, perm: Sequence[int]) -> bool:
    if M.size != N.size or sorted(perm) != list(range(M.size)):
        return False
    for name, rows in M.tables.items():
        other = N.tables[name]
        if len(rows) != len(other):
            return False
        for row in rows:
            if tuple(perm[v] for v in row) not in other:
                return False
    return True


def isomorphic_bruteforce(M: FiniteStructure, N: FiniteStructure) -> tuple[int, ...] | None:
    """First isomorphism M -> N in lexicographic permutation order, or None."""
    _same_signature(M, N)
    if M.size != N.size:
        return None
    if any(len(M.tables[s]) != len(N.tables[s]) for s in M.tables):
        return None
    for perm in itertools.permutations(range(M.size)):
        if is_isomorphism(M, N, perm):
            return perm
    return None


def automorphisms(M: FiniteStructure) -> list[tuple[int, ...]]:
    return [p for p in itertools.permutations(range(M.size)) if is_isomorphism(M, M, p)]


def automorphism_orbits(M: FiniteStructure, tuple_len: int) -> list[list[tuple[int, ...]]]:
    """Orbits of Aut(M) on M^tuple_len, each sorted, ordered by least tuple."""
    if tuple_len < 0:
        raise LogicError("tuple length must be non-negative")
    group = automorphisms(M)
    seen: set[tuple[int, ...]] = set()
    orbits = []
    for t in itertools.product(range(M.size), repeat=tuple_len):
        if t in seen:
            continue
        orbit = sorted({tuple(g[v] for v in t) for g in group})
        seen.update(orbit)
        orbits.append(orbit)
    return orbits


def canonical_form_bruteforce(M: FiniteStructure) -> tuple:
    """Lexicographically least relabelled table encoding; equal iff isomorphic."""
    best = None
    names = sorted(M.tables)
    for perm in itertools.permutations(range(M.size)):
        enc = tuple(tuple(sorted(tuple(perm[v] for v in row) for row in M.tables[n])) for n in names)
        if best is None or enc < best:
            best = enc
    return (M.signature, M.size, best)


@dataclass(frozen=True)
class PartialMap:
    """Injective partial function between universes 0..n-1 and 0..m-1."""

    pairs: tuple[tuple[int, int], ...]
    n: int
    m: int

    def __post_init__(self):
        dom = [a for a, _ in self.pairs]
        rng = [b for _, b in self.pairs]
        if len(set(dom)) != len(dom) or len(set(rng)) != len(rng):
            raise LogicError("partial map is not an injective function")
        if any(not (0 <= a < self.n) for a in dom) or any(not (0 <= b < self.m) for b in rng):
            raise LogicError("partial map out of bounds")

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)

    def extend(self, a: int, b: int) -> "PartialMap":
        return PartialMap(tuple(sorted(self.pairs + ((a, b),))), self.n, self.m)


def all_structures(sig: Signature, n: int) -> Iterator[FiniteStructure]:
    """Every structure over sig on n points, in a fixed order."""
    slots = [(name, row) for name, arity in sig.relations for row in itertools.product(range(n), repeat=arity)]
    for bits in itertools.product((0, 1), repeat=len(slots)):
        tables: dict[str, set] = {name: set() for name, _ in sig.relations}
        for bit, (name, row) in zip(bits, slots):
            if bit:
                tables[name].add(row)
        yield FiniteStructure(sig, n, tables)
