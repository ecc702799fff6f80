"""Additively edge-colored finite linear orders and the color-refinement calculus.

Points are 0 < 1 < ... < n-1.  Every point carries a vertex color and every
increasing pair an edge color.  All verdicts are fragment-level: they are
computed on the supplied finite order only.

Refinement.  For a pair a < b and an equivalence ~ on edge colors, the
profile of (a, b) is the set of triples (position of c relative to a and b,
class of Q(a, c), class of Q(c, b)) over the other points c, where Q of an
unordered pair is the color of its increasing version.  Two colors are
related at the next stage when they are related now and profiles match:

* mode "some-pair" (default): some pair of each color has the same profile;
  the relation is then closed transitively inside the current classes, so
  distinct classes never share a profile.
* mode "all-pairs": every pair of either color has one common profile;
  every color stays related to itself.

If the base relation is additive for the additivity table, each stage is
closed under the congruence generated by the table (j1 ~ j1', j2 ~ j2'
forces f(j1, j2) ~ f(j1', j2')), staying inside the previous stage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .logic import (
    Atom,
    Conj,
    Equal,
    Evaluator,
    Exists,
    FiniteStructure,
    Formula,
    Forall,
    LogicError,
    Or,
    Signature,
    check_signature,
    symbols_of,
)
from .scott import rename_variables


class OrderError(LogicError):
    pass


class OrderValidationError(OrderError):
    def __init__(self, report: "ValidationReport"):
        super().__init__(f"colored order fails validation ({len(report.violations)} violation(s))")
        self.report = report


def _pair_key(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise OrderError(f"edge key {text!r} is not of the form 'a,b'")
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise OrderError(f"edge key {text!r} is not of the form 'a,b'") from None
    return a, b


def _as_int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise OrderError(f"{what} must be an integer, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# data


class AdditivityTable:
    """Partial map (edge color, edge color) -> edge color."""

    def __init__(self, entries: Mapping[tuple[int, int], int] | Iterable[Sequence[int]] = ()):
        table: dict[tuple[int, int], int] = {}
        items = entries.items() if isinstance(entries, Mapping) else ((tuple(e[:2]), e[2]) for e in entries)
        for (j1, j2), j3 in items:
            key = (_as_int(j1, "color"), _as_int(j2, "color"))
            if key in table and table[key] != j3:
                raise OrderError(f"additivity table gives two values at {key}")
            table[key] = _as_int(j3, "color")
        self._t = table

    def get(self, j1: int, j2: int) -> int | None:
        return self._t.get((j1, j2))

    def items(self):
        return sorted(self._t.items())

    def __len__(self) -> int:
        return len(self._t)

    def __eq__(self, other) -> bool:
        return isinstance(other, AdditivityTable) and self._t == other._t

    def __hash__(self) -> int:
        return hash(frozenset(self._t.items()))

    def to_json(self) -> list[list[int]]:
        return [[j1, j2, j3] for (j1, j2), j3 in self.items()]

    @classmethod
    def realized(cls, O: "ColoredOrder") -> tuple["AdditivityTable", list[dict]]:
        """The table read off O's triples, plus conflicting triples."""
        t: dict[tuple[int, int], int] = {}
        witness: dict[tuple[int, int], tuple[int, int, int]] = {}
        conflicts = []
        for x, y, z in itertools.combinations(range(O.n), 3):
            key = (O.q(x, y), O.q(y, z))
            val = O.q(x, z)
            if key not in t:
                t[key] = val
                witness[key] = (x, y, z)
            elif t[key] != val:
                conflicts.append({"pair": list(key), "values": [t[key], val], "triples": [list(witness[key]), [x, y, z]]})
        return cls(t), conflicts


class ColoredOrder:
    """Finite linear order 0 < ... < n-1 with vertex colors and (optionally) edge colors."""

    __slots__ = ("n", "vertex_colors", "edge_colors", "additivity", "_by_color")

    def __init__(
        self,
        vertex_colors: Sequence[int],
        edge_colors: Mapping[tuple[int, int], int] | None = None,
        additivity: AdditivityTable | None = None,
    ):
        self.n = len(vertex_colors)
        self.vertex_colors = tuple(_as_int(c, "vertex color") for c in vertex_colors)
        if any(c < 0 for c in self.vertex_colors):
            raise OrderError("vertex colors must be natural numbers")
        if edge_colors is not None:
            ec = {}
            for (a, b), j in edge_colors.items():
                a, b = _as_int(a, "point"), _as_int(b, "point")
                if not (0 <= a < b < self.n):
                    raise OrderError(f"edge ({a},{b}) is not an increasing pair of points")
                ec[(a, b)] = _as_int(j, "edge color")
            missing = [p for p in itertools.combinations(range(self.n), 2) if p not in ec]
            if missing:
                raise OrderError(f"edge colors must cover every increasing pair; missing {missing[0]}")
            edge_colors = ec
        self.edge_colors = edge_colors
        self.additivity = additivity
        self._by_color: dict[int, list[tuple[int, int]]] | None = None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ColoredOrder)
            and self.vertex_colors == other.vertex_colors
            and self.edge_colors == other.edge_colors
            and self.additivity == other.additivity
        )

    def __hash__(self) -> int:
        return hash((self.vertex_colors, None if self.edge_colors is None else frozenset(self.edge_colors.items())))

    def __repr__(self) -> str:
        return f"ColoredOrder(n={self.n}, vertex_colors={list(self.vertex_colors)})"

    @property
    def has_edges(self) -> bool:
        return self.edge_colors is not None

    def _need_edges(self) -> dict[tuple[int, int], int]:
        if self.edge_colors is None:
            raise OrderError("this order carries no edge colors")
        return self.edge_colors

    def q(self, a: int, b: int) -> int:
        """Edge color of the unordered pair {a, b}."""
        ec = self._need_edges()
        return ec[(a, b)] if a < b else ec[(b, a)]

    def colors(self) -> list[int]:
        return sorted(set(self._need_edges().values()))

    def vertex_color_set(self) -> list[int]:
        return sorted(set(self.vertex_colors))

    def pairs_of(self, j: int) -> list[tuple[int, int]]:
        if self._by_color is None:
            by: dict[int, list[tuple[int, int]]] = {}
            for p, c in sorted(self._need_edges().items()):
                by.setdefault(c, []).append(p)
            self._by_color = by
        return self._by_color.get(j, [])

    def reduct(self) -> "ColoredOrder":
        """The order with vertex colors only."""
        return ColoredOrder(self.vertex_colors)

    def table(self) -> AdditivityTable:
        """The stored additivity table, or the one read off the triples."""
        if self.additivity is not None:
            return self.additivity
        t, _ = AdditivityTable.realized(self)
        return t

    def signature(self, with_edges: bool = False) -> Signature:
        rel = {"Lt": 2}
        rel.update({f"P{i}": 1 for i in self.vertex_color_set()})
        if with_edges:
            rel.update({f"Q{j}": 2 for j in self.colors()})
        return Signature(rel)

    def to_structure(self, with_edges: bool = False) -> FiniteStructure:
        tables: dict[str, list] = {"Lt": [(a, b) for a, b in itertools.combinations(range(self.n), 2)]}
        for i in self.vertex_color_set():
            tables[f"P{i}"] = [(a,) for a in range(self.n) if self.vertex_colors[a] == i]
        if with_edges:
            for j in self.colors():
                tables[f"Q{j}"] = list(self.pairs_of(j))
        return FiniteStructure(self.signature(with_edges), self.n, tables)

    def to_json(self) -> dict:
        out: dict = {"n": self.n, "vertex_colors": list(self.vertex_colors)}
        if self.edge_colors is not None:
            out["edge_colors"] = {f"{a},{b}": j for (a, b), j in sorted(self.edge_colors.items())}
        if self.additivity is not None:
            out["additivity"] = self.additivity.to_json()
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "ColoredOrder":
        if not isinstance(data, Mapping):
            raise OrderError("a colored order must be a JSON object")
        if "vertex_colors" not in data:
            raise OrderError("missing field 'vertex_colors'")
        vc = data["vertex_colors"]
        if not isinstance(vc, list):
            raise OrderError("'vertex_colors' must be a list")
        n = _as_int(data.get("n", len(vc)), "n")
        if n != len(vc):
            raise OrderError(f"n = {n} but {len(vc)} vertex colors were given")
        edges = None
        if data.get("edge_colors") is not None:
            raw = data["edge_colors"]
            if not isinstance(raw, Mapping):
                raise OrderError("'edge_colors' must be an object keyed by 'a,b'")
            edges = {_pair_key(k): v for k, v in raw.items()}
        add = None
        if data.get("additivity") is not None:
            rows = data["additivity"]
            if not isinstance(rows, list) or any(not isinstance(r, list) or len(r) != 3 for r in rows):
                raise OrderError("'additivity' must be a list of [j1, j2, j3] triples")
            add = AdditivityTable(rows)
        return cls(vc, edges, add)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    ok: bool
    violations: list[dict]
    checked: dict

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, "checked": self.checked, "level": "fragment"}


def endpoint_pairs(O: ColoredOrder) -> dict[int, set[tuple[int, int]]]:
    out: dict[int, set[tuple[int, int]]] = {}
    for (a, b), j in O._need_edges().items():
        out.setdefault(j, set()).add((O.vertex_colors[a], O.vertex_colors[b]))
    return out


def validate_kmu(O: ColoredOrder, f: AdditivityTable | None = None, chain_len: int = 3) -> ValidationReport:
    """Partition, endpoint-uniformity, additivity and chain-type checks on a fragment.

    Without a table, additivity means that the triples of O define one (no
    conflicting compositions).  The chain check compares increasing tuples
    of up to chain_len + 1 points that realize the same consecutive color
    chain: they must have the same vertex colors and the same colors on all
    pairs, i.e. the map between them is a partial isomorphism.
    """
    violations: list[dict] = []
    if O.edge_colors is None:
        violations.append({"kind": "partition", "detail": "no edge colors"})
        return ValidationReport(False, violations, {})
    for j, ends in sorted(endpoint_pairs(O).items()):
        if len(ends) > 1:
            violations.append({"kind": "endpoint", "color": j, "endpoint_pairs": sorted([list(e) for e in ends])})
    table = f if f is not None else O.additivity
    triples = 0
    if table is None:
        _, conflicts = AdditivityTable.realized(O)
        for c in conflicts:
            violations.append({"kind": "additivity", **c})
        triples = len(list(itertools.combinations(range(O.n), 3)))
    else:
        for x, y, z in itertools.combinations(range(O.n), 3):
            triples += 1
            j1, j2, j3 = O.q(x, y), O.q(y, z), O.q(x, z)
            got = table.get(j1, j2)
            if got != j3:
                violations.append(
                    {"kind": "additivity", "triple": [x, y, z], "pair": [j1, j2], "expected": got, "actual": j3}
                )
    chains = 0
    for length in range(2, chain_len + 2):
        seen: dict[tuple, tuple] = {}
        for t in itertools.combinations(range(O.n), length):
            chains += 1
            pattern = tuple(O.q(t[i], t[i + 1]) for i in range(length - 1))
            full = (
                tuple(O.vertex_colors[a] for a in t),
                tuple(O.q(t[i], t[k]) for i, k in itertools.combinations(range(length), 2)),
            )
            if pattern in seen and seen[pattern][0] != full:
                violations.append(
                    {"kind": "chain-type", "pattern": list(pattern), "tuples": [list(seen[pattern][1]), list(t)]}
                )
            seen.setdefault(pattern, (full, t))
    checked = {"points": O.n, "colors": len(O.colors()), "triples": triples, "chains": chains}
    return ValidationReport(not violations, violations, checked)


# ---------------------------------------------------------------------------
# color equivalences


def _classes_from_labels(labels: Mapping[int, object]) -> tuple[tuple[int, ...], ...]:
    groups: dict[object, list[int]] = {}
    for j in sorted(labels):
        groups.setdefault(labels[j], []).append(j)
    return tuple(sorted(tuple(g) for g in groups.values()))


@dataclass(frozen=True)
class ColorEquivalence:
    classes: tuple[tuple[int, ...], ...]
    stage: int = 0
    base: str = "custom"
    s: tuple[int, ...] | None = None
    _index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        classes = tuple(sorted(tuple(sorted(c)) for c in self.classes))
        object.__setattr__(self, "classes", classes)
        index = {}
        for k, c in enumerate(classes):
            for j in c:
                if j in index:
                    raise OrderError(f"color {j} lies in two classes")
                index[j] = k
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_labels(cls, labels: Mapping[int, object], **kw) -> "ColorEquivalence":
        return cls(_classes_from_labels(labels), **kw)

    def colors(self) -> list[int]:
        return sorted(self._index)

    def class_of(self, j: int) -> int:
        try:
            return self._index[j]
        except KeyError:
            raise OrderError(f"color {j} is not covered by the equivalence") from None

    def same(self, j1: int, j2: int) -> bool:
        return self.class_of(j1) == self.class_of(j2)

    def refines(self, other: "ColorEquivalence") -> bool:
        return all(len({other.class_of(j) for j in c}) == 1 for c in self.classes)

    def same_partition(self, other: "ColorEquivalence") -> bool:
        return self.classes == other.classes

    def is_discrete(self) -> bool:
        return all(len(c) == 1 for c in self.classes)

    def with_stage(self, stage: int) -> "ColorEquivalence":
        return ColorEquivalence(self.classes, stage, self.base, self.s)

    def is_additive(self, table: AdditivityTable, realized: Iterable[tuple[int, int]] | None = None) -> bool:
        return not additivity_failures(self, table, realized)

    def to_json(self) -> dict:
        out = {"base": self.base, "stage": self.stage, "classes": [list(c) for c in self.classes]}
        if self.s is not None:
            out["s"] = list(self.s)
        return out


def realized_compositions(O: ColoredOrder) -> set[tuple[int, int]]:
    return {(O.q(x, y), O.q(y, z)) for x, y, z in itertools.combinations(range(O.n), 3)}


def additivity_failures(E: ColorEquivalence, table: AdditivityTable, realized: Iterable[tuple[int, int]] | None = None) -> list:
    """Pairs of realized compositions whose arguments are related but results are not."""
    pairs = sorted(realized) if realized is not None else [k for k, _ in table.items()]
    seen: dict[tuple[int, int], tuple[tuple[int, int], int]] = {}
    bad = []
    for j1, j2 in pairs:
        j3 = table.get(j1, j2)
        if j3 is None or j3 not in E._index or j1 not in E._index or j2 not in E._index:
            continue
        key = (E.class_of(j1), E.class_of(j2))
        if key in seen:
            other, k3 = seen[key]
            if not E.same(k3, j3):
                bad.append((other, (j1, j2)))
        else:
            seen[key] = ((j1, j2), j3)
    return bad


def endpoint_equivalence(O: ColoredOrder, s: Iterable[int] | None = None, base: str | None = None) -> ColorEquivalence:
    """E0 (s None or empty), E1 (s covers every vertex color) or E_s.

    E_s relates two edge colors when their endpoint vertex colors agree after
    collapsing the vertex colors in s to one.
    """
    ends = endpoint_pairs(O)
    bad = [j for j, e in ends.items() if len(e) > 1]
    if bad:
        raise OrderError(f"endpoint uniformity fails for edge color(s) {sorted(bad)}")
    ends1 = {j: next(iter(e)) for j, e in ends.items()}
    if base == "E1":
        return ColorEquivalence((tuple(sorted(ends1)),) if ends1 else (), 0, "E1")
    s_set = frozenset(s) if s is not None else frozenset()
    if base == "E0" or not s_set:
        return ColorEquivalence.from_labels(ends1, stage=0, base="E0")
    if set(O.vertex_color_set()) <= s_set:
        return ColorEquivalence((tuple(sorted(ends1)),) if ends1 else (), 0, "E1", tuple(sorted(s_set)))

    def collapse(i: int):
        return "s" if i in s_set else i

    labels = {j: (collapse(a), collapse(b)) for j, (a, b) in ends1.items()}
    return ColorEquivalence.from_labels(labels, stage=0, base="E_s", s=tuple(sorted(s_set)))


def base_equivalence(O: ColoredOrder, base: str, s: Iterable[int] | None = None) -> ColorEquivalence:
    base = base.lower()
    if base == "e0":
        return endpoint_equivalence(O, base="E0")
    if base == "e1":
        return endpoint_equivalence(O, base="E1")
    if base == "es":
        if s is None:
            raise OrderError("base E_s needs a set s of vertex colors")
        return endpoint_equivalence(O, s)
    raise OrderError(f"unknown base {base!r} (expected e0, e1 or es)")


def is_edge_preserving(O: ColoredOrder, E: ColorEquivalence) -> bool:
    """Related colors have identical endpoint vertex colors (vertex color stands in for the 1-type)."""
    ends = endpoint_pairs(O)
    for c in E.classes:
        seen = set()
        for j in c:
            seen |= ends.get(j, set())
        if len(seen) > 1:
            return False
    return True


# ---------------------------------------------------------------------------
# refinement


_POSITIONS = ("before", "inside", "after")


def _position(a: int, b: int, c: int) -> str:
    return "before" if c < a else ("inside" if c < b else "after")


def pair_profile(O: ColoredOrder, E: ColorEquivalence, a: int, b: int, interval: bool = False, strict: bool = False) -> frozenset:
    out = set()
    others = range(a + 1, b) if interval else (c for c in range(O.n) if c != a and c != b)
    for c in others:
        row = (_position(a, b, c), E.class_of(O.q(a, c)), E.class_of(O.q(c, b)))
        if strict:
            row = row + (O.vertex_colors[c],)
        out.add(row)
    return frozenset(out)


class _UnionFind:
    def __init__(self, items: Iterable[int]):
        self.parent = {x: x for x in items}

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


@dataclass(frozen=True)
class RefineSettings:
    mode: str = "some-pair"
    interval: bool = False
    strict: bool = False
    congruence: bool = True

    def to_json(self) -> dict:
        return {"mode": self.mode, "interval": self.interval, "strict": self.strict, "congruence": self.congruence}


def resolve_settings(
    O: ColoredOrder,
    E: ColorEquivalence,
    mode: str = "some-pair",
    interval: bool | None = None,
    strict: bool = False,
    table: AdditivityTable | None = None,
) -> RefineSettings:
    """Interval restriction defaults to on exactly when E is additive and edge preserving."""
    if mode not in ("some-pair", "all-pairs"):
        raise OrderError(f"unknown refinement mode {mode!r}")
    table = table if table is not None else O.table()
    additive = E.is_additive(table, realized_compositions(O))
    if interval is None:
        interval = additive and is_edge_preserving(O, E)
    return RefineSettings(mode, bool(interval), strict, additive)


def _step(O: ColoredOrder, E: ColorEquivalence, st: RefineSettings, table: AdditivityTable, realized) -> tuple[ColorEquivalence, dict[int, frozenset]]:
    colors = E.colors()
    profs: dict[int, frozenset] = {}
    for j in colors:
        profs[j] = frozenset(pair_profile(O, E, a, b, st.interval, st.strict) for a, b in O.pairs_of(j))
    uf = _UnionFind(colors)
    if st.mode == "some-pair":
        owner: dict[tuple, int] = {}
        for j in colors:
            for p in profs[j]:
                key = (E.class_of(j), p)
                if key in owner:
                    uf.union(owner[key], j)
                else:
                    owner[key] = j
    else:
        single: dict[tuple, int] = {}
        for j in colors:
            if len(profs[j]) == 1:
                key = (E.class_of(j), next(iter(profs[j])))
                if key in single:
                    uf.union(single[key], j)
                else:
                    single[key] = j
    if st.congruence:
        changed = True
        while changed:
            changed = False
            rep: dict[tuple[int, int], int] = {}
            for j1, j2 in sorted(realized):
                j3 = table.get(j1, j2)
                if j3 is None or j3 not in uf.parent:
                    continue
                key = (uf.find(j1), uf.find(j2))
                if key in rep:
                    other = rep[key]
                    # merging stays inside the previous stage when it is additive
                    if E.same(other, j3) and uf.union(other, j3):
                        changed = True
                else:
                    rep[key] = j3
    labels = {j: uf.find(j) for j in colors}
    nxt = ColorEquivalence.from_labels(labels, stage=E.stage + 1, base=E.base, s=E.s)
    return nxt, profs


def refine_step(
    O: ColoredOrder,
    E: ColorEquivalence,
    mode: str = "some-pair",
    interval: bool | None = None,
    strict: bool = False,
    table: AdditivityTable | None = None,
) -> ColorEquivalence:
    table = table if table is not None else O.table()
    st = resolve_settings(O, E, mode, interval, strict, table)
    nxt, _ = _step(O, E, st, table, realized_compositions(O))
    return nxt


@dataclass
class Refinement:
    """Stages 0..alpha of a refinement chain with the profiles behind each step."""

    order: ColoredOrder
    history: list[ColorEquivalence]
    profiles: list[dict[int, frozenset]]
    settings: RefineSettings

    @property
    def alpha(self) -> int:
        return len(self.history) - 1

    @property
    def final(self) -> ColorEquivalence:
        return self.history[-1]

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "base": self.history[0].base,
            "settings": self.settings.to_json(),
            "stages": [E.to_json() for E in self.history],
            "fixpoint": self.final.to_json(),
            "level": "fragment",
        }


def refine_fixpoint(
    O: ColoredOrder,
    E: ColorEquivalence,
    mode: str = "some-pair",
    interval: bool | None = None,
    strict: bool = False,
    table: AdditivityTable | None = None,
) -> Refinement:
    """Iterate refine_step until the partition is stable; alpha is the first stable stage."""
    table = table if table is not None else O.table()
    st = resolve_settings(O, E, mode, interval, strict, table)
    realized = realized_compositions(O)
    start = E.with_stage(0)
    history = [start]
    profiles: list[dict[int, frozenset]] = []
    current = start
    while True:
        nxt, profs = _step(O, current, st, table, realized)
        profiles.append(profs)
        if nxt.same_partition(current):
            break
        if not nxt.refines(current):
            raise AssertionError("refinement step left the previous partition")
        history.append(nxt)
        current = nxt
        if len(history) - 1 > len(start.colors()):
            raise AssertionError("refinement exceeded one step per color")
    return Refinement(O, history, profiles, st)


@dataclass
class Classification:
    in_kplus: bool
    in_kstar: bool
    e0: Refinement
    e1: Refinement
    validation: ValidationReport

    def to_json(self) -> dict:
        return {
            "in_Kplus": self.in_kplus,
            "in_Kstar": self.in_kstar,
            "E0": self.e0.to_json(),
            "E1": self.e1.to_json(),
            "validation": self.validation.to_json(),
            "level": "fragment",
        }


def classify(O: ColoredOrder, mode: str = "some-pair", interval: bool | None = None, strict: bool = False) -> Classification:
    """Fragment-level membership: K+ iff the E0 fixpoint is discrete, K* iff the E1 fixpoint is."""
    report = validate_kmu(O)
    if not report.ok:
        raise OrderValidationError(report)
    e0 = endpoint_equivalence(O, base="E0")
    e1 = endpoint_equivalence(O, base="E1")
    if interval is None:
        # one setting for both chains keeps the E0 chain inside the E1 chain
        interval = resolve_settings(O, e0, mode).interval and resolve_settings(O, e1, mode).interval
    r0 = refine_fixpoint(O, e0, mode, interval, strict)
    r1 = refine_fixpoint(O, e1, mode, interval, strict)
    return Classification(r0.final.is_discrete(), r1.final.is_discrete(), r0, r1, report)


# ---------------------------------------------------------------------------
# class formulas

X, Y = 0, 1


def _lt(a: int, b: int) -> Formula:
    return Atom("Lt", (a, b))


def _vertex(O: ColoredOrder, colors: Iterable[int], v: int) -> Formula:
    return Or(Atom(f"P{i}", (v,)) for i in sorted(colors))


def _base_formula(O: ColoredOrder, E: ColorEquivalence, k: int) -> Formula:
    cls = E.classes[k]
    if E.base == "E1":
        return _lt(X, Y)
    ends = endpoint_pairs(O)
    if E.base == "E0":
        (a, b), = ends[cls[0]]
        return Conj((Atom(f"P{a}", (X,)), _lt(X, Y), Atom(f"P{b}", (Y,))))
    if E.base == "E_s":
        s = set(E.s or ())
        (a, b), = ends[cls[0]]
        vset = O.vertex_color_set()
        left = [i for i in vset if i in s] if a in s else [a]
        right = [i for i in vset if i in s] if b in s else [b]
        return Conj((_vertex(O, left, X), _lt(X, Y), _vertex(O, right, Y)))
    raise OrderError("class formulas need base E0, E1 or E_s")


def _at(phi: Formula, u: int, v: int) -> Formula:
    """phi(x0, x1) with x0 := u and x1 := v (bound variables are >= 2 and untouched)."""
    if (u, v) == (X, Y):
        return phi
    return rename_variables(phi, {X: u, Y: v}, 0, 2)


class _Emitter:
    def __init__(self, R: Refinement):
        self.R = R
        self.O = R.order
        self.memo: dict[tuple[int, int], Formula] = {}

    def formula(self, stage: int, k: int) -> Formula:
        key = (stage, k)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        E = self.R.history[stage]
        if stage == 0:
            out = _base_formula(self.O, E, k)
        else:
            prev = self.R.history[stage - 1]
            cls = E.classes[k]
            parent = prev.class_of(cls[0])
            profiles = set()
            for j in cls:
                profiles |= self.R.profiles[stage - 1][j]
            others = [j for j in prev.classes[parent] if j not in cls]
            clash = [j for j in others if self.R.profiles[stage - 1][j] & profiles]
            if clash:
                raise OrderError(
                    f"stage {stage} class {list(cls)} shares a profile with color {clash[0]}; "
                    "no profile formula separates it (use mode some-pair)"
                )
            z = stage + 1
            exact = [self._exact(p, stage - 1, z) for p in sorted(profiles, key=_profile_key)]
            out = Conj((self.formula(stage - 1, parent), Or(exact)))
        self.memo[key] = out
        return out

    def _triple(self, row: tuple, stage: int, z: int) -> Formula:
        pos, d1, d2 = row[:3]
        if pos == "before":
            order = _lt(z, X)
        elif pos == "inside":
            order = Conj((_lt(X, z), _lt(z, Y)))
        else:
            order = _lt(Y, z)
        f1 = self.formula(stage, d1)
        f2 = self.formula(stage, d2)
        left = _at(f1, X, z) if pos != "before" else _at(f1, z, X)
        right = _at(f2, z, Y) if pos != "after" else _at(f2, Y, z)
        parts = [order, left, right]
        if len(row) > 3:
            parts.append(Atom(f"P{row[3]}", (z,)))
        return Conj(parts)

    def _exact(self, profile: frozenset, stage: int, z: int) -> Formula:
        """Pairs whose profile at this stage is exactly `profile`."""
        rows = sorted(profile, key=_row_key)
        triples = [self._triple(r, stage, z) for r in rows]
        if self.R.settings.interval:
            escape = [Equal(z, X), Equal(z, Y), _lt(z, X), _lt(Y, z)]
        else:
            escape = [Equal(z, X), Equal(z, Y)]
        every = Forall(z, Or(escape + triples))
        some = [Exists(z, t) for t in triples]
        return Conj([every] + some)


def _row_key(row: tuple) -> tuple:
    return (_POSITIONS.index(row[0]),) + tuple(row[1:])


def _profile_key(p: frozenset) -> tuple:
    return (len(p), sorted(_row_key(r) for r in p))


def class_edges(O: ColoredOrder, cls: Iterable[int]) -> frozenset[tuple[int, int]]:
    return frozenset(p for j in cls for p in O.pairs_of(j))


def emit_class_formula(R: Refinement, cls: Sequence[int] | int, stage: int | None = None, check: bool = True) -> Formula:
    """Formula in x0 < x1 over {Lt} (base E1) or {Lt, P_i} defining the edges of a stage class.

    `cls` is a class (list of colors) or its index at that stage.  With
    check=True the formula is evaluated on the order and must give exactly
    the union of the class's color relations.
    """
    if stage is None:
        stage = R.alpha
    if not (0 <= stage <= R.alpha):
        raise OrderError(f"stage {stage} exceeds the recorded history (alpha = {R.alpha})")
    E = R.history[stage]
    if isinstance(cls, int):
        if not (0 <= cls < len(E.classes)):
            raise OrderError(f"stage {stage} has no class number {cls}")
        k = cls
    else:
        target = tuple(sorted(cls))
        if target not in E.classes:
            raise OrderError(f"{list(target)} is not a class at stage {stage}")
        k = E.classes.index(target)
    phi = _Emitter(R).formula(stage, k)
    if check:
        got = formula_edges(R.order, phi)
        if got != class_edges(R.order, E.classes[k]):
            raise AssertionError("emitted class formula does not define its class")
    return phi


def emit_all(R: Refinement, stage: int | None = None, check: bool = True) -> list[tuple[tuple[int, ...], Formula]]:
    stage = R.alpha if stage is None else stage
    em = _Emitter(R)
    ev = Evaluator(R.order.to_structure()) if check and R.order.n else None
    out = []
    for k, cls in enumerate(R.history[stage].classes):
        phi = em.formula(stage, k)
        if check and formula_edges(R.order, phi, ev) != class_edges(R.order, cls):
            raise AssertionError("emitted class formula does not define its class")
        out.append((cls, phi))
    return out


def formula_edges(O: ColoredOrder, phi: Formula, ev: Evaluator | None = None) -> frozenset[tuple[int, int]]:
    """Pairs (a, b) of points with O |= phi(a, b)."""
    if O.n == 0:
        return frozenset()
    ev = ev if ev is not None else Evaluator(O.to_structure())
    check_signature(phi, ev.M.signature)
    if not phi.free <= {X, Y}:
        raise OrderError("class formulas have free variables among x0, x1")
    return frozenset((a, b) for a in range(O.n) for b in range(O.n) if ev._eval(phi, {X: a, Y: b}))


# ---------------------------------------------------------------------------
# order terms


@dataclass(frozen=True)
class Block:
    dense: bool
    size: int = 0

    def __repr__(self) -> str:
        return "DenseQ" if self.dense else f"Fin({self.size})"


DenseQ = Block(True)


def Fin(k: int) -> Block:
    if k < 1:
        raise OrderError("finite blocks have at least one point")
    return Block(False, k)


class OrderTerm:
    """A sum of blocks DenseQ (the rationals) and Fin(k); kept normalized."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable[Block] = ()):
        out: list[Block] = []
        for b in blocks:
            if out and out[-1].dense and b.dense:
                continue
            if out and not out[-1].dense and not b.dense:
                out[-1] = Fin(out[-1].size + b.size)
                continue
            out.append(b)
        self.blocks = tuple(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, OrderTerm) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __repr__(self) -> str:
        return "[" + ", ".join(map(repr, self.blocks)) + "]"

    def __len__(self) -> int:
        return len(self.blocks)

    def to_json(self) -> list:
        return ["Q" if b.dense else b.size for b in self.blocks]

    @classmethod
    def from_json(cls, data) -> "OrderTerm":
        if isinstance(data, Mapping):
            data = data.get("blocks", data.get("term"))
        if not isinstance(data, list):
            raise OrderError("an order term is a list of blocks ('Q' or a positive integer)")
        blocks = []
        for item in data:
            if item == "Q":
                blocks.append(DenseQ)
            elif isinstance(item, int) and not isinstance(item, bool):
                blocks.append(Fin(item))
            else:
                raise OrderError(f"bad order-term block {item!r}")
        return cls(blocks)


def encode_order(O: ColoredOrder) -> OrderTerm:
    """Each point becomes Q followed by a finite block of (vertex color + 2) points."""
    blocks: list[Block] = []
    for c in O.vertex_colors:
        blocks.extend((DenseQ, Fin(c + 2)))
    return OrderTerm(blocks)


def term_anomalies(t: OrderTerm) -> list[str]:
    notes = []
    if t.blocks and not t.blocks[0].dense:
        notes.append("term does not start with a dense block")
    if t.blocks and t.blocks[-1].dense:
        notes.append("term ends with a dense block")
    return notes


def recover_order(t: OrderTerm, class_formulas: Mapping[int, Formula] | None = None) -> ColoredOrder:
    """One point per finite block, colored by block size - 2, in block order.

    With class_formulas (edge color -> formula in x0 < x1 over {Lt, P_i}) the
    edge colors are rebuilt by evaluating them on the recovered order.
    """
    colors = []
    for b in t.blocks:
        if b.dense:
            continue
        if b.size < 2:
            raise OrderError(f"finite block of size {b.size} is not the image of a point")
        colors.append(b.size - 2)
    out = ColoredOrder(colors)
    if class_formulas is None:
        return out
    if out.n == 0:
        return ColoredOrder(colors, {})
    # vertex colors absent from the recovered order get empty tables
    rel = out.signature().as_dict()
    for phi in class_formulas.values():
        for name, ar in symbols_of(phi).items():
            rel.setdefault(name, ar)
    base = out.to_structure()
    ev = Evaluator(FiniteStructure(Signature(rel), out.n, base.tables))
    edges: dict[tuple[int, int], int] = {}
    for a, b in itertools.combinations(range(out.n), 2):
        hits = [j for j, phi in sorted(class_formulas.items()) if ev.holds(phi, {X: a, Y: b})]
        if len(hits) != 1:
            raise OrderError(f"pair ({a},{b}) satisfies {len(hits)} class formulas")
        edges[(a, b)] = hits[0]
    return ColoredOrder(colors, edges)


# ---------------------------------------------------------------------------
# generators


@dataclass
class Example53:
    order: ColoredOrder
    table: AdditivityTable
    points: list[tuple[int, ...]]
    labels: dict[int, tuple]
    vertex_colors: int

    def projection(self, j: int) -> tuple[int, int]:
        """The (n, q) part of an edge color."""
        return self.labels[j][2]

    def to_json(self) -> dict:
        data = self.order.to_json()
        data["points"] = [list(p) for p in self.points]
        data["labels"] = {str(j): [lab[0], lab[1], list(lab[2])] for j, lab in sorted(self.labels.items())}
        data["notes"] = ["vertex colors are assigned round-robin; density is a property of the infinite structure only"]
        return data


def compose_labels(l1: tuple, l2: tuple) -> tuple:
    """Composite edge label for x<y<z from the labels of (x,y) and (y,z)."""
    i1, _, (n, q) = l1
    _, k2, (m, r) = l2
    if n > m:
        return (i1, k2, (m, r))
    if n < m:
        return (i1, k2, (n, q))
    return (i1, k2, (n, q + r))


def gen_example_53(depth: int, grid: int, colors: int = 2) -> Example53:
    """Sequences of length depth over {0..grid-1}, ordered by first difference.

    Vertex colors go round-robin along the order.  The pair eta1 < eta2 gets
    the label (P(eta1), P(eta2), (n, eta2(n) - eta1(n))) with n the first
    difference; labels are numbered in sorted order.
    """
    if depth < 0 or grid < 1 or colors < 1:
        raise OrderError("depth must be >= 0 and grid, colors >= 1")
    points = sorted(itertools.product(range(grid), repeat=depth))
    vc = [i % colors for i in range(len(points))]
    raw: dict[tuple[int, int], tuple] = {}
    for a, b in itertools.combinations(range(len(points)), 2):
        e1, e2 = points[a], points[b]
        n = next(k for k in range(depth) if e1[k] != e2[k])
        raw[(a, b)] = (vc[a], vc[b], (n, e2[n] - e1[n]))
    labels = sorted(set(raw.values()))
    ids = {lab: j for j, lab in enumerate(labels)}
    edges = {p: ids[lab] for p, lab in raw.items()}
    table: dict[tuple[int, int], int] = {}
    for l1 in labels:
        for l2 in labels:
            if l1[1] != l2[0]:
                continue
            l3 = compose_labels(l1, l2)
            if l3 in ids:
                table[(ids[l1], ids[l2])] = ids[l3]
    t = AdditivityTable(table)
    return Example53(ColoredOrder(vc, edges, t), t, points, {j: lab for lab, j in ids.items()}, colors)


def random_kmu_order(
    rng,
    max_points: int = 7,
    max_depth: int = 3,
    max_grid: int = 4,
    max_colors: int = 3,
    max_edge_colors: int | None = None,
) -> ColoredOrder:
    """A random order satisfying the validation checks.

    Points are a random set of first-difference sequences with random vertex
    colors; the edge label is either the full (n, q) label or only the level n
    of the first difference.  Both labelings compose additively.  Draws with
    more than max_edge_colors edge colors are rejected and redrawn.
    """
    while True:
        O = _random_kmu_draw(rng, max_points, max_depth, max_grid, max_colors)
        if max_edge_colors is None or len(O.colors()) <= max_edge_colors:
            return O


def _random_kmu_draw(rng, max_points, max_depth, max_grid, max_colors) -> ColoredOrder:
    depth = rng.randint(1, max_depth)
    grid = rng.randint(2, max_grid)
    universe = list(itertools.product(range(grid), repeat=depth))
    k = rng.randint(1, min(max_points, len(universe)))
    points = sorted(rng.sample(universe, k))
    u = rng.randint(1, max_colors)
    vc = [rng.randrange(u) for _ in points]
    coarse = rng.random() < 0.5
    raw = {}
    for a, b in itertools.combinations(range(k), 2):
        e1, e2 = points[a], points[b]
        n = next(i for i in range(depth) if e1[i] != e2[i])
        raw[(a, b)] = (vc[a], vc[b], (n,) if coarse else (n, e2[n] - e1[n]))
    ids = {lab: j for j, lab in enumerate(sorted(set(raw.values())))}
    return ColoredOrder(vc, {p: ids[lab] for p, lab in raw.items()})


def superstable_signature(N: int) -> Signature:
    rel = {"U": 1, "V": 1, "Pi": 2}
    rel.update({f"E{n}": 2 for n in range(N + 1)})
    return Signature(rel)


def gen_example_superstable(N: int, size: int | None = None, v_size: int = 1) -> FiniteStructure:
    """A finite model of the universal theory with E_n splitting U as a full binary tree to depth N.

    U-points carry binary addresses of length N; a E_n b iff their addresses
    share the first n bits.  Each address is used by `multiplicity` points,
    the largest value for which the universe fits in `size` (1 when size is
    None).  pi maps U onto the v_size points of V round-robin; Pi is its graph.
    """
    if N < 0 or v_size < 1:
        raise OrderError("N must be >= 0 and V must be nonempty")
    leaves = 2**N
    minimum = leaves + v_size
    if size is None:
        mult = 1
    else:
        if size < minimum:
            raise OrderError(f"size bound {size} is below the minimum {minimum} for N = {N}")
        mult = (size - v_size) // leaves
    if leaves * mult < v_size:
        raise OrderError("pi cannot be onto V with this few U-points")
    addresses = [addr for addr in itertools.product((0, 1), repeat=N) for _ in range(mult)]
    nU = len(addresses)
    U = list(range(nU))
    V = list(range(nU, nU + v_size))
    tables: dict[str, list] = {"U": [(u,) for u in U], "V": [(v,) for v in V], "Pi": [(u, V[u % v_size]) for u in U]}
    for n in range(N + 1):
        tables[f"E{n}"] = [(a, b) for a in U for b in U if addresses[a][:n] == addresses[b][:n]]
    return FiniteStructure(superstable_signature(N), nU + v_size, tables)


def superstable_violations(M: FiniteStructure, N: int) -> list[str]:
    """Exhaustive scan of the universal axioms on a finite structure."""
    out = []
    U = {r[0] for r in M.tables["U"]}
    V = {r[0] for r in M.tables["V"]}
    if U & V:
        out.append("U and V intersect")
    pi = {}
    for a, b in M.tables["Pi"]:
        if a not in U or b not in V:
            out.append(f"Pi({a},{b}) leaves U x V")
        if a in pi:
            out.append(f"pi is not a function at {a}")
        pi[a] = b
    if set(pi) != U:
        out.append("pi is not total on U")
    E = [set(M.tables[f"E{n}"]) for n in range(N + 1)]
    for n, rel in enumerate(E):
        if any(a not in U or b not in U for a, b in rel):
            out.append(f"E{n} leaves U")
        if any((a, a) not in rel for a in U):
            out.append(f"E{n} is not reflexive on U")
        if any((b, a) not in rel for a, b in rel):
            out.append(f"E{n} is not symmetric")
        if any((a, c) not in rel for a, b in rel for b2, c in rel if b == b2):
            out.append(f"E{n} is not transitive")
    if E and U and len({frozenset(b for b in U if (a, b) in E[0]) for a in U}) != 1:
        out.append("E0 has more than one class")
    for n in range(N):
        if not E[n + 1] <= E[n]:
            out.append(f"E{n + 1} is not contained in E{n}")
        for a in U:
            cls = [b for b in U if (a, b) in E[n]]
            sub = {frozenset(c for c in cls if (b, c) in E[n + 1]) for b in cls}
            if len(sub) > 2:
                out.append(f"an E{n} class splits into {len(sub)} E{n + 1} classes")
                break
    return out


__all__ = [
    "AdditivityTable",
    "Block",
    "Classification",
    "ColorEquivalence",
    "ColoredOrder",
    "DenseQ",
    "Example53",
    "Fin",
    "OrderError",
    "OrderTerm",
    "OrderValidationError",
    "Refinement",
    "RefineSettings",
    "ValidationReport",
    "additivity_failures",
    "base_equivalence",
    "class_edges",
    "classify",
    "compose_labels",
    "emit_all",
    "emit_class_formula",
    "encode_order",
    "endpoint_equivalence",
    "endpoint_pairs",
    "formula_edges",
    "gen_example_53",
    "gen_example_superstable",
    "is_edge_preserving",
    "pair_profile",
    "random_kmu_order",
    "realized_compositions",
    "recover_order",
    "refine_fixpoint",
    "refine_step",
    "resolve_settings",
    "superstable_signature",
    "superstable_violations",
    "term_anomalies",
    "validate_kmu",
]
