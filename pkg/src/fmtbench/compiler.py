"""Compile an infinitary sentence into a first-order theory plus omitted types.

Every subformula phi of the (saturated) sentence gets a relation symbol R_phi
whose arguments are phi's free variables in increasing index order.  The
theory has four axiom schemas: the existential bridge, the negation bridge,
conjunction projections, and the unit axiom asserting the sentence's symbol.
Each conjunction subformula contributes the omitted type "every conjunct
symbol holds but the conjunction symbol fails".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .logic import (
    Atom,
    Conj,
    Equal,
    Evaluator,
    Exists,
    FiniteStructure,
    Formula,
    LogicError,
    Not,
    Or,
    Signature,
    canonical_digest,
    canonical_ranks,
    check_signature,
    closure,
    exists_many,
    forall_many,
    Iff,
    Implies,
    short_fingerprint,
    symbols_of,
    to_text,
)


class CompileError(LogicError):
    pass


@dataclass(frozen=True)
class SymbolDef:
    name: str
    formula: Formula
    variables: tuple[int, ...]

    @property
    def arity(self) -> int:
        return len(self.variables)

    def atom(self) -> Formula:
        return Atom(self.name, self.variables)


@dataclass(frozen=True)
class OmittedType:
    """Sigma for one conjunction subformula: literals over `variables`."""

    key: str
    conjunction: Formula
    variables: tuple[int, ...]
    literals: tuple[Formula, ...]


@dataclass
class CompiledTheory:
    original: Formula
    source: Formula
    source_signature: Signature
    symbols: list[SymbolDef]
    axioms: list[Formula]
    omitted_types: list[OmittedType]
    unit: str
    by_formula: dict[Formula, SymbolDef] = field(repr=False)

    @property
    def signature(self) -> Signature:
        return Signature({s.name: s.arity for s in self.symbols})

    def symbol(self, phi: Formula) -> SymbolDef:
        try:
            return self.by_formula[phi]
        except KeyError:
            raise CompileError(f"{phi} is not a subformula of the compiled sentence") from None

    def relation_atom(self, phi: Formula) -> Formula:
        return self.symbol(phi).atom()

    def to_json(self) -> dict:
        names = {s.formula: s.name for s in self.symbols}
        defs = []
        for s in self.symbols:
            f = s.formula
            entry: dict = {"name": s.name, "arity": s.arity, "variables": list(s.variables)}
            if isinstance(f, Atom):
                entry.update(kind="atom", symbol=f.symbol, args=list(f.args))
            elif isinstance(f, Equal):
                entry.update(kind="eq", args=[f.left, f.right])
            elif isinstance(f, Not):
                entry.update(kind="not", child=names[f.child])
            elif isinstance(f, Exists):
                entry.update(kind="exists", var=f.var, child=names[f.child])
            else:
                entry.update(kind="and", children=sorted(names[c] for c in f.items))
            defs.append(entry)
        return {
            "signature": {"relations": self.signature.as_dict()},
            "source_signature": {"relations": self.source_signature.as_dict()},
            "source_fingerprint": short_fingerprint(self.source),
            "unit": self.unit,
            "symbols": defs,
            "axioms": [to_text(a) for a in self.axioms],
            "omitted_types": [
                {
                    "key": o.key,
                    "fingerprint": short_fingerprint(o.conjunction),
                    "variables": list(o.variables),
                    "literals": [to_text(lit) for lit in o.literals],
                }
                for o in self.omitted_types
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CompiledTheory":
        try:
            src_sig = Signature(data["source_signature"]["relations"])
            built: dict[str, Formula] = {}
            for entry in data["symbols"]:
                kind = entry["kind"]
                if kind == "atom":
                    f = Atom(entry["symbol"], tuple(entry["args"]))
                elif kind == "eq":
                    f = Equal(*entry["args"])
                elif kind == "not":
                    f = Not(built[entry["child"]])
                elif kind == "exists":
                    f = Exists(entry["var"], built[entry["child"]])
                elif kind == "and":
                    f = Conj(built[c] for c in entry["children"])
                else:
                    raise CompileError(f"unknown symbol kind {kind!r}")
                built[entry["name"]] = f
            source = built[data["unit"]]
        except (KeyError, TypeError) as exc:
            raise CompileError(f"malformed compiled theory: {exc}") from None
        out = compile_sentence(source, src_sig, saturate_first=False)
        names = [e["name"] for e in data["symbols"]]
        if [s.name for s in out.symbols] != names:
            raise CompileError("compiled theory does not match its own symbol table")
        return out


def saturate(psi: Formula, sig: Signature) -> Formula:
    """Add a tautology mentioning P(x0..x(a-1)) for every symbol whose canonical atom is missing."""
    present = {node for node in closure(psi) if isinstance(node, Atom)}
    extra = []
    for name, arity in sig.relations:
        atom = Atom(name, tuple(range(arity)))
        if atom not in present:
            extra.append(forall_many(range(arity), Or((atom, Not(atom)))))
    if not extra:
        return psi
    return Conj([psi] + extra)


def subformulas(psi: Formula, sig: Signature | None = None, saturate_first: bool = True) -> list[Formula]:
    """Distinct subformulas, children before parents, ties broken by canonical key."""
    if psi.free:
        raise CompileError("subformulas expects a sentence")
    if saturate_first:
        psi = saturate(psi, sig if sig is not None else Signature(symbols_of(psi)))
    ranks = canonical_ranks(psi)
    return sorted(ranks, key=ranks.__getitem__)


def compile_sentence(psi: Formula, sig: Signature | None = None, saturate_first: bool = True) -> CompiledTheory:
    if psi.free:
        raise CompileError("only sentences can be compiled")
    if sig is None:
        sig = Signature(symbols_of(psi))
    check_signature(psi, sig)
    source = saturate(psi, sig) if saturate_first else psi
    order = subformulas(source, sig, saturate_first=False)
    symbols = [SymbolDef(f"R_{i}", f, f.free_sorted()) for i, f in enumerate(order)]
    by_formula = {s.formula: s for s in symbols}
    axioms: list[Formula] = []
    omitted: list[OmittedType] = []
    for s in symbols:
        f = s.formula
        head = s.atom()
        if isinstance(f, Exists):
            child = by_formula[f.child].atom()
            axioms.append(forall_many(s.variables, Iff(Exists(f.var, child), head)))
        elif isinstance(f, Not):
            child = by_formula[f.child].atom()
            axioms.append(forall_many(s.variables, Iff(Not(child), head)))
        elif isinstance(f, Conj):
            kids = sorted((by_formula[c] for c in f.items), key=lambda d: int(d.name[2:]))
            for d in kids:
                axioms.append(forall_many(s.variables, Implies(head, d.atom())))
            literals = tuple(d.atom() for d in kids) + (Not(head),)
            omitted.append(OmittedType(s.name, f, s.variables, literals))
    unit = by_formula[source]
    axioms.append(unit.atom())
    return CompiledTheory(psi, source, sig, symbols, axioms, omitted, unit.name, by_formula)


# ---------------------------------------------------------------------------
# the structure transform and its inverse


def _table_for(node: Formula, variables: tuple[int, ...], M: FiniteStructure, tables: dict) -> frozenset:
    n = M.size
    universe = range(n)
    if isinstance(node, Atom):
        rel = M.tables[node.symbol]
        idx = {v: i for i, v in enumerate(variables)}
        return frozenset(
            vals for vals in itertools.product(universe, repeat=len(variables))
            if tuple(vals[idx[v]] for v in node.args) in rel
        )
    if isinstance(node, Equal):
        idx = {v: i for i, v in enumerate(variables)}
        return frozenset(
            vals for vals in itertools.product(universe, repeat=len(variables))
            if vals[idx[node.left]] == vals[idx[node.right]]
        )
    if isinstance(node, Not):
        child = tables[node.child]
        return frozenset(vals for vals in itertools.product(universe, repeat=len(variables)) if vals not in child)
    if isinstance(node, Exists):
        child_vars = node.child.free_sorted()
        child = tables[node.child]
        if node.var not in node.child.free:
            return child
        drop = child_vars.index(node.var)
        return frozenset(vals[:drop] + vals[drop + 1:] for vals in child)
    kids = []
    for c in node.items:
        pos = tuple(variables.index(v) for v in c.free_sorted())
        kids.append((pos, tables[c]))
    kids.sort(key=lambda kv: len(kv[1]))
    out = []
    for vals in itertools.product(universe, repeat=len(variables)):
        if all(tuple(vals[p] for p in pos) in tab for pos, tab in kids):
            out.append(vals)
    return frozenset(out)


def extension_tables(M: FiniteStructure, C: CompiledTheory) -> dict[Formula, frozenset]:
    tables: dict[Formula, frozenset] = {}
    for s in C.symbols:
        tables[s.formula] = _table_for(s.formula, s.variables, M, tables)
    return tables


def transform_structure(M: FiniteStructure, C: CompiledTheory) -> FiniteStructure:
    """Same universe; R_phi interpreted as the set of satisfying assignments of phi."""
    if M.signature != C.source_signature:
        raise CompileError("structure signature does not match the compiled sentence's signature")
    tables = extension_tables(M, C)
    return FiniteStructure(C.signature, M.size, {s.name: tables[s.formula] for s in C.symbols})


def inverse_transform(N: FiniteStructure, C: CompiledTheory) -> FiniteStructure:
    """Read the source relations off the symbols of their canonical atoms."""
    if N.signature != C.signature:
        raise CompileError("structure is not over the compiled signature")
    out = {}
    for name, arity in C.source_signature.relations:
        atom = Atom(name, tuple(range(arity)))
        d = C.by_formula.get(atom)
        if d is None:
            raise CompileError(f"no relation symbol for the atom {to_text(atom)}")
        out[name] = N.tables[d.name]
    return FiniteStructure(C.source_signature, N.size, out)


def omits_all(N: FiniteStructure, gamma: Sequence[OmittedType]) -> bool:
    return realized_omitted_type(N, gamma) is None


def realized_omitted_type(N: FiniteStructure, gamma: Sequence[OmittedType]):
    """First (key, assignment) realizing some omitted type, or None."""
    for o in gamma:
        ev = Evaluator(N)
        for vals in itertools.product(range(N.size), repeat=len(o.variables)):
            env = dict(zip(o.variables, vals))
            if all(ev._eval(lit, env) for lit in o.literals):
                return o.key, vals
    return None


def models_theory(N: FiniteStructure, axioms: Iterable[Formula]) -> bool:
    ev = Evaluator(N)
    return all(ev.holds(a, {}) for a in axioms)


# ---------------------------------------------------------------------------
# theory handles


class InconsistentTheory(LogicError):
    pass


class CompleteTheory:
    """Th(M): every sentence is decided by evaluation in M."""

    kind = "complete"

    def __init__(self, M: FiniteStructure):
        self.M = M
        self._ev = Evaluator(M)

    @property
    def signature(self) -> Signature:
        return self.M.signature

    def holds(self, sentence: Formula) -> bool:
        if sentence.free:
            raise LogicError("theory queries take sentences")
        return self._ev.holds(sentence, {})

    def consistent_with(self, sentences: Iterable[Formula] = ()) -> bool:
        return all(self.holds(s) for s in sentences)

    def entails(self, sentence: Formula) -> bool:
        return self.holds(sentence)

    def is_consistent(self) -> bool:
        return True

    def describe(self) -> dict:
        return {"kind": "complete", "semantics": "truth in one finite structure", "size": self.M.size}


def complete_theory_of(M: FiniteStructure) -> CompleteTheory:
    return CompleteTheory(M)


def isolates_under(theta: Formula, sigma: Sequence[Formula], T, variables: Sequence[int] | None = None) -> bool:
    """theta isolates sigma in T: T + Exists theta consistent and T |- theta -> psi for every psi."""
    if variables is None:
        variables = sorted(theta.free.union(*(p.free for p in sigma)) if sigma else theta.free)
    fv = set(variables)
    if not theta.free <= fv or any(not p.free <= fv for p in sigma):
        raise LogicError("isolation candidates must share the declared free-variable tuple")
    if not T.consistent_with([exists_many(variables, theta)]):
        return False
    own = set(theta.items) if isinstance(theta, Conj) else {theta}
    for psi in sigma:
        if psi in own:
            continue
        if not T.entails(forall_many(variables, Implies(theta, psi))):
            return False
    return True


def candidate_pool(o: OmittedType, C: CompiledTheory, max_size: int = 12, max_candidates: int = 64) -> list[Formula]:
    """Isolating candidates for one omitted type, ordered by size then digest.

    The pool holds conjunctions of subsets of the type's literals (a single
    literal stands for itself) and existential unfoldings Exists v R_psi of
    literals whose symbol names an existential subformula, all of AST size at
    most max_size.  The first max_candidates in (size, digest) order are kept
    and the conjunction of the whole type is always appended.
    """
    lits = list(o.literals)
    found: dict[Formula, None] = {}
    names = {s.name: s for s in C.symbols}
    for lit in lits:
        if isinstance(lit, Atom):
            d = names[lit.symbol]
            if isinstance(d.formula, Exists):
                f = Exists(d.formula.var, C.by_formula[d.formula.child].atom())
                if f.size <= max_size:
                    found.setdefault(f)
    min_lit = min(l.size for l in lits)
    for r in range(1, len(lits) + 1):
        floor = (r * min_lit) if r == 1 else (1 + r * min_lit)
        if floor > max_size:
            break
        for combo in itertools.combinations(lits, r):
            f = combo[0] if r == 1 else Conj(combo)
            if f.size <= max_size:
                found.setdefault(f)
        # every larger subset has size >= next_floor, so the prefix is settled
        next_floor = 1 + (r + 1) * min_lit
        if sum(1 for f in found if f.size < next_floor) >= max_candidates:
            break
    ordered = sorted(found, key=lambda f: (f.size, canonical_digest(f)))
    pool = ordered[:max_candidates]
    full = Conj(lits) if len(lits) > 1 else lits[0]
    if full not in pool:
        pool.append(full)
    return pool


@dataclass
class CompletionStep:
    handle: object
    added: list[Formula]
    checked: int


class _Profiles:
    """Literal profiles of one omitted type over the handle's known models.

    A profile is the bitmask of literals true at one assignment.  A model of
    the theory with a profile extending theta's mask but missing another
    literal refutes the entailment theta -> Sigma without a solver call; one
    extending theta's mask witnesses consistency.  Profiles are computed per
    model on first use.
    """

    def __init__(self, o: OmittedType):
        self.o = o
        self.full = (1 << len(o.literals)) - 1
        self.models: list[FiniteStructure] = []
        self._ids: set[int] = set()
        self._masks: dict[int, frozenset[int]] = {}

    def update(self, models: Sequence[FiniteStructure]) -> None:
        for M in models:
            if id(M) not in self._ids:
                self._ids.add(id(M))
                self.models.append(M)

    def masks(self, M: FiniteStructure) -> frozenset[int]:
        hit = self._masks.get(id(M))
        if hit is not None:
            return hit
        rows = []
        for bit, lit in enumerate(self.o.literals):
            neg = isinstance(lit, Not)
            atom = lit.child if neg else lit
            rows.append((1 << bit, neg, M.tables[atom.symbol], atom.args))
        out = set()
        variables = self.o.variables
        for vals in itertools.product(range(M.size), repeat=len(variables)):
            env = dict(zip(variables, vals))
            mask = 0
            for bit, neg, table, args in rows:
                if (tuple(env[v] for v in args) in table) != neg:
                    mask |= bit
            out.add(mask)
        hit = frozenset(out)
        self._masks[id(M)] = hit
        return hit

    def mask_of(self, theta: Formula) -> int | None:
        parts = theta.items if isinstance(theta, Conj) else (theta,)
        mask = 0
        for p in parts:
            try:
                mask |= 1 << self.o.literals.index(p)
            except ValueError:
                return None
        return mask

    def verdict(self, theta: Formula) -> tuple[bool, bool]:
        """(known consistent, refuted) from the cached models alone."""
        mask = self.mask_of(theta)
        consistent = False
        if mask is not None:
            rest = self.full & ~mask
            for M in self.models:
                for p in self.masks(M):
                    if p & mask == mask:
                        consistent = True
                        if p & rest != rest:
                            return True, True
            return consistent, False
        for M in self.models:
            ev = Evaluator(M)
            for vals in itertools.product(range(M.size), repeat=len(self.o.variables)):
                env = dict(zip(self.o.variables, vals))
                if ev._eval(theta, env):
                    consistent = True
                    if not all(ev._eval(l, env) for l in self.o.literals):
                        return True, True
        return consistent, False


def isolates_type(theta: Formula, o: OmittedType, T, profiles: _Profiles | None = None) -> bool:
    """Does theta isolate the omitted type o in the handle T?"""
    profiles = profiles or _Profiles(o)
    witness = getattr(T, "witness_models", None)
    if witness is not None:
        profiles.update(witness())
    known, refuted = profiles.verdict(theta)
    if refuted:
        return False
    own = set(theta.items) if isinstance(theta, Conj) else {theta}
    rest = [l for l in o.literals if l not in own]
    if rest:
        bad = exists_many(o.variables, Conj((theta, Not(Conj(rest)))))
        if T.consistent_with([bad]):
            return False
    if not known and not T.consistent_with([exists_many(o.variables, theta)]):
        return False
    return True


def completion_step(T, C: CompiledTheory, max_size: int = 12, max_candidates: int = 64) -> CompletionStep:
    """One round of adding Not Exists theta for every candidate theta isolating some omitted type."""
    if not T.is_consistent():
        raise InconsistentTheory("the handle has no model within its bound")
    present = set(T.axioms)
    added: list[Formula] = []
    checked = 0
    for o in C.omitted_types:
        profiles = _Profiles(o)
        for theta in candidate_pool(o, C, max_size, max_candidates):
            ax = Not(exists_many(o.variables, theta))
            if ax in present:
                continue
            checked += 1
            if isolates_type(theta, o, T, profiles):
                present.add(ax)
                added.append(ax)
    if not added:
        return CompletionStep(T, [], checked)
    return CompletionStep(T.extend(added), added, checked)


def completion_fixpoint(T, C: CompiledTheory, max_steps: int = 20, **pool):
    """Iterate completion_step until nothing is added; returns (handle, steps, history)."""
    history = []
    for step in range(max_steps):
        res = completion_step(T, C, **pool)
        history.append(len(res.added))
        if not res.added:
            return T, step, history, True
        T = res.handle
    return T, max_steps, history, False


__all__ = [
    "CompileError",
    "CompiledTheory",
    "CompleteTheory",
    "InconsistentTheory",
    "OmittedType",
    "SymbolDef",
    "candidate_pool",
    "compile_sentence",
    "complete_theory_of",
    "completion_fixpoint",
    "completion_step",
    "extension_tables",
    "inverse_transform",
    "isolates_type",
    "isolates_under",
    "models_theory",
    "omits_all",
    "realized_omitted_type",
    "saturate",
    "subformulas",
    "transform_structure",
]
