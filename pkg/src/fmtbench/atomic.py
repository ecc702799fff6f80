"""Isolation, density of isolated types, atomicity and greedy atomic sets.

Two kinds of theory handle are understood.

* The complete theory of a finite structure M.  Here the complete type of a
  tuple is its automorphism orbit, so "theta isolates a complete type" is
  decided exactly: theta's extension in M must be one orbit.  When the pool
  holds no such formula the Scott stage formula of the tuple is used and the
  witness is labelled accordingly, so every verdict is decided.
* Bounded theories (SAT handles).  A complete type is approximated by a
  fixed type pool (formulas up to size type_bound): theta isolates when it
  is consistent and decides every type-pool formula.  Candidates for theta
  come from the search pool (up to size pool_size).  Keeping the two apart
  makes verdicts monotone in pool_size.  Failures are reported as
  "unknown-at-bound".

Pool formulas have free variables among x0..x(m-1) and bind x_m, x_(m+1), ...
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .compiler import CompiledTheory, CompleteTheory, compile_sentence, isolates_under, transform_structure
from .logic import (
    TRUE,
    Atom,
    Conj,
    Equal,
    Evaluator,
    Exists,
    FiniteStructure,
    Formula,
    LogicError,
    Not,
    Signature,
    automorphisms,
    canonical_digest,
    check_signature,
    exists_many,
    forall_many,
    Implies,
    to_text,
)
from .scott import ScottSession, iso_via_invariant, refine_to_fixpoint, rename_variables, scott_sentence_from

ISOLATED = "isolated"
NOT_ISOLATED = "not isolated"
UNKNOWN = "unknown-at-bound"


# ---------------------------------------------------------------------------
# formula pools


def tuple_index(t: Sequence[int], n: int) -> int:
    """Position of an assignment in the bitmask layout (x0 least significant)."""
    idx = 0
    for i, a in enumerate(t):
        idx += a * n**i
    return idx


def assignments(n: int, m: int) -> list[tuple[int, ...]]:
    """All m-tuples over range(n); list position equals tuple_index."""
    return [tuple(reversed(p)) for p in itertools.product(range(n), repeat=m)]


def _mask_by_eval(ev: Evaluator, phi: Formula, m: int) -> int:
    out = 0
    for idx, t in enumerate(assignments(ev.M.size, m)):
        if ev._eval(phi, dict(enumerate(t))):
            out |= 1 << idx
    return out


@dataclass
class _Level:
    formulas: list[Formula] = field(default_factory=list)
    by_size: dict[int, list[Formula]] = field(default_factory=lambda: defaultdict(list))
    masks: dict[Formula, int] = field(default_factory=dict)
    by_mask: dict[int, Formula] = field(default_factory=dict)
    truncated: bool = False


class FormulaPool:
    """Formulas with free variables among x0..x(nvars-1), ordered by (size, digest).

    The pool is grown size by size from atoms, equalities x_i = x_j (i < j)
    and "true", closing under negation, flattened conjunction and, up to the
    quantifier depth, Exists x_m over the pool one variable wider.  Given a
    structure, only the first formula of each extension is kept, so the pool
    is a list of extension representatives.  Generation below a size does not
    depend on max_size, hence a larger bound only adds formulas.
    """

    def __init__(
        self,
        signature: Signature,
        nvars: int,
        max_size: int,
        quantifier_depth: int = 1,
        structure: FiniteStructure | None = None,
        max_formulas: int = 5000,
    ):
        if nvars < 0 or max_size < 1 or quantifier_depth < 0:
            raise LogicError("pool bounds must be non-negative (size at least 1)")
        if structure is not None and structure.signature != signature:
            raise LogicError("pool structure has a different signature")
        self.signature = signature
        self.nvars = nvars
        self.max_size = max_size
        self.quantifier_depth = quantifier_depth
        self.structure = structure
        self.max_formulas = max_formulas
        self._levels: dict[tuple[int, int], _Level] = {}
        self._ev = Evaluator(structure) if structure is not None else None
        top = self._level(nvars, quantifier_depth)
        self.formulas = top.formulas
        self.masks = top.masks
        self.by_mask = top.by_mask
        self.truncated = top.truncated

    @property
    def semantic(self) -> bool:
        return self.structure is not None

    def describe(self) -> dict:
        return {
            "free_variables": self.nvars,
            "max_size": self.max_size,
            "quantifier_depth": self.quantifier_depth,
            "dedup": "extension" if self.semantic else "syntactic",
            "formulas": len(self.formulas),
            "truncated": self.truncated,
        }

    def __iter__(self):
        return iter(self.formulas)

    def __len__(self) -> int:
        return len(self.formulas)

    def _base(self, m: int) -> list[Formula]:
        out: list[Formula] = [TRUE]
        for name, arity in self.signature.relations:
            for args in itertools.product(range(m), repeat=arity):
                out.append(Atom(name, args))
        for i in range(m):
            for j in range(i + 1, m):
                out.append(Equal(i, j))
        return out

    def _mask(self, f: Formula, m: int, lvl: _Level, inner: _Level | None) -> int:
        n = self.structure.size
        full = (1 << n**m) - 1
        if isinstance(f, Not):
            return full ^ lvl.masks[f.child]
        if isinstance(f, Conj):
            out = full
            for c in f.items:
                out &= lvl.masks[c]
            return out
        if isinstance(f, Exists):
            inner_mask = inner.masks[f.child]
            block = n**m
            out = 0
            for v in range(n):
                out |= (inner_mask >> (v * block)) & full
            return out
        return _mask_by_eval(self._ev, f, m)

    def _level(self, m: int, depth: int) -> _Level:
        key = (m, depth)
        hit = self._levels.get(key)
        if hit is not None:
            return hit
        inner = self._level(m + 1, depth - 1) if depth > 0 else None
        lvl = _Level()
        nonconj: dict[int, list[Formula]] = defaultdict(list)
        conj: dict[int, list[Formula]] = defaultdict(list)
        for s in range(1, self.max_size + 1):
            cands: set[Formula] = set()
            if s == 1:
                cands.update(self._base(m))
            else:
                for f in lvl.by_size[s - 1]:
                    if not isinstance(f, Not):
                        cands.add(Not(f))
                if inner is not None:
                    for g in inner.by_size[s - 1]:
                        if m in g.free:
                            cands.add(Exists(m, g))
                for i in range(1, s - 1):
                    for a in nonconj[i]:
                        for b in nonconj[s - 1 - i]:
                            if a is not b:
                                cands.add(Conj((a, b)))
                        for b in conj[s - i]:
                            if a not in b.items:
                                cands.add(Conj(b.items | {a}))
            cands = {f for f in cands if f.size == s and f not in lvl.masks}
            if self.semantic:
                # only the least candidate of each new extension survives, so
                # digests are needed for those groups alone
                groups: dict[int, list[Formula]] = {}
                for f in cands:
                    mk = self._mask(f, m, lvl, inner)
                    if mk not in lvl.by_mask:
                        groups.setdefault(mk, []).append(f)
                chosen = [(min(fs, key=canonical_digest), mk) for mk, fs in groups.items()]
            else:
                chosen = [(f, -1) for f in cands]
            chosen.sort(key=lambda p: canonical_digest(p[0]))
            for f, mk in chosen:
                if self.semantic:
                    lvl.by_mask[mk] = f
                lvl.masks[f] = mk
                lvl.formulas.append(f)
                lvl.by_size[s].append(f)
                (conj if isinstance(f, Conj) and f.items else nonconj)[s].append(f)
                if len(lvl.formulas) >= self.max_formulas:
                    lvl.truncated = True
                    break
            if lvl.truncated:
                break
        if inner is not None and inner.truncated:
            lvl.truncated = True
        self._levels[key] = lvl
        return lvl


def type_in_pool(M: FiniteStructure, t: Sequence[int], pool: Iterable[Formula]) -> list[Formula]:
    """The pool type of t in M: each pool formula or its negation, whichever holds."""
    ev = Evaluator(M)
    env = dict(enumerate(t))
    return [phi if ev.holds(phi, env) else Not(phi) for phi in pool]


# ---------------------------------------------------------------------------
# isolation


@dataclass(frozen=True)
class IsolationCertificate:
    theta: Formula
    sigma: tuple[Formula, ...]
    variables: tuple[int, ...]
    handle: dict

    def verify(self, T) -> bool:
        return isolates_under(self.theta, self.sigma, T, self.variables)

    def to_json(self) -> dict:
        return {
            "theta": to_text(self.theta),
            "sigma": [to_text(p) for p in self.sigma],
            "variables": list(self.variables),
            "handle": self.handle,
        }


def isolates(theta: Formula, sigma: Sequence[Formula], T, variables: Sequence[int] | None = None) -> bool:
    """T + Exists theta is consistent and T entails theta -> psi for each psi in sigma."""
    return isolates_under(theta, sigma, T, variables)


def certify(theta: Formula, sigma: Sequence[Formula], T, variables: Sequence[int] | None = None) -> IsolationCertificate | None:
    if variables is None:
        variables = sorted(theta.free.union(*(p.free for p in sigma)))
    if not isolates_under(theta, sigma, T, variables):
        return None
    return IsolationCertificate(theta, tuple(sigma), tuple(variables), T.describe())


def _orbit_ids(M: FiniteStructure, m: int) -> list[int]:
    """Orbit number of every m-tuple (by tuple_index) under Aut(M)."""
    n = M.size
    tuples = assignments(n, m)
    ids = [-1] * len(tuples)
    if n <= 7:
        group = automorphisms(M)
        nxt = 0
        for idx, t in enumerate(tuples):
            if ids[idx] >= 0:
                continue
            for g in group:
                ids[tuple_index([g[a] for a in t], n)] = nxt
            nxt += 1
        return ids
    # stage-beta classes coincide with orbits; this avoids n! permutations
    ps = refine_to_fixpoint(M, ScottSession())
    keys: dict = {}
    for idx, t in enumerate(tuples):
        ids[idx] = keys.setdefault(ps.class_key(t, ps.beta), len(keys))
    return ids


class _FiniteJudge:
    """Exact isolation for the complete theory of a finite structure."""

    exact = True

    def __init__(self, M: FiniteStructure, max_size: int, depth: int, max_formulas: int):
        self.M = M
        self.max_size = max_size
        self.depth = depth
        self.max_formulas = max_formulas
        self.ev = Evaluator(M)
        self._pools: dict[int, FormulaPool] = {}
        self._orbits: dict[int, tuple[list[int], list[int]]] = {}
        self._ps = None

    def pool(self, m: int) -> FormulaPool:
        p = self._pools.get(m)
        if p is None:
            p = FormulaPool(self.M.signature, m, self.max_size, self.depth, self.M, self.max_formulas)
            self._pools[m] = p
        return p

    def orbits(self, m: int) -> tuple[list[int], list[int]]:
        hit = self._orbits.get(m)
        if hit is None:
            ids = _orbit_ids(self.M, m)
            masks = [0] * (max(ids, default=-1) + 1)
            for idx, o in enumerate(ids):
                masks[o] |= 1 << idx
            hit = (ids, masks)
            self._orbits[m] = hit
        return hit

    def mask(self, phi: Formula, m: int) -> int:
        p = self._pools.get(m)
        if p is not None and phi in p.masks:
            return p.masks[phi]
        return _mask_by_eval(self.ev, phi, m)

    def holds(self, phi: Formula, t: Sequence[int]) -> bool:
        return self.ev._eval(phi, dict(enumerate(t)))

    def scott(self, t: Sequence[int]) -> Formula:
        if self._ps is None:
            self._ps = refine_to_fixpoint(self.M, ScottSession())
        return self._ps.formula(t, self._ps.beta)

    def isolates_tuple(self, theta: Formula, t: Sequence[int]) -> bool:
        ids, masks = self.orbits(len(t))
        return self.mask(theta, len(t)) == masks[ids[tuple_index(t, self.M.size)]]

    def isolator(self, t: Sequence[int]) -> tuple[Formula, str]:
        ids, masks = self.orbits(len(t))
        target = masks[ids[tuple_index(t, self.M.size)]]
        theta = self.pool(len(t)).by_mask.get(target)
        if theta is not None:
            return theta, "pool"
        return self.scott(t), "scott"

    def choose(self, chi: Formula, m: int, fallback: bool = True) -> tuple[Formula, str] | None:
        """Least pool formula whose extension is one orbit inside chi's."""
        chi_mask = self.mask(chi, m)
        if chi_mask == 0:
            return None
        ids, masks = self.orbits(m)
        orbit_masks = set(masks)
        for theta in self.pool(m).formulas:
            mk = self.pool(m).masks[theta]
            if mk and not (mk & ~chi_mask) and mk in orbit_masks:
                return theta, "pool"
        if not fallback:
            return None
        low = (chi_mask & -chi_mask).bit_length() - 1
        return self.scott(assignments(self.M.size, m)[low]), "scott"

    def consistent(self, phi: Formula, m: int) -> bool:
        return self.mask(phi, m) != 0


class _BoundedJudge:
    """Pool-relative isolation for a SAT-backed theory handle."""

    exact = False

    def __init__(self, T, M: FiniteStructure | None, max_size: int, depth: int, max_formulas: int, type_bound: int):
        self.T = T
        self.type_bound = type_bound
        self._type_pools: dict[int, FormulaPool] = {}
        self.M = M
        self.max_size = max_size
        self.depth = depth
        self.max_formulas = max_formulas
        self.ev = Evaluator(M) if M is not None else None
        self._pools: dict[int, FormulaPool] = {}
        self._decides: dict[tuple[Formula, int], bool] = {}
        self._model_ev: dict[int, Evaluator] = {}
        self._ps = None

    def pool(self, m: int) -> FormulaPool:
        p = self._pools.get(m)
        if p is None:
            p = FormulaPool(self.T.signature, m, self.max_size, self.depth, None, self.max_formulas)
            self._pools[m] = p
        return p

    def type_pool(self, m: int) -> FormulaPool:
        p = self._type_pools.get(m)
        if p is None:
            p = FormulaPool(self.T.signature, m, self.type_bound, self.depth, None, self.max_formulas)
            self._type_pools[m] = p
        return p

    def holds(self, phi: Formula, t: Sequence[int]) -> bool:
        return self.ev._eval(phi, dict(enumerate(t)))

    def mask(self, phi: Formula, m: int) -> int:
        return _mask_by_eval(self.ev, phi, m)

    def consistent(self, phi: Formula, m: int) -> bool:
        return self.T.consistent_with([exists_many(range(m), phi)])

    def entails_implication(self, theta: Formula, psi: Formula, m: int) -> bool:
        return self.T.entails(forall_many(range(m), Implies(theta, psi)))

    def _values(self, theta: Formula, phi: Formula, m: int) -> set[bool]:
        """Truth values of phi at realizations of theta in models found so far."""
        seen: set[bool] = set()
        for N in self.T.witness_models():
            ev = self._model_ev.get(id(N))
            if ev is None or ev.M is not N:
                ev = Evaluator(N)
                self._model_ev[id(N)] = ev
            for t in assignments(N.size, m):
                env = dict(enumerate(t))
                if ev._eval(theta, env):
                    seen.add(ev._eval(phi, env))
                    if len(seen) == 2:
                        return seen
        return seen

    def decides_pool(self, theta: Formula, m: int) -> bool:
        key = (theta, m)
        hit = self._decides.get(key)
        if hit is not None:
            return hit
        ok = self.consistent(theta, m)
        if ok:
            for phi in self.type_pool(m).formulas:
                vals = self._values(theta, phi, m)
                if len(vals) == 2:
                    ok = False
                    break
                first = Not(phi) if vals == {False} else phi
                if self.entails_implication(theta, first, m):
                    continue
                if not vals and self.entails_implication(theta, Not(phi), m):
                    continue
                ok = False
                break
        self._decides[key] = ok
        return ok

    def scott(self, t: Sequence[int]) -> Formula | None:
        if self.M is None or self.M.signature != self.T.signature:
            return None
        if self._ps is None:
            self._ps = refine_to_fixpoint(self.M, ScottSession())
        return self._ps.formula(t, self._ps.beta)

    def isolates_tuple(self, theta: Formula, t: Sequence[int]) -> bool:
        return self.holds(theta, t) and self.decides_pool(theta, len(t))

    def isolator(self, t: Sequence[int]) -> tuple[Formula | None, str]:
        m = len(t)
        for theta in self.pool(m).formulas:
            if self.holds(theta, t) and self.decides_pool(theta, m):
                return theta, "pool"
        sc = self.scott(t)
        if sc is not None and self.decides_pool(sc, m):
            return sc, "scott"
        return None, "none"

    def choose(self, chi: Formula, m: int, fallback: bool = True) -> tuple[Formula, str] | None:
        for theta in self.pool(m).formulas:
            if self.entails_implication(theta, chi, m) and self.decides_pool(theta, m):
                return theta, "pool"
        if fallback and self.M is not None:
            for t in assignments(self.M.size, m):
                if self.holds(chi, t):
                    sc = self.scott(t)
                    if sc is not None and self.entails_implication(sc, chi, m) and self.decides_pool(sc, m):
                        return sc, "scott"
                    break
        return None


def _judge_for(T, M: FiniteStructure | None, max_size: int, depth: int, max_formulas: int, type_bound: int = 3):
    if isinstance(T, CompleteTheory):
        if M is not None and M is not T.M and M != T.M:
            if M.signature != T.M.signature or M.size != T.M.size or not iso_via_invariant(M, T.M, ScottSession()):
                raise LogicError("the structure is not a model of the complete theory")
        return _FiniteJudge(M if M is not None else T.M, max_size, depth, max_formulas)
    if M is not None:
        if M.signature != T.signature:
            raise LogicError("structure and theory have different signatures")
        ev = Evaluator(M)
        failed = [a for a in getattr(T, "axioms", ()) if not ev.holds(a, {})]
        if failed:
            raise LogicError(f"the structure fails {len(failed)} axiom(s), first: {to_text(failed[0])}")
    return _BoundedJudge(T, M, max_size, depth, max_formulas, type_bound)


# ---------------------------------------------------------------------------
# reports


@dataclass
class TupleVerdict:
    tuple: tuple[int, ...]
    verdict: str
    witness: Formula | None
    source: str


def _tuple_key(t: Sequence[int]) -> str:
    return ",".join(str(a) for a in t)


@dataclass
class AtomicityReport:
    subject: dict
    handle: dict
    pool: dict
    verdicts: list[TupleVerdict]
    complete: bool = True
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def all_isolated(self) -> bool:
        return all(v.verdict == ISOLATED for v in self.verdicts)

    def verdict_of(self, t: Sequence[int]) -> TupleVerdict:
        t = tuple(t)
        for v in self.verdicts:
            if v.tuple == t:
                return v
        raise KeyError(t)

    def to_json(self) -> dict:
        return {
            "subject": self.subject,
            "handle": self.handle,
            "pool": self.pool,
            "pool_bound": self.pool.get("max_size"),
            "verdicts": [{"tuple": list(v.tuple), "verdict": v.verdict, "source": v.source} for v in self.verdicts],
            "witnesses": {_tuple_key(v.tuple): to_text(v.witness) for v in self.verdicts if v.witness is not None},
            "all_isolated": self.all_isolated,
            "complete": self.complete,
            "notes": list(self.notes),
            **self.extra,
        }


def _pool_info(judge, tuple_len: int) -> dict:
    info = judge.pool(0).describe()
    info["free_variables"] = f"0..{tuple_len}"
    info["exact_types"] = judge.exact
    info["formulas"] = {str(m): len(judge.pool(m)) for m in range(tuple_len + 1)}
    info["truncated"] = any(judge.pool(m).truncated for m in range(tuple_len + 1))
    if not judge.exact:
        info["type_bound"] = judge.type_bound
    return info


def _verdicts(judge, tuples: Iterable[tuple[int, ...]], preferred: Mapping | None, notes: list[str]) -> list[TupleVerdict]:
    out = []
    for t in tuples:
        if preferred is not None and t in preferred:
            theta = preferred[t]
            if judge.isolates_tuple(theta, t):
                out.append(TupleVerdict(t, ISOLATED, theta, "preferred"))
                continue
            notes.append(f"preferred isolator fails for tuple ({_tuple_key(t)})")
        theta, src = judge.isolator(t)
        if theta is not None:
            out.append(TupleVerdict(t, ISOLATED, theta, src))
        else:
            out.append(TupleVerdict(t, NOT_ISOLATED if judge.exact else UNKNOWN, None, src))
    return out


def is_atomic(
    M: FiniteStructure,
    T=None,
    pool_size: int = 10,
    tuple_len: int = 3,
    quantifier_depth: int = 1,
    elements: Sequence[int] | None = None,
    preferred: Mapping[tuple[int, ...], Formula] | None = None,
    max_formulas: int = 5000,
    type_bound: int = 3,
) -> AtomicityReport:
    """Isolation verdict for every tuple of length <= tuple_len (from `elements` if given).

    T defaults to the complete theory of M.  `preferred` maps tuples to
    candidate isolators that are tried before the pool.
    """
    if T is None:
        T = CompleteTheory(M)
    judge = _judge_for(T, M, pool_size, quantifier_depth, max_formulas, type_bound)
    elems = list(range(M.size)) if elements is None else sorted(set(elements))
    if any(not (0 <= a < M.size) for a in elems):
        raise LogicError("elements outside the universe")
    tuples = [t for k in range(tuple_len + 1) for t in itertools.product(elems, repeat=k)]
    notes: list[str] = []
    verdicts = _verdicts(judge, tuples, preferred, notes)
    subject = {"size": M.size, "elements": elems}
    return AtomicityReport(subject, T.describe(), _pool_info(judge, tuple_len), verdicts, True, notes)


@dataclass
class DensityReport:
    handle: dict
    pool: dict
    entries: list[dict]
    vacuous: bool = False

    @property
    def dense(self) -> bool | None:
        """True if every consistent pool formula has an isolated strengthening, None if undecided."""
        if self.vacuous:
            return True
        if all(e["verdict"] == "dense" for e in self.entries):
            return True
        return None

    def to_json(self) -> dict:
        return {
            "handle": self.handle,
            "pool": self.pool,
            "pool_bound": self.pool.get("max_size"),
            "vacuous": self.vacuous,
            "dense": self.dense,
            "entries": self.entries,
        }


def isolated_types_dense(
    T,
    pool_size: int = 6,
    tuple_len: int = 1,
    quantifier_depth: int = 1,
    scott_fallback: bool = True,
    max_formulas: int = 5000,
    type_bound: int = 3,
) -> DensityReport:
    """For each consistent pool formula phi, look for theta with T |- theta -> phi isolating a complete type."""
    if not T.is_consistent():
        return DensityReport(T.describe(), {"max_size": pool_size, "free_variables": tuple_len}, [], vacuous=True)
    M = T.M if isinstance(T, CompleteTheory) else None
    judge = _judge_for(T, M, pool_size, quantifier_depth, max_formulas, type_bound)
    pool = judge.pool(tuple_len)
    entries = []
    for phi in pool.formulas:
        if not judge.consistent(phi, tuple_len):
            continue
        got = judge.choose(phi, tuple_len, fallback=scott_fallback)
        if got is None:
            entries.append({"formula": to_text(phi), "verdict": UNKNOWN})
        else:
            theta, src = got
            entries.append({"formula": to_text(phi), "verdict": "dense", "isolator": to_text(theta), "source": src})
    info = pool.describe()
    info["exact_types"] = judge.exact
    if not judge.exact:
        info["type_bound"] = type_bound
    return DensityReport(T.describe(), info, entries)


def image_isolators(
    M: FiniteStructure, tuple_len: int = 2, C: CompiledTheory | None = None
) -> tuple[CompiledTheory, FiniteStructure, dict[tuple[int, ...], Formula]]:
    """Compile the Scott sentence of M and pair each tuple of H(M) with the relation atom of its stage-beta formula.

    Returns (compiled theory, H(M), tuple -> R_phi atom) for tuples of length
    at most tuple_len.  Feed the map to is_atomic as `preferred` to check the
    atoms against the complete theory of H(M).
    """
    ps = refine_to_fixpoint(M, ScottSession())
    if C is None:
        C = compile_sentence(scott_sentence_from(ps), M.signature)
    N = transform_structure(M, C)
    atoms = {
        t: C.relation_atom(ps.formula(t, ps.beta))
        for k in range(tuple_len + 1)
        for t in itertools.product(range(M.size), repeat=k)
    }
    return C, N, atoms


def image_atomicity(M: FiniteStructure, tuple_len: int = 2) -> AtomicityReport:
    """Is every tuple of H(M) isolated by the relation atom of its stage-beta formula?

    Checked against the complete theory of H(M), where isolation means the
    atom's extension is exactly the tuple's automorphism orbit.  No formula
    pool is built, only the candidate atoms are tried.
    """
    C, N, atoms = image_isolators(M, tuple_len)
    judge = _FiniteJudge(N, 1, 0, 0)
    verdicts = [
        TupleVerdict(t, ISOLATED if judge.isolates_tuple(a, t) else NOT_ISOLATED, a, "stage-beta relation")
        for t, a in atoms.items()
    ]
    subject = {"size": M.size, "image_symbols": len(C.symbols)}
    pool = {"candidates": "relation atom of the stage-beta formula", "free_variables": f"0..{tuple_len}", "exact_types": True}
    return AtomicityReport(subject, CompleteTheory(N).describe(), pool, verdicts)


# ---------------------------------------------------------------------------
# greedy construction of atomic sets


@dataclass
class Extension:
    element: int
    chain: list[tuple[Formula, str]]
    enumeration: list[int]

    def to_json(self) -> dict:
        return {
            "element": self.element,
            "enumeration": self.enumeration,
            "chain": [{"formula": to_text(f), "source": s} for f, s in self.chain],
        }


def _check_parameters(phi: Formula, b: Sequence[int], M: FiniteStructure) -> None:
    check_signature(phi, M.signature)
    allowed = set(range(len(b) + 1))
    if not phi.free <= allowed:
        raise LogicError("phi may only use x0 (the new element) and x1..xm (the parameters) freely")


def _extend(judge, M: FiniteStructure, A: Sequence[int], b: Sequence[int], phi: Formula, fallback: bool) -> Extension:
    _check_parameters(phi, b, M)
    if any(x not in A for x in b):
        raise LogicError("parameters must come from the atomic set")
    head: list[int] = []
    for x in b:
        if x not in head:
            head.append(x)
    enum = head + [a for a in dict.fromkeys(A) if a not in head]
    n0, N = len(head), len(enum)
    ev = judge.ev
    env = {j + 1: x for j, x in enumerate(b)}
    if not any(ev._eval(phi, {**env, 0: c}) for c in range(M.size)):
        raise LogicError("the structure has no witness for phi over the parameters")
    free_map = {0: 0}
    free_map.update({1 + j: 1 + enum.index(x) for j, x in enumerate(b)})
    moved = rename_variables(phi, free_map, N - len(b), len(b) + 1)

    def theta_of(i: int) -> Formula:
        # isolator of the first i enumerated elements, on variables x1..xi
        theta, _ = judge.isolator(tuple(enum[:i]))
        if theta is None:
            raise LogicError(f"no isolator at the bound for the first {i} enumerated elements")
        return rename_variables(theta, {v: v + 1 for v in range(i)}, 1, i)

    chain: list[tuple[Formula, str]] = []
    chi = Conj((moved, theta_of(n0)))
    for i in range(n0, N + 1):
        if i > n0:
            chi = Conj((chain[-1][0], theta_of(i)))
        got = judge.choose(chi, i + 1, fallback=fallback)
        if got is None:
            raise LogicError(f"no isolating formula at the bound for chain step {i}")
        chain.append(got)
    psi = chain[-1][0]
    rest = {1 + j: x for j, x in enumerate(enum)}
    for c in range(M.size):
        if ev._eval(psi, {**rest, 0: c}):
            break
    else:
        raise LogicError("the structure realizes no completion of the chain over the set")
    if not ev._eval(phi, {**env, 0: c}):
        raise AssertionError("chain witness does not satisfy phi")
    return Extension(c, chain, enum)


def extend_atomic(
    A: Sequence[int],
    b: Sequence[int],
    phi: Formula,
    M: FiniteStructure,
    T=None,
    pool_size: int = 6,
    quantifier_depth: int = 1,
    scott_fallback: bool = True,
    max_formulas: int = 5000,
    type_bound: int = 3,
) -> Extension:
    """An element c with M |= phi(c, b) such that A + c stays atomic.

    phi uses x0 for the new element and x1..xm for b.  The set A is
    enumerated with the distinct entries of b first; the chain psi_i is
    computed up to |A| and c is the least element realizing its last link.
    """
    if T is None:
        T = CompleteTheory(M)
    judge = _judge_for(T, M, pool_size, quantifier_depth, max_formulas, type_bound)
    return _extend(judge, M, list(A), list(b), phi, scott_fallback)


def build_atomic_set(
    M: FiniteStructure,
    T=None,
    budget: int = 1000,
    pool_size: int = 6,
    max_params: int = 1,
    tuple_len: int = 3,
    quantifier_depth: int = 1,
    scott_fallback: bool = True,
    max_formulas: int = 5000,
    type_bound: int = 3,
) -> tuple[AtomicityReport, list[int]]:
    """Close a set under witnesses of pool formulas, adding elements by extend_atomic.

    For every pool formula phi(x0, x1..xm) with m <= max_params and every
    parameter tuple b from the set, if M has a witness of phi(x, b) the set
    must contain one.  budget bounds the number of added elements; running
    out leaves a partial set flagged incomplete.
    """
    if T is None:
        T = CompleteTheory(M)
    judge = _judge_for(T, M, pool_size, quantifier_depth, max_formulas, type_bound)
    n = M.size
    N: list[int] = []
    trace: list[dict] = []
    complete = True
    changed = True
    while changed and complete:
        changed = False
        for m in range(max_params + 1):
            for phi in judge.pool(m + 1).formulas:
                mask = judge.mask(phi, m + 1)
                for bt in itertools.product(N, repeat=m):
                    base = tuple_index((0,) + bt, n)
                    wit = [c for c in range(n) if mask >> (base + c) & 1]
                    if not wit or any(c in N for c in wit):
                        continue
                    if len(N) >= budget:
                        complete = False
                        break
                    ext = _extend(judge, M, N, list(bt), phi, scott_fallback)
                    N.append(ext.element)
                    trace.append({"formula": to_text(phi), "parameters": list(bt), "added": ext.element})
                    changed = True
                if not complete:
                    break
            if not complete:
                break
    notes = [] if complete else ["budget exhausted before closure"]
    tuples = [t for k in range(tuple_len + 1) for t in itertools.product(sorted(N), repeat=k)]
    verdicts = _verdicts(judge, tuples, None, notes)
    extra = {"set": sorted(N), "added_order": list(N), "trace": trace, "max_params": max_params}
    if not judge.exact:
        extra["saturation_gaps"] = [
            to_text(phi) for phi in judge.pool(1).formulas if judge.consistent(phi, 1) and judge.mask(phi, 1) == 0
        ]
    report = AtomicityReport({"size": n, "elements": sorted(N)}, T.describe(), _pool_info(judge, max(tuple_len, max_params + 1)), verdicts, complete, notes, extra)
    return report, sorted(N)


def witness_closed(M: FiniteStructure, N: Sequence[int], pool: FormulaPool, max_params: int) -> bool:
    """Every pool formula phi(x0, b) with b from N and a witness in M has one in N."""
    ev = Evaluator(M)
    inside = set(N)
    for phi in pool.formulas:
        if not phi.free <= set(range(max_params + 1)):
            continue
        m = max(phi.free, default=0)
        for bt in itertools.product(sorted(inside), repeat=m):
            env = {j + 1: x for j, x in enumerate(bt)}
            wit = [c for c in range(M.size) if ev._eval(phi, {**env, 0: c})]
            if wit and not inside.intersection(wit):
                return False
    return True


# ---------------------------------------------------------------------------
# algebraic closure surrogate


@dataclass
class AclReport:
    base: list[int]
    closure: list[int]
    orbit_sizes: dict[int, int]
    threshold: int | None
    atomic: bool

    def to_json(self) -> dict:
        return {
            "surrogate": "orbit size under automorphisms fixing the base pointwise",
            "base": self.base,
            "closure": self.closure,
            "orbit_sizes": {str(k): v for k, v in sorted(self.orbit_sizes.items())},
            "threshold": self.threshold,
            "atomic": self.atomic,
        }


def acl_atomic_check(M: FiniteStructure, A: Sequence[int], threshold: int | None = None, tuple_len: int = 2, pool_size: int = 4) -> AclReport:
    """Algebraic-closure surrogate of A, then an atomicity re-check of the closure.

    b is algebraic over A when its orbit under the automorphisms fixing A
    pointwise has size at most threshold; threshold None counts every finite
    orbit, which in a finite structure is all of them.
    """
    base = sorted(set(A))
    if any(not (0 <= a < M.size) for a in base):
        raise LogicError("base set outside the universe")
    fixing = [g for g in automorphisms(M) if all(g[a] == a for a in base)]
    sizes = {b: len({g[b] for g in fixing}) for b in range(M.size)}
    closure = sorted(b for b in range(M.size) if b in base or threshold is None or sizes[b] <= threshold)
    report = is_atomic(M, None, pool_size=pool_size, tuple_len=tuple_len, elements=closure)
    return AclReport(base, closure, sizes, threshold, report.all_isolated)


__all__ = [
    "image_atomicity",
    "image_isolators",
    "AclReport",
    "AtomicityReport",
    "DensityReport",
    "Extension",
    "FormulaPool",
    "IsolationCertificate",
    "TupleVerdict",
    "acl_atomic_check",
    "assignments",
    "build_atomic_set",
    "certify",
    "extend_atomic",
    "is_atomic",
    "isolated_types_dense",
    "isolates",
    "tuple_index",
    "type_in_pool",
    "witness_closed",
]
