"""Back-and-forth formulas, stabilization stage and Scott sentences of finite structures.

Only tuples of distinct elements of length at most n are refined.  A tuple
with repetitions gets the formula

    And{x_f = x_i for each repeated position i with first occurrence f,
        rho(phi_{alpha, d})}

where d is the tuple of first occurrences and rho renames d's variables onto
their positions (shifting bound variables past the new free ones).  For the
one-step extension t + (t_i,) of a distinct tuple t, rho is the identity, so
the successor clause only ever needs And{x_i = x_k, phi_{alpha,t}}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

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
    Forall,
    Implies,
    canonical_digest,
    forall_many,
)


class ResourceLimitExceeded(RuntimeError):
    pass


class ScottSession:
    """Memo tables shared across structures.

    Stage formulas are keyed by the data that determines them (the previous
    stage formula of the tuple and the set of previous stage formulas of its
    one-point extensions), so each distinct formula is built once per session.
    """

    def __init__(self, max_stage: int | None = None):
        self.max_stage = max_stage
        self._stage0: dict[tuple, Formula] = {}
        self._succ: dict[tuple, Formula] = {}
        self._literals: dict[tuple, tuple] = {}

    def literal_table(self, sig, k: int) -> tuple:
        """(atom, negated atom, symbol, variable tuple) for every atom over x0..x(k-1)."""
        key = (sig, k)
        hit = self._literals.get(key)
        if hit is None:
            rows = []
            for name, arity in sig.relations:
                for args in itertools.product(range(k), repeat=arity):
                    a = Atom(name, args)
                    rows.append((a, Not(a), name, args))
            # x_i = x_i is vacuous and x_j = x_i repeats x_i = x_j
            for i in range(k):
                for j in range(i + 1, k):
                    e = Equal(i, j)
                    rows.append((e, Not(e), None, (i, j)))
            hit = tuple(rows)
            self._literals[key] = hit
        return hit

    def stage0(self, M: FiniteStructure, t: tuple[int, ...]) -> Formula:
        rows = self.literal_table(M.signature, len(t))
        tables = M.tables
        bits = []
        for _, _, name, args in rows:
            vals = tuple(t[v] for v in args)
            if name is None:
                bits.append(vals[0] == vals[1])
            else:
                bits.append(vals in tables[name])
        key = (M.signature, len(t), tuple(bits))
        node = self._stage0.get(key)
        if node is None:
            node = Conj(pos if b else neg for (pos, neg, _, _), b in zip(rows, bits))
            self._stage0[key] = node
        return node

    def successor(self, k: int, prev: Formula, new_ext: frozenset) -> Formula:
        key = (k, prev, new_ext)
        node = self._succ.get(key)
        if node is None:
            options = set(new_ext)
            options.update(repeat_extension(prev, i, k) for i in range(k))
            node = Conj(
                (
                    prev,
                    Forall(k, Or(options)),
                    Conj(Exists(k, f) for f in options),
                )
            )
            self._succ[key] = node
        return node


def repeat_extension(phi: Formula, i: int, k: int) -> Formula:
    """Formula of the tuple t + (t_i,) given phi = phi_{alpha,t} with |t| = k."""
    return Conj((Equal(i, k), phi))


_DEFAULT_SESSION = None


def default_session() -> ScottSession:
    global _DEFAULT_SESSION
    if _DEFAULT_SESSION is None:
        _DEFAULT_SESSION = ScottSession()
    return _DEFAULT_SESSION


def duplicate_pattern(t: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(deduplicated tuple, position of each entry's first occurrence index in the dedup)."""
    dedup: list[int] = []
    where: dict[int, int] = {}
    pattern = []
    for a in t:
        if a not in where:
            where[a] = len(dedup)
            dedup.append(a)
        pattern.append(where[a])
    return tuple(dedup), tuple(pattern)


def rename_variables(phi: Formula, free_map: dict[int, int], bound_shift: int, cutoff: int) -> Formula:
    """Rename variables v < cutoff by free_map and v >= cutoff to v + bound_shift."""
    memo: dict[Formula, Formula] = {}

    def ren(v: int) -> int:
        return free_map[v] if v < cutoff else v + bound_shift

    def go(node: Formula) -> Formula:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Atom):
            out = Atom(node.symbol, tuple(ren(v) for v in node.args))
        elif isinstance(node, Equal):
            out = Equal(ren(node.left), ren(node.right))
        elif isinstance(node, Not):
            out = Not(go(node.child))
        elif isinstance(node, Exists):
            out = Exists(ren(node.var), go(node.child))
        else:
            out = Conj(go(c) for c in node.items)
        memo[node] = out
        return out

    return go(phi)


@dataclass
class PartitionSystem:
    """Stage formulas of all distinct tuples of length <= n, for stages 0..beta+1."""

    structure: FiniteStructure
    beta: int
    stages: list[dict[tuple[int, ...], Formula]] = field(repr=False)

    @property
    def cap(self) -> int:
        return self.structure.size

    def formula(self, t: Sequence[int], alpha: int) -> Formula:
        t = tuple(t)
        n = self.structure.size
        if any(not (0 <= a < n) for a in t):
            raise LogicError(f"tuple {t} out of range for a structure of size {n}")
        if alpha >= len(self.stages):
            raise LogicError(f"stage {alpha} was not computed (beta = {self.beta})")
        dedup, pattern = duplicate_pattern(t)
        base = self.stages[alpha][dedup]
        if len(dedup) == len(t):
            return base
        d, m = len(dedup), len(t)
        first_pos = {}
        for pos, p in enumerate(pattern):
            first_pos.setdefault(p, pos)
        free_map = {j: first_pos[j] for j in range(d)}
        if all(free_map[j] == j for j in range(d)):
            renamed = base
        else:
            renamed = rename_variables(base, free_map, m - d, d)
        eqs = [Equal(first_pos[p], pos) for pos, p in enumerate(pattern) if first_pos[p] != pos]
        return Conj(eqs + [renamed])

    def class_key(self, t: Sequence[int], alpha: int):
        """A key whose equality coincides with equality of stage formulas."""
        dedup, pattern = duplicate_pattern(t)
        return (pattern, self.stages[alpha][dedup])

    def classes(self, alpha: int, k: int) -> list[list[tuple[int, ...]]]:
        """Partition of M^k at stage alpha, classes sorted, ordered by least tuple."""
        groups: dict = {}
        for t in itertools.product(range(self.structure.size), repeat=k):
            groups.setdefault(self.class_key(t, alpha), []).append(t)
        return sorted(groups.values(), key=lambda c: c[0])

    def distinct_classes(self, alpha: int, k: int) -> list[list[tuple[int, ...]]]:
        groups: dict = {}
        for t, f in self.stages[alpha].items():
            if len(t) == k:
                groups.setdefault(f, []).append(t)
        return sorted((sorted(c) for c in groups.values()), key=lambda c: c[0])

    def class_counts(self, alpha: int) -> list[int]:
        """Number of stage-alpha classes of distinct k-tuples, for k = 0..n."""
        counts = [set() for _ in range(self.structure.size + 1)]
        for t, f in self.stages[alpha].items():
            counts[len(t)].add(f)
        return [len(c) for c in counts]


def refine_to_fixpoint(M: FiniteStructure, session: ScottSession | None = None) -> PartitionSystem:
    session = session or default_session()
    n = M.size
    tuples_by_len = [list(itertools.permutations(range(n), k)) for k in range(n + 1)]
    current = {t: session.stage0(M, t) for ts in tuples_by_len for t in ts}
    stages = [current]
    counts = _counts(current, n)
    alpha = 0
    while True:
        if session.max_stage is not None and alpha >= session.max_stage:
            raise ResourceLimitExceeded(f"refinement exceeded {session.max_stage} stages")
        nxt: dict[tuple[int, ...], Formula] = {}
        for k in range(n + 1):
            for t in tuples_by_len[k]:
                used = set(t)
                new_ext = frozenset(current[t + (b,)] for b in range(n) if b not in used)
                nxt[t] = session.successor(k, current[t], new_ext)
        stages.append(nxt)
        nxt_counts = _counts(nxt, n)
        if nxt_counts == counts:
            return PartitionSystem(M, alpha, stages)
        current, counts = nxt, nxt_counts
        alpha += 1


def _counts(stage: dict, n: int) -> list[int]:
    buckets = [set() for _ in range(n + 1)]
    for t, f in stage.items():
        buckets[len(t)].add(f)
    return [len(b) for b in buckets]


def stage_formula(M: FiniteStructure, t: Sequence[int], alpha: int, session: ScottSession | None = None) -> Formula:
    """phi_{alpha, t} for any tuple of elements of M (repetitions allowed)."""
    ps = refine_to_fixpoint(M, session)
    session = session or default_session()
    while alpha >= len(ps.stages):
        prev = ps.stages[-1]
        n = M.size
        nxt = {}
        for t2, f in prev.items():
            used = set(t2)
            new_ext = frozenset(prev[t2 + (b,)] for b in range(n) if b not in used)
            nxt[t2] = session.successor(len(t2), f, new_ext)
        ps.stages.append(nxt)
    return ps.formula(t, alpha)


def scott_sentence_from(ps: PartitionSystem) -> Formula:
    beta = ps.beta
    stage_b, stage_b1 = ps.stages[beta], ps.stages[beta + 1]
    # tuples of different lengths may share a formula (e.g. true), so key by length too
    reps: dict[tuple[int, Formula], tuple[int, ...]] = {}
    for t in sorted(stage_b, key=lambda t: (len(t), t)):
        reps.setdefault((len(t), stage_b[t]), t)
    clauses = []
    for (k, f), t in reps.items():
        clauses.append(forall_many(range(k), Implies(f, stage_b1[t])))
    return Conj((stage_b[()], Conj(clauses)))


def scott_sentence(M: FiniteStructure, session: ScottSession | None = None) -> Formula:
    return scott_sentence_from(refine_to_fixpoint(M, session))


@dataclass(frozen=True)
class ScottInvariant:
    digest: str
    beta: int
    class_counts: tuple[int, ...]

    def as_json(self) -> dict:
        return {
            "beta": self.beta,
            "class_counts": list(self.class_counts),
            "digest_length": len(self.digest),
            "fingerprint": _fingerprint(self.digest),
        }


def _fingerprint(text: str) -> str:
    import hashlib

    return hashlib.sha256(text.encode()).hexdigest()[:16]


def scott_invariant(M: FiniteStructure, session: ScottSession | None = None) -> ScottInvariant:
    ps = refine_to_fixpoint(M, session)
    sc = scott_sentence_from(ps)
    return ScottInvariant(canonical_digest(sc), ps.beta, tuple(ps.class_counts(ps.beta)))


def iso_via_invariant(M: FiniteStructure, N: FiniteStructure, session: ScottSession | None = None) -> bool:
    """True iff the Scott sentences of M and N are equal under set semantics.

    Hash-consed nodes are equal exactly when their canonical digests are, so
    the comparison is by identity; digest_equal below gives the string route.
    """
    if M.signature != N.signature:
        raise LogicError("structures have different signatures")
    return scott_sentence(M, session) is scott_sentence(N, session)


def iso_via_digest(M: FiniteStructure, N: FiniteStructure, session: ScottSession | None = None) -> bool:
    if M.signature != N.signature:
        raise LogicError("structures have different signatures")
    return canonical_digest(scott_sentence(M, session)) == canonical_digest(scott_sentence(N, session))


def check_models_scott(N: FiniteStructure, sc: Formula) -> bool:
    if sc.free:
        raise LogicError("the Scott sentence has free variables")
    return Evaluator(N).holds(sc, {})


__all__ = [
    "PartitionSystem",
    "ResourceLimitExceeded",
    "ScottInvariant",
    "ScottSession",
    "check_models_scott",
    "duplicate_pattern",
    "iso_via_digest",
    "iso_via_invariant",
    "refine_to_fixpoint",
    "rename_variables",
    "repeat_extension",
    "scott_invariant",
    "scott_sentence",
    "scott_sentence_from",
    "stage_formula",
]
