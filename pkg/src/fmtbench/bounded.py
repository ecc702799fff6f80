"""First-order theories under bounded-model semantics, decided by SAT.

A query asks whether some structure of size 1..k satisfies the theory plus
extra sentences.  All sizes are handled by one propositional encoding: the
domain is 0..k-1 with "active" flags a_0 >= a_1 >= ... (a_0 forced), and
quantifiers range over active elements only.  Every model of size d <= k
corresponds to assignments with exactly the first d elements active, and
vice versa, so satisfiability of the encoding is exactly bounded consistency.

Axioms are attached to selector literals, so handles that extend each other
share one incremental solver.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from pysat.solvers import Solver

from .logic import (
    Atom,
    Conj,
    Equal,
    Evaluator,
    FiniteStructure,
    Formula,
    LogicError,
    Not,
    Signature,
    canonical_digest,
    check_signature,
    to_text,
)


class _Grounder:
    def __init__(self, signature: Signature, k: int, solver_name: str = "g4"):
        if k < 1:
            raise LogicError("the model-size bound must be at least 1")
        self.sig = signature
        self.k = k
        self.solver = Solver(name=solver_name)
        self.nvars = 0
        self.active = [self._fresh() for _ in range(k)]
        self.solver.add_clause([self.active[0]])
        for e in range(1, k):
            self.solver.add_clause([-self.active[e], self.active[e - 1]])
        self.atom_vars: dict[tuple, int] = {}
        self.memo: dict[tuple, int | bool] = {}
        self.selectors: dict[Formula, int] = {}
        self.permanent: set[Formula] = set()
        self.calls = 0
        self._by_symbol: dict[str, list] = {}
        self._by_symbol_count: dict = {}

    def _fresh(self) -> int:
        self.nvars += 1
        return self.nvars

    def atom(self, name: str, args: tuple[int, ...]) -> int:
        key = (name, args)
        v = self.atom_vars.get(key)
        if v is None:
            v = self._fresh()
            self.atom_vars[key] = v
        return v

    def encode(self, node: Formula, env: dict[int, int]):
        """Literal (int) or constant (bool) equivalent to node under env."""
        if isinstance(node, Atom):
            return self.atom(node.symbol, tuple(env[v] for v in node.args))
        if isinstance(node, Equal):
            return env[node.left] == env[node.right]
        key = (node, tuple(env[v] for v in sorted(node.free)))
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Not):
            c = self.encode(node.child, env)
            out = (not c) if isinstance(c, bool) else -c
        elif isinstance(node, Conj):
            # frozenset order follows string hashes; fix it so variable numbering is reproducible
            out = self._and([self.encode(c, env) for c in sorted(node.items, key=canonical_digest)])
        else:
            saved = env.get(node.var)
            terms = []
            for e in range(self.k):
                env[node.var] = e
                terms.append(self._and([self.active[e], self.encode(node.child, env)]))
            if saved is None:
                env.pop(node.var, None)
            else:
                env[node.var] = saved
            out = self._or(terms)
        self.memo[key] = out
        return out

    def _and(self, lits):
        real = []
        for l in lits:
            if l is False:
                return False
            if l is True:
                continue
            real.append(l)
        real = sorted(set(real))
        if not real:
            return True
        if len(real) == 1:
            return real[0]
        if any(-l in real for l in real):
            return False
        g = self._fresh()
        for l in real:
            self.solver.add_clause([-g, l])
        self.solver.add_clause([g] + [-l for l in real])
        return g

    def _or(self, lits):
        neg = self._and([(not l) if isinstance(l, bool) else -l for l in lits])
        return (not neg) if isinstance(neg, bool) else -neg

    def sentence_literal(self, sentence: Formula):
        return self.encode(sentence, {})

    def assert_permanently(self, axiom: Formula) -> None:
        lit = self.sentence_literal(axiom)
        if lit is False:
            self.solver.add_clause([-self.active[0]])
        elif lit is not True:
            self.solver.add_clause([lit])
        self.permanent.add(axiom)

    def selector(self, axiom: Formula) -> int | None:
        if axiom in self.permanent:
            return None
        s = self.selectors.get(axiom)
        if s is None:
            s = self._fresh()
            lit = self.sentence_literal(axiom)
            if lit is False:
                self.solver.add_clause([-s])
            elif lit is not True:
                self.solver.add_clause([-s, lit])
            self.selectors[axiom] = s
        return s

    def solve(self, assumptions: Sequence[int]) -> bool:
        self.calls += 1
        return bool(self.solver.solve(assumptions=list(assumptions)))

    def model_size(self) -> int:
        model = set(l for l in self.solver.get_model() if l > 0)
        return sum(1 for a in self.active if a in model)

    def extract_model(self) -> FiniteStructure:
        """The structure on the active elements described by the last satisfying assignment."""
        model = self.solver.get_model()
        size = len(model)
        d = sum(1 for a in self.active if model[a - 1] > 0)
        if len(self._by_symbol_count) != len(self.atom_vars):
            grouped: dict[str, list] = {name: [] for name, _ in self.sig.relations}
            for (name, args), var in self.atom_vars.items():
                grouped[name].append((max(args, default=-1), args, var))
            self._by_symbol = grouped
            self._by_symbol_count = dict.fromkeys(self.atom_vars)
        tables = {name: frozenset() for name, _ in self.sig.relations}
        for name, rows in self._by_symbol.items():
            tables[name] = frozenset(
                args for top, args, var in rows if top < d and var <= size and model[var - 1] > 0
            )
        return FiniteStructure.trusted(self.sig, d, tables)


class BoundedTheory:
    """Axiom list plus a model-size bound k; consistent = has a model of size <= k."""

    kind = "bounded"

    def __init__(self, signature: Signature, axioms: Iterable[Formula], k: int = 4, _grounder: _Grounder | None = None):
        self._signature = signature
        self.axioms: tuple[Formula, ...] = tuple(dict.fromkeys(axioms))
        for a in self.axioms:
            if a.free:
                raise LogicError(f"axiom has free variables: {to_text(a)}")
            check_signature(a, signature)
        self.k = k
        if _grounder is None:
            # the root handle's axioms hold in every handle sharing this solver
            _grounder = _Grounder(signature, k)
            for a in self.axioms:
                _grounder.assert_permanently(a)
        self._g = _grounder
        missing = _grounder.permanent - set(self.axioms)
        if missing:
            raise LogicError("a shared solver can only serve extensions of its root theory")
        self._sel = [s for s in (self._g.selector(a) for a in self.axioms) if s is not None]
        self._consistent: bool | None = None
        self.models: list[FiniteStructure] = []

    def _remember(self) -> None:
        M = self._g.extract_model()
        self.models.append(M)

    @property
    def signature(self) -> Signature:
        return self._signature

    @property
    def solver_calls(self) -> int:
        return self._g.calls

    def extend(self, new_axioms: Iterable[Formula]) -> "BoundedTheory":
        new_axioms = tuple(new_axioms)
        out = BoundedTheory(self._signature, self.axioms + new_axioms, self.k, self._g)
        for M in self.models:
            ev = Evaluator(M)
            if all(ev.holds(a, {}) for a in new_axioms):
                out.models.append(M)
        return out

    def witness_models(self) -> list[FiniteStructure]:
        """Models of the theory (size <= k) found by earlier queries."""
        return self.models

    def _query(self, extra: Iterable[Formula]) -> bool:
        assumptions = list(self._sel)
        for s in extra:
            if s.free:
                raise LogicError("theory queries take sentences")
            check_signature(s, self._signature)
            lit = self._g.sentence_literal(s)
            if lit is False:
                return False
            if lit is True:
                continue
            assumptions.append(lit)
        ok = self._g.solve(assumptions)
        if ok:
            self._remember()
        return ok

    def is_consistent(self) -> bool:
        if self._consistent is None:
            self._consistent = self._query(())
        return self._consistent

    def consistent_with(self, sentences: Iterable[Formula] = ()) -> bool:
        return self._query(sentences)

    def entails(self, sentence: Formula) -> bool:
        return not self._query([Not(sentence)])

    def model_size_witness(self, sentences: Iterable[Formula] = ()) -> int | None:
        """Size of some model of the theory plus `sentences`, or None."""
        if not self._query(sentences):
            return None
        return self._g.model_size()

    def describe(self) -> dict:
        return {
            "kind": "bounded",
            "semantics": f"consistency and entailment over all models of size 1..{self.k} (SAT grounding)",
            "k": self.k,
            "axioms": len(self.axioms),
        }


__all__ = ["BoundedTheory"]
