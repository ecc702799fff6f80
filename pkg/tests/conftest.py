"""Shared builders, independent oracles and hypothesis strategies."""

from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import strategies as st

from fmtbench.logic import (
    Atom,
    Conj,
    Equal,
    Exists,
    FiniteStructure,
    Not,
    Signature,
)

R2 = Signature({"R": 2})
PR = Signature({"P": 1, "R": 2})


def graph(n: int, edges, sig: Signature = R2) -> FiniteStructure:
    return FiniteStructure(sig, n, {"R": list(edges)})


def chain(n: int) -> FiniteStructure:
    """Successor chain 0 -> 1 -> ... -> n-1."""
    return graph(n, [(i, i + 1) for i in range(n - 1)])


def antichain(n: int) -> FiniteStructure:
    return graph(n, [])


def cycle(n: int) -> FiniteStructure:
    """Symmetric cycle graph."""
    edges = set()
    for i in range(n):
        j = (i + 1) % n
        edges |= {(i, j), (j, i)}
    return graph(n, sorted(edges))


def naive_eval(M: FiniteStructure, phi, env: dict) -> bool:
    """Plain recursive satisfaction, written independently of the library evaluator."""
    if isinstance(phi, Atom):
        return tuple(env[v] for v in phi.args) in M.tables[phi.symbol]
    if isinstance(phi, Equal):
        return env[phi.left] == env[phi.right]
    if isinstance(phi, Not):
        return not naive_eval(M, phi.child, env)
    if isinstance(phi, Conj):
        return all(naive_eval(M, c, env) for c in phi.items)
    if isinstance(phi, Exists):
        return any(naive_eval(M, phi.child, {**env, phi.var: a}) for a in range(M.size))
    raise TypeError(phi)


def structural(phi):
    """Set-normalized structural key: the referee for digest equality."""
    if isinstance(phi, Atom):
        return ("A", phi.symbol, phi.args)
    if isinstance(phi, Equal):
        return ("E", phi.left, phi.right)
    if isinstance(phi, Not):
        return ("N", structural(phi.child))
    if isinstance(phi, Exists):
        return ("X", phi.var, structural(phi.child))
    return ("C", frozenset(structural(c) for c in phi.items))


def naive_orbits(M: FiniteStructure, k: int) -> list[list[tuple]]:
    """Orbits of M^k under automorphisms found by scanning all permutations directly."""
    autos = []
    for perm in itertools.permutations(range(M.size)):
        if all(
            {tuple(perm[v] for v in row) for row in M.tables[name]} == set(M.tables[name]) for name in M.tables
        ):
            autos.append(perm)
    seen: dict[tuple, int] = {}
    classes: list[list[tuple]] = []
    for t in itertools.product(range(M.size), repeat=k):
        if t in seen:
            continue
        orbit = sorted({tuple(p[a] for a in t) for p in autos})
        for u in orbit:
            seen[u] = len(classes)
        classes.append(orbit)
    return sorted(classes, key=lambda c: c[0])


def random_structure(rng: random.Random, sig: Signature, n: int, density: float = 0.5) -> FiniteStructure:
    tables = {}
    for name, arity in sig.relations:
        tables[name] = [row for row in itertools.product(range(n), repeat=arity) if rng.random() < density]
    return FiniteStructure(sig, n, tables)


def random_formula(rng: random.Random, depth: int, nvars: int = 3, sig: Signature = PR, sentence_vars: int = 0):
    """Random formula over sig with variables x0..x(nvars-1)."""
    if depth == 0 or rng.random() < 0.25:
        name, arity = rng.choice(sig.relations)
        if rng.random() < 0.15:
            return Equal(rng.randrange(nvars), rng.randrange(nvars))
        return Atom(name, tuple(rng.randrange(nvars) for _ in range(arity)))
    kind = rng.choice(("not", "and", "exists", "exists"))
    if kind == "not":
        return Not(random_formula(rng, depth - 1, nvars, sig))
    if kind == "and":
        return Conj(random_formula(rng, depth - 1, nvars, sig) for _ in range(rng.randint(0, 3)))
    return Exists(rng.randrange(nvars), random_formula(rng, depth - 1, nvars, sig))


def close_sentence(phi):
    for v in sorted(phi.free, reverse=True):
        phi = Exists(v, phi)
    return phi


@st.composite
def formulas(draw, depth: int = 4, nvars: int = 3, sig: Signature = PR):
    if depth == 0:
        choice = draw(st.integers(0, 2))
    else:
        choice = draw(st.integers(0, 5))
    if choice <= 1:
        name, arity = draw(st.sampled_from(sig.relations))
        return Atom(name, tuple(draw(st.integers(0, nvars - 1)) for _ in range(arity)))
    if choice == 2:
        return Equal(draw(st.integers(0, nvars - 1)), draw(st.integers(0, nvars - 1)))
    if choice == 3:
        return Not(draw(formulas(depth - 1, nvars, sig)))
    if choice == 4:
        return Conj(draw(st.lists(formulas(depth - 1, nvars, sig), max_size=3)))
    return Exists(draw(st.integers(0, nvars - 1)), draw(formulas(depth - 1, nvars, sig)))


@st.composite
def structures(draw, sig: Signature = PR, max_n: int = 3):
    n = draw(st.integers(1, max_n))
    tables = {}
    for name, arity in sig.relations:
        rows = list(itertools.product(range(n), repeat=arity))
        mask = draw(st.lists(st.booleans(), min_size=len(rows), max_size=len(rows)))
        tables[name] = [r for r, keep in zip(rows, mask) if keep]
    return FiniteStructure(sig, n, tables)


@pytest.fixture
def rng():
    return random.Random(20240601)
