import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PR, R2, antichain, chain, cycle, formulas, graph, naive_eval, naive_orbits, random_formula, structural
from fmtbench.logic import (
    TRUE,
    Atom,
    Conj,
    Equal,
    Exists,
    FiniteStructure,
    FormulaSyntaxError,
    LogicError,
    Not,
    PartialMap,
    Signature,
    automorphism_orbits,
    canonical_digest,
    evaluate,
    isomorphic_bruteforce,
    parse_formula,
    relationalize_function,
    to_text,
)


# --- signatures and structures


def test_signature_rejects_negative_arity():
    with pytest.raises(LogicError):
        Signature({"R": -1})


def test_zero_ary_symbols_allowed():
    sig = Signature({"Q": 0})
    M = FiniteStructure(sig, 1, {"Q": [()]})
    assert evaluate(M, parse_formula("Q", sig))


def test_structure_rejects_out_of_range_rows():
    with pytest.raises(LogicError):
        FiniteStructure(R2, 2, {"R": [(0, 2)]})


def test_structure_rejects_empty_universe():
    with pytest.raises(LogicError):
        FiniteStructure(R2, 0, {})


def test_relationalize_function_checks_totality():
    graph_rows = relationalize_function(2, 1, [(0, 1), (1, 0)])
    assert graph_rows == frozenset({(0, 1), (1, 0)})
    with pytest.raises(LogicError):
        relationalize_function(2, 1, [(0, 1)])


def test_partial_map_injective():
    with pytest.raises(LogicError):
        PartialMap(((0, 1), (1, 1)), 2, 2)


# --- parsing


def test_parse_atom():
    assert parse_formula("P(x0)", Signature({"P": 1})) is Atom("P", (0,))


def test_parse_deduplicates_conjunction():
    phi = parse_formula("And{P(x0), P(x0)}", Signature({"P": 1}))
    assert phi is Conj([Atom("P", (0,))])
    assert len(phi.items) == 1


def test_parse_exists_over_two_element_conjunction():
    phi = parse_formula("Exists x1 . And{R(x0,x1), Not R(x1,x0)}", R2)
    assert isinstance(phi, Exists) and phi.var == 1
    assert phi.child is Conj([Atom("R", (0, 1)), Not(Atom("R", (1, 0)))])
    assert phi.free == frozenset({0})


def test_parse_errors_carry_positions():
    with pytest.raises(FormulaSyntaxError) as exc:
        parse_formula("And{P(x0), }", Signature({"P": 1}))
    assert exc.value.position == 11
    with pytest.raises(FormulaSyntaxError):
        parse_formula("Q(x0)", Signature({"P": 1}))
    with pytest.raises(FormulaSyntaxError):
        parse_formula("P(x0,x1)", Signature({"P": 1}))


def test_empty_conjunction_is_true():
    assert parse_formula("And{}") is TRUE


@settings(max_examples=300, deadline=None)
@given(formulas(depth=4))
def test_print_parse_round_trip(phi):
    assert parse_formula(to_text(phi), PR) is phi
    assert parse_formula(to_text(phi, sugar=True), PR) is phi


# --- evaluation


def test_one_point_atom():
    M = FiniteStructure(Signature({"P": 1}), 1, {"P": [(0,)]})
    assert evaluate(M, Atom("P", (0,)), {0: 0})


def test_empty_conjunction_true_everywhere():
    assert evaluate(chain(2), Conj([]), {})


def test_two_chain_last_element_has_no_successor():
    assert not evaluate(chain(2), parse_formula("Exists x1 . R(x0,x1)", R2), {0: 1})
    assert evaluate(chain(2), parse_formula("Exists x1 . R(x0,x1)", R2), {0: 0})


def test_evaluate_rejects_unbound_and_foreign_symbols():
    with pytest.raises(LogicError):
        evaluate(chain(2), Atom("R", (0, 1)), {0: 0})
    with pytest.raises(LogicError):
        evaluate(chain(2), Atom("S", (0,)), {0: 0})


def test_evaluator_matches_naive_oracle():
    rng = random.Random(11)
    checked = 0
    for _ in range(1000):
        n = rng.randint(1, 3)
        tables = {
            "P": [(a,) for a in range(n) if rng.random() < 0.5],
            "R": [r for r in itertools.product(range(n), repeat=2) if rng.random() < 0.4],
        }
        M = FiniteStructure(PR, n, tables)
        phi = random_formula(rng, 4)
        for env in itertools.product(range(n), repeat=3):
            asg = dict(enumerate(env))
            assert evaluate(M, phi, asg) == naive_eval(M, phi, asg)
            checked += 1
    assert checked > 1000


# --- isomorphism and orbits


def test_bruteforce_identity_on_antichain():
    assert isomorphic_bruteforce(antichain(2), antichain(2)) == (0, 1)


def test_bruteforce_chain_vs_antichain():
    assert isomorphic_bruteforce(chain(3), antichain(3)) is None


def test_bruteforce_reversed_two_chain():
    assert isomorphic_bruteforce(chain(2), graph(2, [(1, 0)])) == (1, 0)


def test_bruteforce_signature_mismatch():
    with pytest.raises(LogicError):
        isomorphic_bruteforce(chain(2), FiniteStructure(PR, 2, {}))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**9 - 1), st.integers(0, 2**9 - 1))
def test_bruteforce_symmetric(a, b):
    rows = list(itertools.product(range(3), repeat=2))
    M = graph(3, [r for i, r in enumerate(rows) if a >> i & 1])
    N = graph(3, [r for i, r in enumerate(rows) if b >> i & 1])
    assert (isomorphic_bruteforce(M, N) is None) == (isomorphic_bruteforce(N, M) is None)


def test_orbits_examples():
    assert automorphism_orbits(antichain(2), 1) == [[(0,), (1,)]]
    assert automorphism_orbits(chain(2), 1) == [[(0,)], [(1,)]]
    distinct = [c for c in automorphism_orbits(cycle(4), 2) if c[0][0] != c[0][1]]
    diagonal = [c for c in automorphism_orbits(cycle(4), 2) if c[0][0] == c[0][1]]
    assert len(distinct) == 2 and len(diagonal) == 1  # adjacent, opposite; equal
    assert len(automorphism_orbits(cycle(4), 2)) == 3


def test_orbits_of_empty_tuple():
    assert automorphism_orbits(cycle(4), 0) == [[()]]


def test_orbits_match_naive_scan():
    rng = random.Random(5)
    for _ in range(60):
        n = rng.randint(1, 4)
        M = graph(n, [r for r in itertools.product(range(n), repeat=2) if rng.random() < 0.4])
        for k in range(3):
            assert automorphism_orbits(M, k) == naive_orbits(M, k)


# --- digests


def test_digest_is_set_symmetric():
    A, B = Atom("R", (0, 1)), Atom("R", (1, 0))
    assert canonical_digest(Conj([A, B])) == canonical_digest(Conj([B, A]))


def test_singleton_conjunction_differs_from_child():
    A = Atom("R", (0, 1))
    assert canonical_digest(Conj([A])) != canonical_digest(A)


@settings(max_examples=400, deadline=None)
@given(formulas(depth=4), formulas(depth=4))
def test_digest_equality_is_structural_equality(phi, psi):
    assert (canonical_digest(phi) == canonical_digest(psi)) == (structural(phi) == structural(psi))


def test_digest_collision_free_on_corpus():
    rng = random.Random(3)
    seen: dict[str, object] = {}
    for _ in range(3000):
        phi = random_formula(rng, 5)
        d = canonical_digest(phi)
        key = structural(phi)
        assert seen.setdefault(d, key) == key
