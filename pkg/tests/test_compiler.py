import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PR, R2, chain, close_sentence, formulas, naive_eval, random_formula, random_structure, structures
from fmtbench.bounded import BoundedTheory
from fmtbench.compiler import (
    CompiledTheory,
    CompleteTheory,
    InconsistentTheory,
    candidate_pool,
    compile_sentence,
    completion_fixpoint,
    completion_step,
    inverse_transform,
    isolates_under,
    models_theory,
    omits_all,
    realized_omitted_type,
    subformulas,
    transform_structure,
)
from fmtbench.logic import (
    Atom,
    Conj,
    Exists,
    FiniteStructure,
    Iff,
    LogicError,
    Not,
    Signature,
    evaluate,
    isomorphic_bruteforce,
    parse_formula,
)
from fmtbench.scott import scott_sentence

P1 = Signature({"P": 1})
ONE_POINT = FiniteStructure(P1, 1, {"P": [(0,)]})
EXISTS_P = parse_formula("Exists x0 . P(x0)", P1)
SIGS = [R2, PR, Signature({"E": 2, "T": 3, "Z": 0})]


def relabel(M, perm):
    return FiniteStructure(
        M.signature, M.size, {name: [tuple(perm[a] for a in row) for row in rows] for name, rows in M.tables.items()}
    )


# --- subformula closure


def test_closure_of_existential():
    subs = subformulas(EXISTS_P, P1)
    assert Atom("P", (0,)) in subs and EXISTS_P in subs


def test_closure_of_zero_ary_atom():
    sig = Signature({"Q": 0})
    assert subformulas(parse_formula("Q", sig), sig)[0] is Atom("Q", ())


def test_closure_has_no_subconjunctions():
    sig = Signature({"A": 0, "B": 0})
    A, B = Atom("A", ()), Atom("B", ())
    subs = subformulas(Conj([A, B]), sig)
    assert A in subs and B in subs and Conj([A, B]) in subs
    assert Conj([A]) not in subs


# --- compilation


def test_compile_existential():
    C = compile_sentence(EXISTS_P, P1)
    rp, rpsi = C.symbol(Atom("P", (0,))), C.symbol(EXISTS_P)
    assert (rp.arity, rpsi.arity) == (1, 0)
    assert Iff(Exists(0, rp.atom()), rpsi.atom()) in C.axioms
    assert rpsi.atom() in C.axioms
    assert C.omitted_types == []


def test_compile_negation():
    sig = Signature({"A": 0})
    psi = Not(Atom("A", ()))
    C = compile_sentence(psi, sig)
    ra, rn = C.relation_atom(Atom("A", ())), C.relation_atom(psi)
    assert Iff(Not(ra), rn) in C.axioms
    assert rn in C.axioms


def test_compile_empty_conjunction():
    C = compile_sentence(Conj([]), Signature({}))
    unit = C.relation_atom(Conj([]))
    assert C.axioms == [unit]
    (o,) = C.omitted_types
    assert o.literals == (Not(unit),)
    # the only literal contradicts the unit axiom, so every model omits the type
    assert not BoundedTheory(C.signature, C.axioms + [Not(unit)], 2).is_consistent()


def test_compile_rejects_open_formula():
    with pytest.raises(LogicError):
        compile_sentence(Atom("P", (0,)), P1)


def test_compiled_json_round_trip():
    C = compile_sentence(scott_sentence(chain(2)), R2)
    D = CompiledTheory.from_json(C.to_json())
    assert D.to_json() == C.to_json()


# --- transform


def test_transform_one_point_example():
    C = compile_sentence(EXISTS_P, P1)
    N = transform_structure(ONE_POINT, C)
    assert N.tables[C.symbol(Atom("P", (0,))).name] == {(0,)}
    assert N.tables[C.symbol(EXISTS_P).name] == {()}
    assert inverse_transform(N, C) == ONE_POINT


def test_transform_of_non_model_fails_unit():
    C = compile_sentence(EXISTS_P, P1)
    M = FiniteStructure(P1, 2, {"P": []})
    N = transform_structure(M, C)
    assert not evaluate(N, C.relation_atom(EXISTS_P))
    assert not models_theory(N, C.axioms)


def test_inverse_of_empty_predicate():
    C = compile_sentence(EXISTS_P, P1)
    N = FiniteStructure(C.signature, 2, {})
    assert inverse_transform(N, C).tables["P"] == frozenset()


def test_inverse_of_chain_image():
    sc = scott_sentence(chain(3))
    C = compile_sentence(sc, R2)
    assert inverse_transform(transform_structure(chain(3), C), C) == chain(3)


def test_isomorphic_inputs_give_isomorphic_images_by_same_map():
    M = FiniteStructure(R2, 3, {"R": [(0, 1), (1, 2), (2, 2)]})
    perm = (2, 0, 1)
    C = compile_sentence(scott_sentence(M), R2)
    H1, H2 = transform_structure(M, C), transform_structure(relabel(M, perm), C)
    assert relabel(H1, perm) == H2


def test_image_of_model_omits_types():
    M = chain(3)
    C = compile_sentence(scott_sentence(M), R2)
    N = transform_structure(M, C)
    assert models_theory(N, C.axioms) and omits_all(N, C.omitted_types)


def test_realizing_a_conjunction_pattern_is_detected():
    sig = Signature({"A": 0, "B": 0})
    C = compile_sentence(Conj([Atom("A", ()), Atom("B", ())]), sig)
    bad = FiniteStructure(C.signature, 1, {"R_0": [()], "R_1": [()]})
    assert not omits_all(bad, C.omitted_types)
    assert realized_omitted_type(bad, C.omitted_types) is not None


def test_no_omitted_types_means_omission_holds():
    assert omits_all(ONE_POINT, [])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SIGS).flatmap(lambda s: structures(s, 3)), st.integers(0, 2**32))
def test_inverse_after_transform_is_identity(M, seed):
    rng = random.Random(seed)
    psi = close_sentence(random_formula(rng, 3, sig=M.signature))
    C = compile_sentence(psi, M.signature)
    assert inverse_transform(transform_structure(M, C), C) == M


@settings(max_examples=150, deadline=None)
@given(structures(PR, 3), st.integers(0, 2**32))
def test_satisfaction_matches_image(M, seed):
    rng = random.Random(seed)
    psi = close_sentence(random_formula(rng, 3))
    C = compile_sentence(psi, PR)
    N = transform_structure(M, C)
    assert naive_eval(M, psi, {}) == (models_theory(N, C.axioms) and omits_all(N, C.omitted_types))


def test_models_of_theory_omitting_types_invert_to_models():
    # every model of T on at most 2 points that omits the types is an image H(M) with M satisfying the sentence
    psi = parse_formula("Exists x0 . And{P(x0), Exists x1 . Not R(x0,x1)}", PR)
    C = compile_sentence(psi, PR)
    found = 0
    for n in (1, 2):
        T = BoundedTheory(C.signature, C.axioms, n)
        for _ in range(40):
            if not T.is_consistent():
                break
            N = T.models[-1]
            found += 1
            if omits_all(N, C.omitted_types):
                M = inverse_transform(N, C)
                assert naive_eval(M, psi, {})
                assert transform_structure(M, C) == N
            T = T.extend([Not(_diagram_sentence(N))])
    assert found > 0


def _diagram_sentence(N):
    from fmtbench.logic import exists_many, Equal

    lits = []
    for name, arity in N.signature.relations:
        for row in itertools.product(range(N.size), repeat=arity):
            a = Atom(name, row)
            lits.append(a if row in N.tables[name] else Not(a))
    lits += [Not(Equal(i, j)) for i in range(N.size) for j in range(i + 1, N.size)]
    from fmtbench.logic import Forall, Or

    lits.append(Forall(N.size, Or(Equal(i, N.size) for i in range(N.size))))
    return exists_many(range(N.size), Conj(lits))


# --- handles


def test_complete_theory_answers_by_evaluation():
    C = compile_sentence(EXISTS_P, P1)
    T = CompleteTheory(transform_structure(ONE_POINT, C))
    rp = C.relation_atom(Atom("P", (0,)))
    assert T.entails(C.relation_atom(EXISTS_P))
    assert T.entails(Exists(0, rp))
    for phi in (Exists(0, rp), Exists(0, Not(rp)), C.relation_atom(EXISTS_P)):
        assert T.entails(phi) != T.entails(Not(phi))


def test_isolation_trivial_cases():
    T = CompleteTheory(chain(2))
    psi = parse_formula("Exists x1 . R(x0,x1)", R2)
    assert isolates_under(psi, [psi], T, [0])
    bottom = Conj([psi, Not(psi)])
    assert not isolates_under(bottom, [psi], T, [0])


# --- completion


def test_completion_without_isolators_is_identity():
    C = compile_sentence(EXISTS_P, P1)
    T = BoundedTheory(C.signature, C.axioms, 2)
    step = completion_step(T, C)
    assert step.added == [] and step.handle is T


def test_completion_on_two_chain_reaches_fixpoint():
    C = compile_sentence(scott_sentence(chain(2)), R2)
    T = BoundedTheory(C.signature, C.axioms, 4)
    pool_total = sum(len(candidate_pool(o, C)) for o in C.omitted_types)
    T2, steps, history, converged = completion_fixpoint(T, C)
    assert converged and steps <= pool_total
    again = completion_step(T2, C)
    assert again.added == [] and set(again.handle.axioms) == set(T2.axioms)


def test_completion_rejects_inconsistent_handle():
    C = compile_sentence(EXISTS_P, P1)
    T = BoundedTheory(C.signature, C.axioms + [Not(C.relation_atom(EXISTS_P))], 2)
    with pytest.raises(InconsistentTheory):
        completion_step(T, C)


def test_candidate_pool_is_ordered_and_bounded():
    C = compile_sentence(scott_sentence(chain(2)), R2)
    for o in C.omitted_types:
        pool = candidate_pool(o, C, max_size=12, max_candidates=8)
        assert len(pool) <= 9
        sizes = [f.size for f in pool[:-1]]
        assert sizes == sorted(sizes)
