"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every check compares library output with an oracle written here or in
conftest (brute-force permutation scans, naive satisfaction, direct
triple scans).  Nothing is compared against frozen numbers from the library.
"""

from __future__ import annotations

import gc
import itertools
import json
import os
import random
import subprocess
import sys
import time

import pytest

from conftest import PR, R2, close_sentence, naive_eval, naive_orbits, random_formula, random_structure
from fmtbench.atomic import image_atomicity
from fmtbench.bounded import BoundedTheory
from fmtbench.compiler import (
    candidate_pool,
    compile_sentence,
    completion_fixpoint,
    completion_step,
    inverse_transform,
    transform_structure,
)
from fmtbench.io import dumps, structure_to_json
from fmtbench.logic import (
    Conj,
    FiniteStructure,
    Signature,
    all_structures,
    canonical_form_bruteforce,
    exists_many,
    isomorphic_bruteforce,
)
from fmtbench.orders import (
    ColoredOrder,
    DenseQ,
    Fin,
    OrderError,
    OrderTerm,
    base_equivalence,
    class_edges,
    classify,
    compose_labels,
    emit_all,
    encode_order,
    gen_example_53,
    gen_example_superstable,
    random_kmu_order,
    recover_order,
    refine_fixpoint,
    superstable_violations,
    validate_kmu,
)
from fmtbench.scott import ScottSession, refine_to_fixpoint, scott_sentence, scott_sentence_from

pytestmark = pytest.mark.acceptance


def verdict(capsys, number: int, summary: str, failures: list) -> None:
    status = "PASS" if not failures else "FAIL"
    with capsys.disabled():
        print(f"\n{status} criterion {number}: {summary}; {len(failures)} failures", flush=True)
    assert not failures, failures[:5]


def structures_upto(sig: Signature, max_n: int):
    for n in range(1, max_n + 1):
        yield from all_structures(sig, n)


# --- criteria 1 and 2 share one exhaustive sweep over {R:2}, n <= 4


@pytest.fixture(scope="module")
def sweep():
    """Group all structures by brute-force canonical form, then refine each one."""
    classes: dict[tuple, list[FiniteStructure]] = {}
    for M in structures_upto(R2, 4):
        classes.setdefault(canonical_form_bruteforce(M), []).append(M)
    iso_failures, orbit_failures = [], []
    sentences: dict = {}
    gc.disable()
    try:
        started = time.time()
        for key, members in classes.items():
            rep = members[0]
            session = ScottSession()
            rep_sentence = None
            for M in members:
                ps = refine_to_fixpoint(M, session)
                for k in range(4):
                    if ps.classes(ps.beta, k) != naive_orbits(M, k):
                        orbit_failures.append((structure_to_json(M), k))
                sc = scott_sentence_from(ps)
                if rep_sentence is None:
                    rep_sentence = sc
                    continue
                # same canonical form: the brute-force oracle must find a map, the invariant must agree
                if isomorphic_bruteforce(rep, M) is None or sc is not rep_sentence:
                    iso_failures.append(("same class", structure_to_json(rep), structure_to_json(M)))
            clash = sentences.setdefault(rep_sentence, rep)
            if clash is not rep:
                # different canonical forms: brute force says non-isomorphic, so equal sentences disagree
                iso_failures.append(("different classes", structure_to_json(clash), structure_to_json(rep)))
        elapsed = time.time() - started
    finally:
        gc.enable()
    total = sum(len(m) for m in classes.values())
    return {
        "structures": total,
        "classes": len(classes),
        "iso_failures": iso_failures,
        "orbit_failures": orbit_failures,
        "elapsed": elapsed,
    }


def test_criterion_01_scott_invariant_matches_bruteforce_isomorphism(capsys, sweep):
    summary = (
        f"iso_via_invariant vs brute force on all {sweep['structures']} {{R:2}} structures n<=4 "
        f"({sweep['classes']} canonical classes, {sweep['elapsed']:.0f}s)"
    )
    failures = list(sweep["iso_failures"])
    if sweep["elapsed"] >= 600:
        failures.append(f"runtime {sweep['elapsed']:.0f}s exceeds 10 minutes")
    verdict(capsys, 1, summary, failures)


def test_criterion_02_stage_partitions_are_automorphism_orbits(capsys, sweep):
    summary = f"stage-beta partitions equal automorphism orbits, k<=3, {sweep['structures']} structures n<=4"
    verdict(capsys, 2, summary, sweep["orbit_failures"])


# --- criterion 3


TRANSFORM_SIGS = [R2, PR, Signature({"Q": 0, "T": 3})]


def _transform_cases(rng: random.Random):
    for sig in TRANSFORM_SIGS:
        sentences = [close_sentence(random_formula(rng, 3, sig=sig)) for _ in range(4)]
        pool = [M for M in structures_upto(sig, 2)]
        pool += [random_structure(rng, sig, n, rng.choice((0.3, 0.5, 0.7))) for n in (3, 4) for _ in range(40)]
        for psi in sentences:
            C = compile_sentence(psi, sig)
            for M in pool:
                yield C, M


def _naive_side(N: FiniteStructure, C) -> bool:
    if not all(naive_eval(N, ax, {}) for ax in C.axioms):
        return False
    return not any(naive_eval(N, exists_many(o.variables, Conj(o.literals)), {}) for o in C.omitted_types)


def test_criterion_03_compiler_bijection_and_satisfaction(capsys):
    rng = random.Random(3)
    failures = []
    tested = 0
    for C, M in _transform_cases(rng):
        tested += 1
        if inverse_transform(transform_structure(M, C), C) != M:
            failures.append(("inverse", structure_to_json(M)))
    small = [M for M in structures_upto(PR, 2)]
    pairs = 0
    for _ in range(500):
        psi = close_sentence(random_formula(rng, 3))
        C = compile_sentence(psi, PR)
        sample = small + [random_structure(rng, PR, 3) for _ in range(6)]
        for M in sample:
            pairs += 1
            if naive_eval(M, psi, {}) != _naive_side(transform_structure(M, C), C):
                failures.append(("satisfaction", str(psi), structure_to_json(M)))
    summary = f"inverse after transform on {tested} (sentence, structure) cases over 3 signatures n<=4; {pairs} satisfaction pairs over 500 sentences"
    verdict(capsys, 3, summary, failures)


# --- criterion 4


def test_criterion_04_image_is_atomic(capsys):
    failures = []
    count = 0
    for M in structures_upto(R2, 3):
        count += 1
        report = image_atomicity(M, 2)
        if not report.all_isolated:
            failures.append(structure_to_json(M))
    verdict(capsys, 4, f"every tuple of length <=2 isolated by its stage relation in the image of all {count} structures n<=3", failures)


# --- criterion 5


def completion_subjects() -> list[FiniteStructure]:
    """All iso classes with n<=2 and eight seeded classes with n=3."""
    reps: dict[tuple, FiniteStructure] = {}
    for M in structures_upto(R2, 3):
        reps.setdefault(canonical_form_bruteforce(M), M)
    small = [M for M in reps.values() if M.size <= 2]
    three = [M for M in reps.values() if M.size == 3]
    return small + random.Random(5).sample(three, 20 - len(small))


def test_criterion_05_completion_reaches_idempotence(capsys):
    failures = []
    subjects = completion_subjects()
    for M in subjects:
        C = compile_sentence(scott_sentence(M), R2)
        T = BoundedTheory(C.signature, C.axioms, M.size)
        pool_total = sum(len(candidate_pool(o, C)) for o in C.omitted_types)
        T2, steps, history, converged = completion_fixpoint(T, C, max_steps=max(pool_total, 1) + 1)
        if not converged or steps > pool_total:
            failures.append(("no fixpoint", structure_to_json(M), steps, pool_total))
            continue
        again = completion_step(T2, C)
        if again.added or set(again.handle.axioms) != set(T2.axioms):
            failures.append(("rerun changed the handle", structure_to_json(M)))
    verdict(capsys, 5, f"completion fixpoint within pool size and idempotent on {len(subjects)} compiled Scott sentences n<=3", failures)


# --- criteria 6 and 7


def random_orders() -> list[ColoredOrder]:
    rng = random.Random(6)
    return [random_kmu_order(rng, max_points=7, max_edge_colors=5) for _ in range(1000)]


def fragments(max_grid: int) -> list:
    return [gen_example_53(d, g) for d in range(3) for g in range(1, max_grid + 1)]


def realized_triples(O: ColoredOrder) -> set[tuple[int, int, int]]:
    return {(O.q(x, y), O.q(y, z), O.q(x, z)) for x, y, z in itertools.combinations(range(O.n), 3)}


def additive_on(O: ColoredOrder, E) -> bool:
    """Composition of realized triples respects the classes of E."""
    seen: dict[tuple[int, int], int] = {}
    for a, b, c in realized_triples(O):
        key = (E.class_of(a), E.class_of(b))
        if seen.setdefault(key, E.class_of(c)) != E.class_of(c):
            return False
    return True


def test_criterion_06_refinement_chains(capsys):
    failures = []
    orders = random_orders() + [ex.order for ex in fragments(3)]
    for idx, O in enumerate(orders):
        if not validate_kmu(O).ok:
            failures.append((idx, "invalid input"))
            continue
        c = classify(O)
        for R in (c.e0, c.e1):
            if any(not later.refines(earlier) for earlier, later in zip(R.history, R.history[1:])):
                failures.append((idx, "chain not monotone"))
            if R.alpha > len(O.colors()):
                failures.append((idx, "alpha above color count"))
            if additive_on(O, R.history[0]) and not all(additive_on(O, E) for E in R.history):
                failures.append((idx, "additivity lost"))
        if not c.e0.final.refines(c.e1.final):
            failures.append((idx, "E0 fixpoint does not refine E1 fixpoint"))
    verdict(capsys, 6, f"monotone chains, alpha bound, additivity, E0 refines E1 on {len(orders)} orders", failures)


def test_criterion_07_class_formulas_are_sound(capsys):
    failures = []
    orders = [O for O in random_orders() if O.n <= 6] + [ex.order for ex in fragments(3) if ex.order.n <= 6]
    checked = 0
    for idx, O in enumerate(orders):
        M = O.to_structure()
        pairs = list(itertools.product(range(O.n), repeat=2))
        for base in ("e0", "e1"):
            R = refine_fixpoint(O, base_equivalence(O, base))
            for stage in range(R.alpha + 1):
                for cls, phi in emit_all(R, stage, check=False):
                    checked += 1
                    got = {(a, b) for a, b in pairs if naive_eval(M, phi, {0: a, 1: b})}
                    if got != set(class_edges(O, cls)):
                        failures.append((idx, base, stage, cls))
    verdict(capsys, 7, f"{checked} emitted class formulas evaluate to their edge sets on {len(orders)} orders n<=6", failures)


# --- criterion 8


def expected_term(colors) -> list:
    out = []
    for c in colors:
        out += [DenseQ, Fin(c + 2)]
    return out


def test_criterion_08_encode_recover_round_trip(capsys):
    failures = []
    count = 0
    for n in range(6):
        for colors in itertools.product(range(3), repeat=n):
            count += 1
            O = ColoredOrder(list(colors))
            term = encode_order(O)
            if term != OrderTerm(expected_term(colors)):
                failures.append(("encode", colors))
            back = recover_order(term)
            if tuple(back.vertex_colors) != colors or back.n != n:
                failures.append(("recover", colors))
    rejected = 0
    bad_terms = [[DenseQ, Fin(1)], [DenseQ, Fin(2), DenseQ, Fin(1)], [DenseQ, Fin(1), DenseQ, Fin(3)]]
    for blocks in bad_terms:
        try:
            recover_order(OrderTerm(blocks))
        except OrderError:
            rejected += 1
        else:
            failures.append(("accepted", repr(blocks)))
    verdict(capsys, 8, f"round trip on all {count} orders n<=5 with <=3 colors, {rejected} size-1 block terms rejected", failures)


# --- criterion 9


def three_case(l1: tuple, l2: tuple) -> tuple[int, int]:
    (n, q), (m, r) = l1[2], l2[2]
    if n == m:
        return (n, q + r)
    return (n, q) if n < m else (m, r)


def test_criterion_09_fragments_forbid_monochromatic_triples(capsys):
    failures = []
    triples = 0
    exs = fragments(4)
    for ex in exs:
        O, lab = ex.order, ex.labels
        if not validate_kmu(O, ex.table).ok:
            failures.append((len(ex.points), "validator"))
        for (j1, j2), j3 in ex.table.items():
            if lab[j3] != compose_labels(lab[j1], lab[j2]) or lab[j3][2] != three_case(lab[j1], lab[j2]):
                failures.append(("table", j1, j2, j3))
        for x, y, z in itertools.combinations(range(O.n), 3):
            triples += 1
            lxy, lyz, lxz = lab[O.q(x, y)], lab[O.q(y, z)], lab[O.q(x, z)]
            if lxz[2] != three_case(lxy, lyz) or ex.table.get(O.q(x, y), O.q(y, z)) != O.q(x, z):
                failures.append(("composition", x, y, z))
            if lxy[2] == lyz[2] == lxz[2]:
                failures.append(("monochromatic", ex.points[x], ex.points[y], ex.points[z]))
    verdict(capsys, 9, f"{len(exs)} fragments d<=2 grid<=4 validated, {triples} triples composed by the three-case rule, none monochromatic", failures)


# --- criterion 10


def scan_nested_equivalences(M: FiniteStructure, N: int) -> list[str]:
    U = sorted(r[0] for r in M.tables["U"])
    out = []
    rel = [set(M.tables[f"E{n}"]) for n in range(N + 1)]
    for n in range(N + 1):
        E = rel[n]
        if {(a, a) for a in U} - E or any((b, a) not in E for a, b in E):
            out.append(f"E{n} not reflexive and symmetric on U")
        if any((a, c) not in E for a, b in E for b2, c in E if b == b2):
            out.append(f"E{n} not transitive")
    if any((a, b) not in rel[0] for a in U for b in U):
        out.append("E0 has more than one class")
    for n in range(N):
        if not rel[n + 1] <= rel[n]:
            out.append(f"E{n + 1} not inside E{n}")
        for a in U:
            cls = [b for b in U if (a, b) in rel[n]]
            subs = {frozenset(c for c in cls if (b, c) in rel[n + 1]) for b in cls}
            if len(subs) > 2:
                out.append(f"E{n} class of {a} has {len(subs)} subclasses")
    return out


def test_criterion_10_superstable_generator(capsys):
    failures = []
    models = 0
    for N in range(4):
        leaves = 2**N
        for size, v_size in ((None, 1), (leaves + 1, 1), (2 * leaves + 1, 1), (3 * leaves + 2, 2)):
            M = gen_example_superstable(N, size, v_size)
            models += 1
            failures += [(N, size, v) for v in scan_nested_equivalences(M, N)]
            failures += [(N, size, v) for v in superstable_violations(M, N)]
    verdict(capsys, 10, f"nested equivalence scan on {models} generated models N<=3", failures)


# --- criterion 11


CLI_STRUCTURE = {"signature": {"relations": {"R": 2}}, "size": 3, "tables": {"R": [[0, 1], [1, 2]]}}
CLI_SMALL = {"signature": {"relations": {"R": 2}}, "size": 2, "tables": {"R": [[0, 1]]}}
CLI_OTHER = {"signature": {"relations": {"R": 2}}, "size": 3, "tables": {"R": [[1, 2], [2, 0]]}}


def cli(*argv: str, hash_seed: int = 0) -> tuple[int, bytes]:
    # distinct hash seeds per run expose any dependence on set iteration order
    env = {**os.environ, "PYTHONHASHSEED": str(hash_seed)}
    proc = subprocess.run([sys.executable, "-m", "fmtbench", *argv], capture_output=True, timeout=600, env=env)
    return proc.returncode, proc.stdout


def test_criterion_11_cli_is_deterministic(capsys, tmp_path):
    m, other, small = tmp_path / "m.json", tmp_path / "n.json", tmp_path / "s.json"
    m.write_text(dumps(CLI_STRUCTURE))
    other.write_text(dumps(CLI_OTHER))
    small.write_text(dumps(CLI_SMALL))
    compiled = tmp_path / "c.json"
    assert cli("compile", "--scott-of", str(small), "--out", str(compiled))[0] == 0
    code, image = cli("transform", "--in", str(small), "--compiled", str(compiled))
    img = tmp_path / "img.json"
    img.write_bytes(dumps(json.loads(image).get("structure", json.loads(image))).encode())
    order = tmp_path / "o.json"
    order.write_bytes(cli("gen", "example53", "--depth", "2", "--grid", "3")[1])
    term = tmp_path / "t.json"
    term.write_bytes(cli("order", "encode", "--in", str(order))[1])
    commands = [
        ["scott", "--in", str(m), "--text"],
        ["iso", "--a", str(m), "--b", str(other), "--check"],
        ["compile", "--scott-of", str(m)],
        ["transform", "--in", str(small), "--compiled", str(compiled)],
        ["transform", "--in", str(img), "--compiled", str(compiled), "--inverse"],
        ["complete", "--compiled", str(compiled), "--k", "2"],
        ["atomic", "--in", str(m), "--tuple-len", "2"],
        ["atomic", "--in", str(m), "--image", "--tuple-len", "2"],
        ["build-atomic", "--in", str(m)],
        ["refine", "--in", str(order), "--base", "e0", "--formulas"],
        ["classify", "--in", str(order)],
        ["order", "encode", "--in", str(order)],
        ["order", "recover", "--in", str(term)],
        ["gen", "example53", "--depth", "2", "--grid", "4"],
        ["gen", "superstable", "--N", "3"],
        ["probe", "--generator", "random-structure", "--trials", "8", "--params", '{"n": 3}'],
        ["probe", "--generator", "example53", "--trials", "4", "--params", '{"depth": 2, "grid": 2}'],
    ]
    failures = []
    for argv in commands:
        first = cli("--workers", "1", *argv)
        second = cli("--workers", "1", *argv, hash_seed=1)
        parallel = cli("--workers", "4", *argv, hash_seed=2)
        if first[0] != 0 or not first[1]:
            failures.append((argv[0], "exit", first[0]))
        if not (first == second == parallel):
            failures.append((argv[0], "output differs"))
    verdict(capsys, 11, f"{len(commands)} CLI invocations byte-identical across two runs and 1 vs 4 workers", failures)
