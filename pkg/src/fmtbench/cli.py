"""Command-line workbench.  JSON reports go to stdout, diagnostics to stderr.

Exit codes: 0 success, 1 a property or validation failure was reported,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import signal
import sys
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .atomic import build_atomic_set, image_atomicity, is_atomic, isolated_types_dense
from .bounded import BoundedTheory
from .compiler import CompiledTheory, compile_sentence, completion_fixpoint, inverse_transform, transform_structure
from .io import InputError, dumps, read_formula, read_json, read_structure, structure_to_json
from .logic import (
    LogicError,
    Signature,
    canonical_digest,
    isomorphic_bruteforce,
    parse_formula,
    to_text,
)
from .orders import (
    ColoredOrder,
    OrderError,
    OrderTerm,
    OrderValidationError,
    base_equivalence,
    classify,
    emit_all,
    encode_order,
    gen_example_53,
    gen_example_superstable,
    recover_order,
    refine_fixpoint,
    superstable_violations,
    term_anomalies,
    validate_kmu,
)
from .probe import GeneratorError, GeneratorSpec, probe_isomorphism_property
from .scott import ResourceLimitExceeded, ScottSession, _fingerprint, iso_via_invariant, refine_to_fixpoint, scott_sentence_from

BRUTE_FORCE_LIMIT = 7


class Failure(Exception):
    """A reported property or validation failure (exit 1) carrying its JSON report."""

    def __init__(self, report: dict):
        super().__init__("failure")
        self.report = report


def _tuple(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"bad tuple {text!r}; expected comma-separated integers") from None


def _signature_arg(text: str | None) -> Signature | None:
    if text is None:
        return None
    from .io import loads

    data = loads(text, "--signature")
    if not isinstance(data, dict):
        raise InputError("--signature takes a JSON object such as {\"R\": 2}")
    return Signature(data)


# ---------------------------------------------------------------------------
# subcommands


def cmd_scott(a) -> dict:
    M = read_structure(a.input)
    ps = refine_to_fixpoint(M, ScottSession(max_stage=a.max_stage))
    sc = scott_sentence_from(ps)
    out = {
        "size": M.size,
        "beta": ps.beta,
        "class_counts": ps.class_counts(ps.beta),
        "class_counts_by_stage": [ps.class_counts(k) for k in range(ps.beta + 1)],
        "fingerprint": _fingerprint(canonical_digest(sc)),
        "sentence_dag_nodes": _dag_nodes(sc),
    }
    if a.tuple is not None:
        t = _tuple(a.tuple)
        stage = ps.beta if a.stage is None else a.stage
        phi = ps.formula(t, stage)
        out["tuple"] = {"tuple": list(t), "stage": stage, "fingerprint": _fingerprint(canonical_digest(phi))}
        if a.text:
            out["tuple"]["formula"] = to_text(phi, sugar=True)
    if a.text:
        out["sentence"] = to_text(sc, sugar=True)
    if a.emit_sentence:
        Path(a.emit_sentence).write_text(to_text(sc) + "\n")
        out["sentence_file"] = a.emit_sentence
    return out


def _dag_nodes(phi) -> int:
    from .logic import closure

    return len(closure(phi))


def cmd_iso(a) -> dict:
    M, N = read_structure(a.a), read_structure(a.b)
    if a.oracle == "brute":
        if max(M.size, N.size) > BRUTE_FORCE_LIMIT:
            raise InputError(f"brute force is limited to {BRUTE_FORCE_LIMIT} points")
        return {"isomorphic": isomorphic_bruteforce(M, N) is not None, "method": "brute-force"}
    verdict = iso_via_invariant(M, N, ScottSession())
    out = {"isomorphic": verdict, "method": "scott-invariant"}
    if a.check or a.oracle == "both":
        if max(M.size, N.size) > BRUTE_FORCE_LIMIT:
            out["brute_force"] = None
        else:
            bf = isomorphic_bruteforce(M, N) is not None
            out["brute_force"] = bf
            if bf != verdict:
                raise Failure({**out, "error": "invariant and brute force disagree"})
    return out


def _sentence_input(a) -> tuple:
    if a.scott_of:
        M = read_structure(a.scott_of)
        return scott_sentence_from(refine_to_fixpoint(M, ScottSession())), M.signature
    text = a.formula if a.formula is not None else (f"@{a.input}" if a.input else None)
    if text is None:
        raise InputError("compile needs --in, --formula or --scott-of")
    sig = _signature_arg(a.signature)
    if a.sig:
        data = read_json(a.sig)
        rel = data.get("relations", data) if isinstance(data, dict) else None
        if not isinstance(rel, dict):
            raise InputError(f"{a.sig}: a signature file holds an object of arities")
        sig = Signature(rel)
    if a.structure:
        sig = read_structure(a.structure).signature
    return read_formula(text, sig), sig


def cmd_compile(a) -> dict:
    psi, sig = _sentence_input(a)
    out = compile_sentence(psi, sig).to_json()
    if a.out:
        Path(a.out).write_text(dumps(out))
    return out


def _compiled(path: str) -> CompiledTheory:
    data = read_json(path)
    try:
        return CompiledTheory.from_json(data)
    except LogicError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_transform(a) -> dict:
    C = _compiled(a.compiled)
    M = read_structure(a.input)
    out = inverse_transform(M, C) if a.inverse else transform_structure(M, C)
    return structure_to_json(out)


def cmd_complete(a) -> dict:
    C = _compiled(a.compiled)
    T = BoundedTheory(C.signature, C.axioms, a.k)
    final, steps, history, converged = completion_fixpoint(T, C, a.max_steps, max_size=a.max_size, max_candidates=a.max_candidates)
    added = [to_text(ax) for ax in final.axioms[len(C.axioms):]]
    out = {
        "handle": final.describe(),
        "steps": steps,
        "history": history,
        "converged": converged,
        "added_axioms": added,
        "solver_calls": final.solver_calls,
    }
    if not converged:
        raise Failure(out)
    return out


def _theory(a, M):
    """None for the complete theory of M, else a bounded handle from --axiom or a handle file."""
    if a.theory in ("self", "complete"):
        return None
    texts = list(a.axiom or [])
    k = a.k
    if a.theory != "bounded":
        data = read_json(a.theory)
        if not isinstance(data, dict) or not isinstance(data.get("axioms", []), list):
            raise InputError(f"{a.theory}: a handle file is an object with an 'axioms' list and optional 'k'")
        texts += data.get("axioms", [])
        k = int(data.get("k", k))
    axioms = [parse_formula(x, M.signature) for x in texts]
    return BoundedTheory(M.signature, axioms, k)


def cmd_atomic(a) -> dict:
    M = read_structure(a.input)
    if a.image:
        rep = image_atomicity(M, a.tuple_len)
        if not rep.all_isolated:
            raise Failure(rep.to_json())
        return rep.to_json()
    T = _theory(a, M)
    rep = is_atomic(M, T, pool_size=a.pool_size, tuple_len=a.tuple_len, quantifier_depth=a.depth, max_formulas=a.max_formulas)
    out = rep.to_json()
    if a.density:
        dens = isolated_types_dense(T if T is not None else _complete(M), pool_size=a.pool_size, max_formulas=a.max_formulas)
        out["density"] = dens.to_json()
    if not rep.all_isolated:
        raise Failure(out)
    return out


def _complete(M):
    from .compiler import CompleteTheory

    return CompleteTheory(M)


def cmd_build_atomic(a) -> dict:
    M = read_structure(a.input)
    T = _theory(a, M)
    rep, N = build_atomic_set(
        M, T, budget=a.budget, pool_size=a.pool_size, max_params=a.max_params, tuple_len=a.tuple_len, max_formulas=a.max_formulas
    )
    out = rep.to_json()
    out["set"] = N
    return out


def _order(path: str) -> ColoredOrder:
    data = read_json(path)
    try:
        return ColoredOrder.from_json(data)
    except OrderError as exc:
        raise InputError(f"{path}: {exc}") from None


def _interval(text: str) -> bool | None:
    return {"auto": None, "on": True, "off": False}[text]


def cmd_refine(a) -> dict:
    O = _order(a.input)
    rep = validate_kmu(O)
    if not rep.ok:
        raise Failure({"validation": rep.to_json()})
    s = _tuple(a.s) if a.s else None
    R = refine_fixpoint(O, base_equivalence(O, a.base, s), a.mode, _interval(a.interval), a.strict)
    out = R.to_json()
    if a.formulas:
        out["class_formulas"] = [
            {"class": list(cls), "formula": to_text(phi, sugar=True), "fingerprint": _fingerprint(canonical_digest(phi))}
            for cls, phi in emit_all(R)
        ]
    return out


def cmd_classify(a) -> dict:
    O = _order(a.input)
    try:
        c = classify(O, a.mode, _interval(a.interval), a.strict)
    except OrderValidationError as exc:
        raise Failure({"validation": exc.report.to_json()}) from None
    return c.to_json()


def cmd_order(a) -> dict:
    if a.action == "encode":
        O = _order(a.input)
        t = encode_order(O)
        return {"term": t.to_json(), "text": repr(t)}
    data = read_json(a.input)
    try:
        t = OrderTerm.from_json(data)
        O = recover_order(t)
    except OrderError as exc:
        raise InputError(f"{a.input}: {exc}") from None
    return {"order": O.to_json(), "anomalies": term_anomalies(t)}


def cmd_gen(a) -> dict:
    if a.family == "example53":
        ex = gen_example_53(a.depth, a.grid, a.colors)
        out = ex.to_json()
        rep = validate_kmu(ex.order)
        out["validation"] = rep.to_json()
        return out
    M = gen_example_superstable(a.N, a.size, a.v_size)
    out = structure_to_json(M)
    out["violations"] = superstable_violations(M, a.N)
    return out


def cmd_probe(a) -> dict:
    from .io import loads

    params = loads(a.params, "--params") if a.params else {}
    if not isinstance(params, dict):
        raise InputError("--params takes a JSON object")
    rep = probe_isomorphism_property(GeneratorSpec(a.generator, params), a.trials, a.seed, a.workers)
    return rep.to_json()


# ---------------------------------------------------------------------------
# parser


def _add_pool(p) -> None:
    p.add_argument("--pool-size", type=int, default=10, help="largest formula size in the candidate pool")
    p.add_argument("--tuple-len", type=int, default=3)
    p.add_argument("--depth", type=int, default=1, help="quantifier depth of pool formulas")
    p.add_argument("--max-formulas", type=int, default=5000)
    p.add_argument("--theory", default="self", help="self (complete theory of the input), bounded, or a handle JSON file")
    p.add_argument("--axiom", action="append", help="axiom of a bounded theory (repeatable)")
    p.add_argument("--k", type=int, default=3, help="model-size bound of a bounded theory")


def _refine_opts(p) -> None:
    p.add_argument("--mode", choices=("some-pair", "all-pairs"), default="some-pair")
    p.add_argument("--interval", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--strict", action="store_true", help="also match vertex colors of middle points")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fmtbench", description="Finite model theory workbench.")
    ap.add_argument("--version", action="version", version=f"fmtbench {__version__}")
    ap.add_argument("--seed", type=int, default=0, help="base seed for randomized commands")
    ap.add_argument("--json-out", metavar="PATH", help="also write the JSON report to PATH")
    ap.add_argument("--limit-ms", type=int, help="wall-clock limit in milliseconds")
    ap.add_argument("--limit-mem-mb", type=int, help="address-space limit in MiB")
    ap.add_argument("--workers", type=int, default=1, help="worker threads for independent trials")
    ap.add_argument("--figure", metavar="PATH", help="render a matplotlib figure of the report to PATH")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scott", help="Scott analysis of a structure")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tuple", help="comma-separated tuple whose stage formula to report")
    p.add_argument("--stage", type=int)
    p.add_argument("--max-stage", type=int)
    p.add_argument("--text", action="store_true", help="include formula text")
    p.add_argument("--emit-sentence", metavar="PATH", help="write the Scott sentence text to PATH")
    p.add_argument("--invariant", action="store_true", help="accepted for compatibility; the invariant is always reported")
    p.set_defaults(run=cmd_scott)

    p = sub.add_parser("iso", help="isomorphism via Scott invariants")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--oracle", choices=("scott", "brute", "both"), default="scott")
    p.add_argument("--check", action="store_true", help="same as --oracle both")
    p.set_defaults(run=cmd_iso)

    p = sub.add_parser("compile", help="compile an infinitary sentence to a first-order theory")
    p.add_argument("--in", dest="input", help="file holding the sentence text")
    p.add_argument("--formula", help="sentence text, or @FILE")
    p.add_argument("--sig", help="signature file (JSON object of arities)")
    p.add_argument("--signature", help='inline signature such as {"R": 2}')
    p.add_argument("--structure", help="take the signature from this structure")
    p.add_argument("--scott-of", help="compile the Scott sentence of this structure")
    p.add_argument("--out", help="also write the compiled theory to this file")
    p.set_defaults(run=cmd_compile)

    p = sub.add_parser("transform", help="apply the compiled relational transform")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--compiled", required=True)
    p.add_argument("--inverse", action="store_true")
    p.set_defaults(run=cmd_transform)

    p = sub.add_parser("complete", help="iterate completion steps on a compiled theory")
    p.add_argument("--compiled", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--max-steps", type=int, default=20)
    p.add_argument("--max-size", type=int, default=12)
    p.add_argument("--max-candidates", type=int, default=64)
    p.set_defaults(run=cmd_complete)

    p = sub.add_parser("atomic", help="isolation verdicts for all short tuples")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--density", action="store_true", help="also check density of isolated types")
    p.add_argument(
        "--image", action="store_true", help="check H(M) for the Scott sentence of M against its stage-beta relations"
    )
    _add_pool(p)
    p.set_defaults(run=cmd_atomic)

    p = sub.add_parser("build-atomic", help="build a witness-closed atomic set")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--max-params", type=int, default=1)
    _add_pool(p)
    p.set_defaults(run=cmd_build_atomic)

    p = sub.add_parser("refine", help="refinement chain of edge-color equivalences")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--base", choices=("e0", "e1", "es"), default="e0")
    p.add_argument("--s", help="comma-separated vertex colors collapsed by base es")
    p.add_argument("--formulas", "--emit-formulas", dest="formulas", action="store_true", help="emit class formulas of the fixpoint")
    _refine_opts(p)
    p.set_defaults(run=cmd_refine)

    p = sub.add_parser("classify", help="fragment-level K+ and K* membership")
    p.add_argument("--in", dest="input", required=True)
    _refine_opts(p)
    p.set_defaults(run=cmd_classify)

    p = sub.add_parser("order", help="encode a colored order as an order term, or recover it")
    p.add_argument("action", choices=("encode", "recover"))
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(run=cmd_order)

    p = sub.add_parser("gen", help="generate example structures")
    gsub = p.add_subparsers(dest="family", required=True)
    g = gsub.add_parser("example53", help="first-difference colored order")
    g.add_argument("--depth", type=int, default=1)
    g.add_argument("--grid", type=int, default=3)
    g.add_argument("--colors", type=int, default=2)
    g.set_defaults(run=cmd_gen)
    g = gsub.add_parser("superstable", help="nested equivalence relations with a binary splitting tree")
    g.add_argument("--N", type=int, default=1)
    g.add_argument("--size", type=int)
    g.add_argument("--v-size", type=int, default=1)
    g.set_defaults(run=cmd_gen)

    p = sub.add_parser("probe", help="randomized isomorphism-property probe")
    p.add_argument("--generator", choices=("example53", "superstable", "random-structure"), required=True)
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--params", help="generator parameters as a JSON object")
    p.set_defaults(run=cmd_probe)
    return ap


# ---------------------------------------------------------------------------
# limits and main


def _timeout(signum, frame):
    raise ResourceLimitExceeded("time limit exceeded")


def _apply_limits(a) -> Callable[[], None]:
    undo: list[Callable[[], None]] = []
    if a.limit_ms is not None:
        if a.limit_ms <= 0:
            raise InputError("--limit-ms must be positive")
        old = signal.signal(signal.SIGALRM, _timeout)
        signal.setitimer(signal.ITIMER_REAL, a.limit_ms / 1000.0)

        def clear_timer():
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, old)

        undo.append(clear_timer)
    if a.limit_mem_mb is not None:
        import resource

        if a.limit_mem_mb <= 0:
            raise InputError("--limit-mem-mb must be positive")
        soft, hard = resource.getrlimit(resource.RLIMIT_AS)
        want = a.limit_mem_mb * 1024 * 1024
        if hard != resource.RLIM_INFINITY:
            want = min(want, hard)
        resource.setrlimit(resource.RLIMIT_AS, (want, hard))
        undo.append(lambda: resource.setrlimit(resource.RLIMIT_AS, (soft, hard)))

    def restore():
        for f in reversed(undo):
            f()

    return restore


def _emit(a, kind: str, report: dict) -> None:
    text = dumps(report)
    sys.stdout.write(text)
    sys.stdout.flush()
    if a.json_out:
        Path(a.json_out).write_text(text)
    if a.figure:
        from .plotting import render

        if not render(kind, report, a.figure):
            print(f"fmtbench: no figure for {kind}", file=sys.stderr)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if a.workers < 1:
        print("fmtbench: --workers must be at least 1", file=sys.stderr)
        return 2
    kind = a.command
    restore = lambda: None  # noqa: E731
    try:
        restore = _apply_limits(a)
        report = a.run(a)
    except Failure as f:
        restore()
        _emit(a, kind, f.report)
        return 1
    except (ResourceLimitExceeded, MemoryError) as exc:
        restore()
        msg = str(exc) or "memory limit exceeded"
        _emit(a, kind, {"error": msg, "limit": True})
        print(f"fmtbench: {msg}", file=sys.stderr)
        return 1
    except (InputError, GeneratorError, OrderError, LogicError) as exc:
        restore()
        print(f"fmtbench: {exc}", file=sys.stderr)
        return 2
    restore()
    _emit(a, kind, report)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
