"""Randomized isomorphism-property probe: do independent seeded runs of a generator agree up to isomorphism?"""

from __future__ import annotations

import itertools
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .logic import FiniteStructure, LogicError, Signature, isomorphic_bruteforce
from .orders import gen_example_53, gen_example_superstable
from .scott import ScottSession, _fingerprint, scott_invariant

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1


def trial_seed(base: int, i: int) -> int:
    """Seed of trial i: (base * GOLDEN + i) mod 2**64."""
    return (base * GOLDEN + i) & MASK64


class GeneratorError(LogicError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    generator: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def build(self, seed: int) -> FiniteStructure:
        try:
            make = GENERATORS[self.generator]
        except KeyError:
            raise GeneratorError(f"unknown generator {self.generator!r} (choose from {sorted(GENERATORS)})") from None
        try:
            return make(dict(self.params), seed)
        except (TypeError, ValueError) as exc:
            raise GeneratorError(f"generator {self.generator}: {exc}") from None

    def to_json(self) -> dict:
        return {"generator": self.generator, "params": dict(sorted(self.params.items()))}


def _example53(p: dict, seed: int) -> FiniteStructure:
    ex = gen_example_53(int(p.get("depth", 1)), int(p.get("grid", 3)), int(p.get("colors", 2)))
    return ex.order.to_structure(with_edges=True)


def _superstable(p: dict, seed: int) -> FiniteStructure:
    size = p.get("size")
    return gen_example_superstable(int(p.get("N", 1)), None if size is None else int(size), int(p.get("v_size", 1)))


def _random_structure(p: dict, seed: int) -> FiniteStructure:
    n = int(p.get("n", 3))
    rel = p.get("relations", {"R": 2})
    density = float(p.get("density", 0.5))
    sig = Signature(rel)
    rng = random.Random(seed)
    tables = {}
    for name, arity in sig.relations:
        tables[name] = [row for row in itertools.product(range(n), repeat=arity) if rng.random() < density]
    return FiniteStructure(sig, n, tables)


GENERATORS: dict[str, Callable[[dict, int], FiniteStructure]] = {
    "example53": _example53,
    "superstable": _superstable,
    "random-structure": _random_structure,
}


@dataclass
class ProbeReport:
    spec: GeneratorSpec
    base_seed: int
    seeds: list[int]
    fingerprints: list[str]
    classes: list[list[int]]
    pairs_compared: int
    counterexample: dict | None

    @property
    def verdict(self) -> str:
        return "always-isomorphic-at-scale" if self.counterexample is None else "counterexample"

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "trials": len(self.seeds),
            "base_seed": self.base_seed,
            "seed_scheme": "seed_i = (base * 0x9E3779B97F4A7C15 + i) mod 2^64",
            "seeds": self.seeds,
            "fingerprints": self.fingerprints,
            "classes": self.classes,
            "pairs_compared": self.pairs_compared,
            "verdict": self.verdict,
            "counterexample": self.counterexample,
        }


def _run_trial(spec: GeneratorSpec, seed: int) -> tuple[FiniteStructure, str]:
    M = spec.build(seed)
    inv = scott_invariant(M, ScottSession())
    return M, inv.digest


def probe_isomorphism_property(spec: GeneratorSpec, trials: int, base_seed: int = 0, workers: int = 1) -> ProbeReport:
    """Run `trials` seeded copies, group them by Scott invariant, and certify the first split by brute force."""
    if trials < 2:
        raise GeneratorError("the probe needs at least two trials")
    seeds = [trial_seed(base_seed, i) for i in range(trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_trial(spec, s), seeds))
    else:
        results = [_run_trial(spec, s) for s in seeds]
    structures = [r[0] for r in results]
    digests = [r[1] for r in results]
    fingerprints = [_fingerprint(d) for d in digests]
    groups: dict[str, list[int]] = {}
    for i, d in enumerate(digests):
        groups.setdefault(d, []).append(i)
    classes = sorted(groups.values())
    counterexample = None
    if len(classes) > 1:
        i, j = classes[0][0], classes[1][0]
        if isomorphic_bruteforce(structures[i], structures[j]) is not None:
            raise AssertionError(f"trials {i} and {j} have different invariants but are isomorphic")
        counterexample = {
            "pair": [i, j],
            "seeds": [seeds[i], seeds[j]],
            "certificate": {
                "method": "exhaustive bijection search",
                "size": structures[i].size,
                "bijections_checked": math.factorial(structures[i].size) if structures[i].size == structures[j].size else 0,
                "isomorphic": False,
            },
        }
    return ProbeReport(spec, base_seed, seeds, fingerprints, classes, trials * (trials - 1) // 2, counterexample)


__all__ = ["GENERATORS", "GeneratorError", "GeneratorSpec", "ProbeReport", "probe_isomorphism_property", "trial_seed"]
