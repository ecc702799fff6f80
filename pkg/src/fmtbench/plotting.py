"""Optional figures for CLI reports.  matplotlib is imported only when a figure is requested."""

from __future__ import annotations

from pathlib import Path
from typing import Callable


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: str | Path) -> None:
    # fixed metadata keeps repeated renders byte-identical for PNG and SVG
    fmt = Path(path).suffix.lstrip(".").lower() or "png"
    meta = {"Software": None} if fmt == "png" else ({"Date": None} if fmt in ("svg", "pdf") else None)
    kwargs = {"format": fmt}
    if meta is not None:
        kwargs["metadata"] = meta
    fig.savefig(path, **kwargs)


def _bar(ax, labels, values, title: str, ylabel: str) -> None:
    ax.bar(range(len(values)), values, color="#4C72B0")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels([str(x) for x in labels])
    ax.set_title(title)
    ax.set_ylabel(ylabel)


def _stages(report: dict, ax) -> None:
    counts = report.get("class_counts_by_stage") or []
    for k in range(len(counts[0]) if counts else 0):
        ax.plot(range(len(counts)), [row[k] for row in counts], marker="o", label=f"{k}-tuples")
    ax.set_xlabel("stage")
    ax.set_ylabel("classes")
    ax.set_title("tuple classes per stage")
    if counts:
        ax.legend()


def _refine(report: dict, ax) -> None:
    chains = [("E0", report["E0"]), ("E1", report["E1"])] if "E0" in report else [(report.get("base", "base"), report)]
    for name, chain in chains:
        sizes = [len(st["classes"]) for st in chain["stages"]]
        ax.step(range(len(sizes)), sizes, where="post", marker="o", label=name)
    ax.set_xlabel("stage")
    ax.set_ylabel("color classes")
    ax.set_title("refinement chain")
    ax.legend()


def _atomic(report: dict, ax) -> None:
    counts: dict[str, int] = {}
    for v in report.get("verdicts", {}).values():
        counts[v] = counts.get(v, 0) + 1
    keys = sorted(counts)
    _bar(ax, keys, [counts[k] for k in keys], "tuple verdicts", "tuples")


def _probe(report: dict, ax) -> None:
    sizes = [len(c) for c in report["classes"]]
    _bar(ax, list(range(len(sizes))), sizes, f"trials per invariant class ({report['verdict']})", "trials")


def _completion(report: dict, ax) -> None:
    hist = report.get("history", [])
    _bar(ax, list(range(len(hist))), hist, "axioms added per completion step", "axioms")


RENDERERS: dict[str, Callable[[dict, object], None]] = {
    "scott": _stages,
    "refine": _refine,
    "classify": _refine,
    "atomic": _atomic,
    "probe": _probe,
    "complete": _completion,
}


def render(kind: str, report: dict, path: str | Path) -> bool:
    """Draw the figure for a report kind; False when the kind has no figure."""
    draw = RENDERERS.get(kind)
    if draw is None:
        return False
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    try:
        draw(report, ax)
        fig.tight_layout()
        _save(fig, path)
    finally:
        plt.close(fig)
    return True
