"""File formats: structures, colored orders, formulas and compiled theories as JSON."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .logic import FiniteStructure, Formula, LogicError, Signature, parse_formula


class InputError(LogicError):
    """Malformed input file; the message carries the location when known."""


def dumps(data: Any) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def loads(text: str, source: str = "<input>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None


def read_json(path: str | Path) -> Any:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc.strerror}") from None
    return loads(text, str(path))


def structure_to_json(M: FiniteStructure) -> dict:
    return {
        "signature": {"relations": M.signature.as_dict()},
        "size": M.size,
        "tables": {name: sorted(list(row) for row in M.tables[name]) for name in M.signature.names()},
    }


def structure_from_json(data: Any, source: str = "<input>") -> FiniteStructure:
    if not isinstance(data, Mapping):
        raise InputError(f"{source}: a structure must be a JSON object")
    try:
        rel = data["signature"]["relations"]
        size = data["size"]
        tables = data["tables"]
    except (KeyError, TypeError):
        raise InputError(f"{source}: a structure needs 'signature.relations', 'size' and 'tables'") from None
    if not isinstance(rel, Mapping) or not isinstance(tables, Mapping):
        raise InputError(f"{source}: 'signature.relations' and 'tables' must be objects")
    try:
        return FiniteStructure(Signature(rel), size, tables)
    except (LogicError, TypeError, ValueError) as exc:
        raise InputError(f"{source}: {exc}") from None


def read_structure(path: str | Path) -> FiniteStructure:
    return structure_from_json(read_json(path), str(path))


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text)


def read_formula(text_or_path: str, signature: Signature | None = None) -> Formula:
    """Formula from literal text, or from a file when the argument starts with '@'."""
    if text_or_path.startswith("@"):
        path = text_or_path[1:]
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"{path}: cannot read: {exc.strerror}") from None
    else:
        text = text_or_path
    return parse_formula(text, signature)


__all__ = [
    "InputError",
    "dumps",
    "loads",
    "read_formula",
    "read_json",
    "read_structure",
    "structure_from_json",
    "structure_to_json",
    "write_text",
]
