"""Coded-concept hierarchies: parsing, ancestry and description queries.

A codebook is a forest of nodes, each belonging to one coding system
(diagnoses, procedures or medications).  Codes are opaque identifiers;
group codes like ``390-459`` are ordinary nodes and never parsed as
ranges.  Descriptions are stored verbatim; any normalization happens in
the relevance layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .errors import FormatError, UnknownCodeError


class CodeSystem(str, Enum):
    ICD9_DIAGNOSIS = "icd9-diagnosis"
    ICD9_PROCEDURE = "icd9-procedure"
    ATC = "atc"

    @classmethod
    def parse(cls, text: str) -> "CodeSystem":
        try:
            return cls(text)
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown code system {text!r} (expected one of: {valid})")


@dataclass(frozen=True)
class CodeNode:
    system: CodeSystem
    code: str
    parent: Optional[str]
    description: str
    level: int


class Codebook:
    """Immutable forest of code nodes, safe for concurrent reads."""

    def __init__(self, nodes: dict[tuple[CodeSystem, str], CodeNode],
                 children: dict[tuple[CodeSystem, str], tuple[str, ...]]):
        self._nodes = nodes
        self._children = children
        self._ancestor_cache: dict[tuple[CodeSystem, str], tuple[str, ...]] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, key: tuple[CodeSystem, str]) -> bool:
        return key in self._nodes

    def __iter__(self):
        return iter(self._nodes.values())

    def node(self, system: CodeSystem, code: str) -> CodeNode:
        try:
            return self._nodes[(system, code)]
        except KeyError:
            raise UnknownCodeError(f"code {code!r} not in system {system.value!r}")

    def roots(self, system: Optional[CodeSystem] = None) -> list[CodeNode]:
        return [n for n in self._nodes.values()
                if n.parent is None and (system is None or n.system == system)]

    def children(self, system: CodeSystem, code: str) -> tuple[str, ...]:
        self.node(system, code)
        return self._children.get((system, code), ())

    def ancestors(self, system: CodeSystem, code: str) -> list[str]:
        """Codes on the path from the root down to ``code`` (inclusive)."""
        key = (system, code)
        cached = self._ancestor_cache.get(key)
        if cached is None:
            chain = []
            cur: Optional[str] = code
            while cur is not None:
                node = self.node(system, cur)
                chain.append(cur)
                cur = node.parent
            chain.reverse()
            cached = tuple(chain)
            self._ancestor_cache[key] = cached
        return list(cached)

    def hierarchical_description(self, system: CodeSystem, code: str) -> str:
        """Space-joined descriptions of all ancestors, root first."""
        return " ".join(self.node(system, c).description
                        for c in self.ancestors(system, code))

    def descendants(self, system: CodeSystem, code: str) -> set[str]:
        """Transitive closure of children, excluding ``code`` itself."""
        self.node(system, code)
        out: set[str] = set()
        stack = list(self._children.get((system, code), ()))
        while stack:
            c = stack.pop()
            out.add(c)
            stack.extend(self._children.get((system, c), ()))
        return out

    def codes(self, system: Optional[CodeSystem] = None) -> list[tuple[CodeSystem, str]]:
        return [(n.system, n.code) for n in self._nodes.values()
                if system is None or n.system == system]


def load_codebook(path) -> Codebook:
    """Load a codebook from its TSV format.

    One node per line: ``system<TAB>code<TAB>parent<TAB>description``;
    an empty parent field marks a root and ``#`` lines are comments.
    Levels are derived from the parent links, not read from the file.
    """
    raw: dict[tuple[CodeSystem, str], tuple[str, Optional[str], int]] = {}
    order: list[tuple[CodeSystem, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise FormatError(
                    f"expected 4 tab-separated fields, got {len(fields)}",
                    path=path, line=lineno)
            system_text, code, parent, description = fields
            try:
                system = CodeSystem.parse(system_text)
            except ValueError as exc:
                raise FormatError(str(exc), path=path, line=lineno)
            if not code:
                raise FormatError("empty code", path=path, line=lineno)
            if not description.strip():
                raise FormatError(f"empty description for code {code!r}",
                                  path=path, line=lineno)
            key = (system, code)
            if key in raw:
                raise FormatError(
                    f"duplicate code {code!r} in system {system.value!r}",
                    path=path, line=lineno)
            raw[key] = (description, parent or None, lineno)
            order.append(key)

    # Validate parent references before building the tree.
    for key in order:
        description, parent, lineno = raw[key]
        if parent is not None and (key[0], parent) not in raw:
            raise FormatError(
                f"code {key[1]!r} references unknown parent {parent!r}",
                path=path, line=lineno)

    children: dict[tuple[CodeSystem, str], list[str]] = {}
    for system, code in order:
        _, parent, _ = raw[(system, code)]
        if parent is not None:
            children.setdefault((system, parent), []).append(code)

    # Derive levels root-down; anything unreachable sits on a cycle.
    levels: dict[tuple[CodeSystem, str], int] = {}
    stack = [key for key in order if raw[key][1] is None]
    for key in stack:
        levels[key] = 0
    while stack:
        system, code = stack.pop()
        for child in children.get((system, code), ()):
            levels[(system, child)] = levels[(system, code)] + 1
            stack.append((system, child))

    if len(levels) != len(raw):
        offender = next(key for key in order if key not in levels)
        raise FormatError(
            f"code {offender[1]!r} is part of a parent cycle",
            path=path, line=raw[offender][2])

    nodes = {
        key: CodeNode(system=key[0], code=key[1], parent=raw[key][1],
                      description=raw[key][0], level=levels[key])
        for key in order
    }
    frozen_children = {k: tuple(v) for k, v in children.items()}
    return Codebook(nodes, frozen_children)


def write_codebook_tsv(rows: Iterable[tuple[str, str, str, str]], path) -> None:
    """Write ``(system, code, parent, description)`` rows as codebook TSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for system, code, parent, description in rows:
            fh.write(f"{system}\t{code}\t{parent}\t{description}\n")
