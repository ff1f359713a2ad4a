"""Repository model: files plus an acyclic import/dataflow dependency graph."""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class CycleDetected(Exception):
    """Raised when the dependency structure is not acyclic."""

    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle + self.cycle[:1]))


class UnknownNode(KeyError):
    """Raised when a query names a file absent from the graph."""


@dataclass(frozen=True)
class FileRecord:
    """One repository file: id (repo-relative path), grammar role, source text."""

    file_id: str
    path: str
    role: str
    source: str = ""


@dataclass
class FileInterface:
    """Frozen public surface of one file: exported names and imported names."""

    file_id: str
    exports: list[tuple[str, object]] = field(default_factory=list)
    imports: list[tuple[str, str]] = field(default_factory=list)  # (name, provider file id)

    def export_names(self) -> list[str]:
        return [name for name, _ in self.exports]

    def to_dict(self) -> dict:
        from .grammar import ShapeSignature

        exports = []
        for name, sig in self.exports:
            if isinstance(sig, ShapeSignature):
                exports.append({"name": name, "signature": sig.to_text()})
            elif sig is None:
                exports.append({"name": name})
            else:
                exports.append({"name": name, "signature": str(sig)})
        return {
            "file": self.file_id,
            "exports": exports,
            "imports": [{"name": n, "from": p} for n, p in self.imports],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FileInterface":
        from .grammar import parse_signature

        exports: list[tuple[str, object]] = []
        for item in data.get("exports", []):
            sig_text = item.get("signature")
            sig = parse_signature(item["name"] + (sig_text or "")) if sig_text else None
            exports.append((item["name"], sig))
        imports = [(i["name"], i["from"]) for i in data.get("imports", [])]
        return cls(file_id=data["file"], exports=exports, imports=imports)


# Module-level import statements of the generated (Python) plugin code.
_IMPORT_RE = re.compile(r"^\s*import\s+([A-Za-z_][\w.]*)", re.MULTILINE)
_FROM_RE = re.compile(r"^\s*from\s+(\.*[\w.]*)\s+import\s+([^\n]+)", re.MULTILINE)


def _module_key(path: str) -> str:
    """Dotted module path of a repo-relative file path."""
    p = path[:-3] if path.endswith(".py") else path
    return p.replace("/", ".")


def _resolve_relative(importer_path: str, module: str) -> str | None:
    """Resolve a leading-dot module reference against the importer's package."""
    dots = len(module) - len(module.lstrip("."))
    rest = module.lstrip(".")
    parts = importer_path.split("/")[:-1]  # drop the file name
    up = dots - 1
    if up > len(parts):
        return None
    base = parts[: len(parts) - up] if up else parts
    return ".".join(base + rest.split(".")) if rest else ".".join(base)


def scan_imports(files: Sequence[FileRecord]) -> set[tuple[str, str]]:
    """Derive (provider, consumer) edges from module-level import lines.

    Imports that do not resolve to a repository file (external packages)
    create no edges; self references are ignored.
    """
    by_module: dict[str, str] = {}
    for rec in files:
        by_module[_module_key(rec.path)] = rec.file_id
    edges: set[tuple[str, str]] = set()
    for rec in files:
        targets: list[str] = []
        for match in _IMPORT_RE.finditer(rec.source):
            targets.append(match.group(1))
        for match in _FROM_RE.finditer(rec.source):
            module = match.group(1)
            if module.startswith("."):
                resolved = _resolve_relative(rec.path, module)
                if resolved is not None:
                    targets.append(resolved)
            else:
                targets.append(module)
        for module in targets:
            provider = by_module.get(module)
            if provider is None:
                # `from pkg import name` may reference a sibling module.
                provider = by_module.get(module + ".__init__")
            if provider is not None and provider != rec.file_id:
                edges.add((provider, rec.file_id))
    return edges


def _find_cycle(nodes: Iterable[str], adjacency: Mapping[str, set[str]]) -> list[str] | None:
    """Return one cycle as a node list, or None when the graph is acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GRAY
        stack.append(node)
        for succ in sorted(adjacency.get(node, ())):
            if color[succ] == GRAY:
                idx = stack.index(succ)
                return stack[idx:]
            if color[succ] == WHITE:
                found = visit(succ)
                if found is not None:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for start in sorted(color):
        if color[start] == WHITE:
            found = visit(start)
            if found is not None:
                return found
    return None


@dataclass
class RepositoryGraph:
    """The repository: files F and acyclic dependency edges E.

    An edge (u, v) means v depends on u, so u must precede v in any
    compilation or freeze order.
    """

    files: dict[str, FileRecord]
    edges: set[tuple[str, str]]

    @property
    def file_ids(self) -> list[str]:
        return sorted(self.files)

    def successors(self, file_id: str) -> set[str]:
        return {v for u, v in self.edges if u == file_id}

    def predecessors(self, file_id: str) -> set[str]:
        return {u for u, v in self.edges if v == file_id}

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": rec.file_id, "path": rec.path, "role": rec.role}
                for rec in sorted(self.files.values(), key=lambda r: r.file_id)
            ],
            "edges": sorted([list(e) for e in self.edges]),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, data: Mapping, sources: Mapping[str, str] | None = None) -> "RepositoryGraph":
        files = {}
        for node in data["nodes"]:
            src = (sources or {}).get(node["id"], "")
            files[node["id"]] = FileRecord(node["id"], node["path"], node["role"], src)
        edges = {(u, v) for u, v in data["edges"]}
        graph = cls(files=files, edges=edges)
        cycle = _find_cycle(graph.files, _adjacency(graph.edges))
        if cycle:
            raise CycleDetected(cycle)
        return graph


def _adjacency(edges: Iterable[tuple[str, str]]) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
    return adj


def build_repo_dag(
    files: Sequence[FileRecord],
    plan_edges: Iterable[tuple[str, str]] | None = None,
) -> RepositoryGraph:
    """Build the repository graph from import statements.

    When import scanning yields no edges at all, falls back to the
    role-level plan edges (config-object dataflow is invisible to imports).
    Raises CycleDetected when the result is not a DAG.
    """
    ids = {rec.file_id for rec in files}
    edges = scan_imports(files)
    if not edges and plan_edges:
        edges = {(u, v) for u, v in plan_edges if u in ids and v in ids and u != v}
    for u, v in edges:
        if u not in ids or v not in ids:
            raise UnknownNode(f"edge endpoint not in repository: {(u, v)}")
    cycle = _find_cycle(ids, _adjacency(edges))
    if cycle:
        raise CycleDetected(cycle)
    return RepositoryGraph(files={rec.file_id: rec for rec in files}, edges=edges)


def topological_order(graph: RepositoryGraph) -> list[str]:
    """Dependency-respecting order of file ids, lexicographic among ties."""
    indegree = {n: 0 for n in graph.files}
    adj = _adjacency(graph.edges)
    for u, v in graph.edges:
        indegree[v] += 1
    heap = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        node = heapq.heappop(heap)
        order.append(node)
        for succ in sorted(adj.get(node, ())):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                heapq.heappush(heap, succ)
    if len(order) != len(graph.files):
        cycle = _find_cycle(graph.files, adj)
        raise CycleDetected(cycle or [n for n in graph.files if n not in order])
    return order


def reachability(graph: RepositoryGraph, a: str, b: str) -> bool:
    """True iff a dependency path a -> ... -> b exists."""
    if a not in graph.files or b not in graph.files:
        raise UnknownNode(f"unknown file id: {a if a not in graph.files else b}")
    adj = _adjacency(graph.edges)
    seen = {a}
    frontier = [a]
    while frontier:
        node = frontier.pop()
        for succ in adj.get(node, ()):
            if succ == b:
                return True
            if succ not in seen:
                seen.add(succ)
                frontier.append(succ)
    return False


def ancestors(graph: RepositoryGraph, file_id: str) -> set[str]:
    """All files the given file transitively depends on."""
    if file_id not in graph.files:
        raise UnknownNode(file_id)
    rev: dict[str, set[str]] = {}
    for u, v in graph.edges:
        rev.setdefault(v, set()).add(u)
    seen: set[str] = set()
    frontier = [file_id]
    while frontier:
        node = frontier.pop()
        for pred in rev.get(node, ()):
            if pred not in seen:
                seen.add(pred)
                frontier.append(pred)
    return seen
