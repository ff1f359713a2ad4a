"""Compositional citation recovery: borrowed-component discovery, transitive
resolution over cited papers, and component extraction.

Resolution follows only component-bearing citations (a borrow phrase or a
gateway finding), visits each paper once, and marks unfetchable papers
unresolvable rather than failing the run.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .fetch import NotFound, WebFetcher
from .gateway import LlmGateway, simple_request
from .ingest import Equation, PaperDocument


class DepthExceeded(Exception):
    """Recursive resolution ran past the configured hop budget."""


class ComponentNotFound(Exception):
    def __init__(self, name: str, provider: str):
        self.name = name
        self.provider = provider
        super().__init__(f"component {name!r} not found in {provider}")


KINDS = ("architectural-module", "loss-function", "training-protocol")

_PROTOCOL_WORDS = (
    "sampling", "schedule", "protocol", "optimization", "training", "warmup",
    "annealing", "stop gradient", "stop-gradient", "curriculum",
)


def normalize_component(name: str) -> str:
    """Canonical component key: lowercase, hyphens to spaces, collapsed runs."""
    return re.sub(r"\s+", " ", name.lower().replace("-", " ")).strip()


def classify_kind(name: str) -> str:
    lowered = normalize_component(name)
    if "loss" in lowered:
        return "loss-function"
    if any(w in lowered for w in _PROTOCOL_WORDS):
        return "training-protocol"
    return "architectural-module"


@dataclass
class CitationRequirement:
    source_key: str
    borrowed: list[str]
    evidence: str


@dataclass
class ComponentSpec:
    kind: str
    name: str
    equations: list[Equation]
    excerpt: str


@dataclass
class CitationGraph:
    target: str
    nodes: dict[str, PaperDocument | None] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)  # (provider, consumer)
    requirements: dict[str, list[CitationRequirement]] = field(default_factory=dict)
    extracted: dict[tuple[str, str], ComponentSpec] = field(default_factory=dict)
    extraction_failures: dict[tuple[str, str], str] = field(default_factory=dict)
    unresolvable: dict[str, str] = field(default_factory=dict)

    def node_count(self) -> int:
        return len(self.nodes)

    def direct_requirements(self) -> list[CitationRequirement]:
        return self.requirements.get(self.target, [])

    def components_for_target(self) -> list[ComponentSpec]:
        """Extracted components, direct requirements first, stable order."""
        ordered: list[ComponentSpec] = []
        seen = set()
        keys = [self.target] + sorted(k for k in self.requirements if k != self.target)
        for consumer in keys:
            for req in self.requirements.get(consumer, []):
                for name in req.borrowed:
                    spec = self.extracted.get((req.source_key, normalize_component(name)))
                    if spec is not None and id(spec) not in seen:
                        seen.add(id(spec))
                        ordered.append(spec)
        return ordered

    def to_dict(self) -> dict:
        status = {}
        for key, doc in self.nodes.items():
            if key in self.unresolvable:
                status[key] = {"status": "unresolvable", "reason": self.unresolvable[key]}
            elif doc is None:
                status[key] = {"status": "pending"}
            else:
                status[key] = {"status": "resolved", "title": doc.title()}
        return {
            "target": self.target,
            "nodes": status,
            "edges": sorted(list(e) for e in self.edges),
            "requirements": {
                key: [
                    {"source_key": r.source_key, "borrowed": r.borrowed, "evidence": r.evidence}
                    for r in reqs
                ]
                for key, reqs in sorted(self.requirements.items())
            },
            "extracted": [
                {"provider": provider, "name": name, "kind": spec.kind}
                for (provider, name), spec in sorted(self.extracted.items())
            ],
            "extraction_failures": [
                {"provider": provider, "name": name, "reason": reason}
                for (provider, name), reason in sorted(self.extraction_failures.items())
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


# Pattern tier: "the <component> from [key]" and "we adopt <component> ... [key]".
# Names may wrap across line breaks inside a paragraph, hence \s in the class.
_BORROW_PATTERNS = [
    re.compile(
        r"\bwe\s+(?:use|adopt|follow|employ|borrow|extend|inherit)\s+(?:the\s+|a\s+|an\s+)?"
        r"([A-Za-z][A-Za-z0-9\s-]{2,60}?)\s+(?:of|from)\s+\[([A-Za-z0-9_:.-]+)\]",
        re.IGNORECASE,
    ),
    re.compile(
        r"\b(?:the|a|an)\s+([A-Za-z][A-Za-z0-9\s-]{2,60}?)\s+(?:of|from)\s+\[([A-Za-z0-9_:.-]+)\]",
        re.IGNORECASE,
    ),
]

_DISCOVER_SCHEMA = {
    "type": "object",
    "properties": {
        "requirements": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "cite_key": {"type": "string"},
                    "components": {"type": "array", "items": {"type": "string"}},
                    "evidence": {"type": "string"},
                },
                "required": ["cite_key", "components"],
            },
        }
    },
    "required": ["requirements"],
}


def discover_dependencies(doc: PaperDocument, gateway: LlmGateway | None = None) -> list[CitationRequirement]:
    """Find borrowed components: deterministic regex tier plus an optional
    gateway tier; the union, grouped one requirement per cited key."""
    ref_keys = set(doc.reference_keys())
    borrowed: dict[str, list[str]] = {}
    evidence: dict[str, str] = {}

    def add(key: str, name: str, span: str) -> None:
        if key not in ref_keys:
            return
        canonical = normalize_component(name)
        if not canonical:
            return
        names = borrowed.setdefault(key, [])
        if canonical not in names:
            names.append(canonical)
        evidence.setdefault(key, span)

    blocks = [p.text for p in doc.paragraphs] + [a.text for a in doc.algorithm_blocks]
    for text in blocks:
        for pattern in _BORROW_PATTERNS:
            for match in pattern.finditer(text):
                add(match.group(2), match.group(1), match.group(0))

    if gateway is not None:
        prompt = (
            "List components this paper borrows from its citations as JSON "
            '{"requirements": [{"cite_key", "components", "evidence"}]}. '
            "Cite keys must come from the bibliography.\n\n" + doc.body_text()[:6000]
        )
        response = gateway.complete(
            simple_request(prompt, tag="discover", schema=_DISCOVER_SCHEMA, model_id=gateway.model_id("text"))
        )
        body = doc.body_text()
        for item in (response.structured or {}).get("requirements", []):
            key = item["cite_key"]
            span = item.get("evidence", "")
            if span and span not in body:
                span = _line_citing(doc, key)
            for name in item["components"]:
                add(key, name, span or _line_citing(doc, key))

    out = []
    for key in borrowed:
        out.append(CitationRequirement(source_key=key, borrowed=borrowed[key], evidence=evidence.get(key, "")))
    return out


def _line_citing(doc: PaperDocument, key: str) -> str:
    marker = f"[{key}]"
    for p in doc.paragraphs:
        if marker in p.text:
            start = p.text.index(marker)
            return p.text[max(0, start - 80) : start + len(marker)]
    return marker


def _find_excerpt(provider_doc: PaperDocument, name: str) -> tuple[str, list[Equation]] | None:
    """Locate a verbatim paragraph (or algorithm block) describing the component.

    Prefers a paragraph followed by display equations (the formula the
    borrower needs) over an earlier mention in, say, the abstract.
    """
    needle = normalize_component(name)

    def normalized(text: str) -> str:
        return re.sub(r"\s+", " ", text.lower().replace("-", " "))

    matches = []
    for para in provider_doc.paragraphs:
        if needle in normalized(para.text):
            matches.append((para.text, provider_doc.equations_following(para)))
    for text, equations in matches:
        if equations:
            return text, equations
    if matches:
        return matches[0]
    for block in provider_doc.algorithm_blocks:
        if needle in normalized(block.text):
            return block.text, []
    return None


_EXTRACT_SCHEMA = {
    "type": "object",
    "properties": {
        "components": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"name": {"type": "string"}, "kind": {"type": "string", "enum": list(KINDS)}},
                "required": ["name", "kind"],
            },
        }
    },
    "required": ["components"],
}


def extract_components(
    provider_doc: PaperDocument,
    req: CitationRequirement,
    gateway: LlmGateway | None = None,
) -> list[ComponentSpec]:
    """One ComponentSpec per borrowed name, excerpted verbatim from the provider.

    Kind comes from the keyword taxonomy, overridable by the gateway tier.
    Raises ComponentNotFound for a name the provider never describes.
    """
    kind_override: dict[str, str] = {}
    if gateway is not None:
        prompt = (
            "Classify each component as architectural-module, loss-function or "
            "training-protocol. Components: " + ", ".join(req.borrowed)
        )
        response = gateway.complete(
            simple_request(prompt, tag="extract", schema=_EXTRACT_SCHEMA, model_id=gateway.model_id("text"))
        )
        for item in (response.structured or {}).get("components", []):
            kind_override[normalize_component(item["name"])] = item["kind"]

    specs = []
    for name in req.borrowed:
        canonical = normalize_component(name)
        located = _find_excerpt(provider_doc, canonical)
        if located is None:
            raise ComponentNotFound(canonical, provider_doc.id)
        excerpt, equations = located
        specs.append(
            ComponentSpec(
                kind=kind_override.get(canonical, classify_kind(canonical)),
                name=canonical,
                equations=equations,
                excerpt=excerpt,
            )
        )
    return specs


def resolve_transitive(
    target: PaperDocument,
    fetcher: WebFetcher,
    gateway: LlmGateway | None = None,
    max_depth: int = 4,
    extract: bool = True,
) -> CitationGraph:
    """Fixpoint of the component-bearing citation recursion from the target.

    Breadth-first with a visited set, so cyclic citation data terminates and
    each paper is fetched at most once. Raises DepthExceeded when expansion
    would pass `max_depth` hops from the target.
    """
    graph = CitationGraph(target=target.id, nodes={target.id: target})
    queue: list[tuple[str, int]] = [(target.id, 0)]
    visited = {target.id}
    while queue:
        key, depth = queue.pop(0)
        doc = graph.nodes.get(key)
        if doc is None:
            continue
        reqs = discover_dependencies(doc, gateway)
        graph.requirements[key] = reqs
        for req in reqs:
            graph.edges.add((req.source_key, key))
            if req.source_key in visited:
                continue
            visited.add(req.source_key)
            if depth + 1 > max_depth:
                raise DepthExceeded(f"dependency {req.source_key} exceeds max depth {max_depth}")
            entry = next(r for r in doc.references if r.cite_key == req.source_key)
            try:
                graph.nodes[req.source_key] = fetcher.fetch(entry)
            except NotFound as exc:
                graph.nodes[req.source_key] = None
                graph.unresolvable[req.source_key] = str(exc) or "not found"
            queue.append((req.source_key, depth + 1))

    if extract:
        extract_all(graph, gateway)
    return graph


def extract_all(graph: CitationGraph, gateway: LlmGateway | None = None) -> None:
    """Extraction pass over every requirement whose provider resolved."""
    for consumer in sorted(graph.requirements):
        for req in graph.requirements[consumer]:
            provider_doc = graph.nodes.get(req.source_key)
            if provider_doc is None:
                continue
            for name in req.borrowed:
                canonical = normalize_component(name)
                key = (req.source_key, canonical)
                if key in graph.extracted or key in graph.extraction_failures:
                    continue
                single = CitationRequirement(source_key=req.source_key, borrowed=[name], evidence=req.evidence)
                try:
                    spec = extract_components(provider_doc, single, gateway)[0]
                    graph.extracted[key] = spec
                except ComponentNotFound as exc:
                    graph.extraction_failures[key] = str(exc)


def is_resolved(graph: CitationGraph) -> tuple[bool, list[str]]:
    """True when nothing is pending and every borrowed component is either
    extracted or explicitly marked unresolvable."""
    report: list[str] = []
    for key, doc in sorted(graph.nodes.items()):
        if doc is None and key not in graph.unresolvable:
            report.append(f"pending fetch: {key}")
    for consumer in sorted(graph.requirements):
        for req in graph.requirements[consumer]:
            if req.source_key in graph.unresolvable:
                continue
            for name in req.borrowed:
                key = (req.source_key, normalize_component(name))
                if key not in graph.extracted and key not in graph.extraction_failures:
                    report.append(f"unextracted component: {name!r} from {req.source_key}")
    return (not report, report)
