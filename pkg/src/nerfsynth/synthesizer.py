"""Graph-of-thought repository synthesis: DAG construction, interface freeze,
implementation and integration testing with budgeted repair.

Every loop is budget-bounded, every event lands in an append-only log whose
`ts` is a monotone counter (not wall time) so replayed runs are byte-stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import artifacts
from .citations import CitationGraph, ComponentSpec, KINDS, is_resolved, normalize_component, resolve_transitive
from .fetch import WebFetcher
from .gateway import LlmGateway, simple_request
from .grammar import (
    DerivationPlan,
    NoDerivation,
    PluginGrammar,
    derive_plan,
    parse_signature,
    unify_shapes,
    UnifyMismatch,
    validate_repository,
)
from .ingest import PaperDocument, PreservationViolation, clean_document, validate_completeness
from .knowledge import KnowledgeBase
from .repograph import FileInterface, FileRecord, RepositoryGraph, build_repo_dag, topological_order
from .sandbox import SandboxRunner, SmokeReport


class SynthesisError(Exception):
    pass


class UnassignedComponent(SynthesisError):
    pass


class ContractUnsatisfiable(SynthesisError):
    def __init__(self, file_id: str, reason: str):
        self.file_id = file_id
        super().__init__(f"{file_id}: {reason}")


class LocalContractFailure(SynthesisError):
    def __init__(self, file_id: str, reason: str):
        self.file_id = file_id
        super().__init__(f"{file_id}: {reason}")


class RepairBudgetExhausted(SynthesisError):
    def __init__(self, report: SmokeReport):
        self.report = report
        super().__init__(f"repair budget exhausted; last error: {report.error}")


@dataclass(frozen=True)
class SynthConfig:
    interface_reprompts: int = 2
    node_reprompts: int = 3
    repair_rounds: int = 3
    smoke_iters: int = 3000
    exemplar_count: int = 2


@dataclass
class NodeSpec:
    file_id: str
    role: str
    components: list[ComponentSpec] = field(default_factory=list)
    excerpts: list[str] = field(default_factory=list)
    exemplar_snippets: list[str] = field(default_factory=list)


@dataclass
class EventLog:
    events: list[dict] = field(default_factory=list)

    def emit(self, phase: str, event: str, detail: str = "", node: str | None = None) -> None:
        entry: dict = {"ts": len(self.events), "phase": phase, "event": event, "detail": detail}
        if node is not None:
            entry["node"] = node
        self.events.append(entry)

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(e, sort_keys=True) for e in self.events]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class SynthesisState:
    plan: DerivationPlan
    node_specs: dict[str, NodeSpec]
    interfaces: dict[str, FileInterface] = field(default_factory=dict)
    frozen: set[str] = field(default_factory=set)
    sources: dict[str, str] = field(default_factory=dict)
    attempts: dict[str, int] = field(default_factory=dict)
    log: EventLog = field(default_factory=EventLog)

    def plan_graph(self) -> RepositoryGraph:
        files = {
            path: FileRecord(path, path, role, self.sources.get(path, ""))
            for role, path in self.plan.nodes
        }
        return RepositoryGraph(files=files, edges=set(self.plan.edges))

    def order(self) -> list[str]:
        return topological_order(self.plan_graph())

    def ancestors_of(self, path: str) -> set[str]:
        from .repograph import ancestors

        return ancestors(self.plan_graph(), path)


_PLAN_SCHEMA = {
    "type": "object",
    "properties": {
        "extra_nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"role": {"type": "string"}, "name": {"type": "string"}},
                "required": ["role", "name"],
            },
        },
        "equation_assignments": {"type": "object"},
    },
}

_INTERFACE_SCHEMA = {
    "type": "object",
    "properties": {
        "exports": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"name": {"type": "string"}, "signature": {"type": "string"}},
                "required": ["name"],
            },
        },
        "imports": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"name": {"type": "string"}, "from": {"type": "string"}},
                "required": ["name", "from"],
            },
        },
    },
    "required": ["exports", "imports"],
}


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def construct_dag(
    doc: PaperDocument,
    graph: CitationGraph,
    grammar: PluginGrammar,
    gateway: LlmGateway,
    kb: KnowledgeBase | None = None,
    exemplar_count: int = 2,
) -> tuple[DerivationPlan, dict[str, NodeSpec], list[int]]:
    """Map the paper and its recovered components onto plugin-grammar nodes.

    Returns the validated plan, per-file node specs, and the indices of
    method-section equations no node claimed (the uncovered report).
    """
    components = graph.components_for_target()
    for comp in components:
        if comp.kind not in KINDS:
            raise UnassignedComponent(f"component {comp.name!r} has unknown kind {comp.kind!r}")

    outline = "\n".join(f"{'#' * h.level} {h.text}" for h in doc.headings)
    prompt = (
        "Propose any additional plugin nodes this paper needs beyond its borrowed "
        "components, as JSON {\"extra_nodes\": [{\"role\", \"name\"}]}. Roles: "
        + ", ".join(sorted(grammar.roles()))
        + ".\nOutline:\n" + outline
        + "\nComponents: " + (", ".join(c.name for c in components) or "none")
    )
    response = gateway.complete(
        simple_request(prompt, tag="plan", schema=_PLAN_SCHEMA, model_id=gateway.model_id("text"))
    )
    extra = (response.structured or {}).get("extra_nodes", [])

    plan = derive_plan(grammar, components)
    nodes = list(plan.nodes)
    existing_roles = {r for r, _ in nodes}
    named_nodes: list[tuple[str, str, str]] = []  # (role, path, name)
    for item in extra:
        role, name = item["role"], item["name"]
        if role not in grammar.roles():
            raise NoDerivation(f"proposed node role {role!r} not in grammar")
        if role in ("Encoder", "Sampler", "Loss"):
            path = f"{role.lower()}_{_slug(name)}.py"
            if path not in {p for _, p in nodes}:
                nodes.append((role, path))
                named_nodes.append((role, path, name))
        elif role not in existing_roles:
            path = f"{role.lower()}.py"
            nodes.append((role, path))
            named_nodes.append((role, path, name))
            existing_roles.add(role)
    if not grammar.derivable([r for r, _ in nodes]):
        raise NoDerivation(f"role multiset not derivable: {sorted(r for r, _ in nodes)}")

    from .grammar import _plan_edges

    plan = DerivationPlan(nodes=nodes, edges=_plan_edges(nodes), production_trace=plan.production_trace)

    # Component-to-node assignment mirrors derive_plan's layout rule.
    specs: dict[str, NodeSpec] = {path: NodeSpec(file_id=path, role=role) for role, path in nodes}
    node_names: dict[str, str] = {path: name for _, path, name in named_nodes}
    for comp in components:
        from .grammar import _role_for_component

        role = _role_for_component(comp.kind, comp.name, bool(comp.equations))
        if role in ("Encoder", "Sampler", "Loss"):
            path = f"{role.lower()}_{_slug(comp.name)}.py"
        else:
            path = next(p for r, p in nodes if r == role)
        spec = specs[path]
        spec.components.append(comp)
        spec.excerpts.append(comp.excerpt)
        spec.excerpts.extend(e.source for e in comp.equations)

    # Equation coverage over method-like sections.
    method_sections = {
        i for i, h in enumerate(doc.headings) if re.search(r"method|approach|model", h.text, re.IGNORECASE)
    }
    assignments = (response.structured or {}).get("equation_assignments", {})
    uncovered: list[int] = []
    path_set = {p for _, p in nodes}
    for eq in doc.equations:
        if eq.section not in method_sections:
            continue
        target = assignments.get(str(eq.index))
        if target in path_set:
            specs[target].excerpts.append(eq.source)
            continue
        owner = _equation_owner(doc, eq, specs, node_names)
        if owner is not None:
            specs[owner].excerpts.append(eq.source)
        else:
            uncovered.append(eq.index)

    if kb is not None and len(kb):
        for entry in kb.top_by_role_overlap([r for r, _ in nodes], k=exemplar_count):
            for rec in kb.repo_files(entry.id):
                if rec.role in {r for r, _ in nodes}:
                    path = next(p for r, p in nodes if r == rec.role)
                    snippet = "\n".join(rec.source.splitlines()[:30])
                    specs[path].exemplar_snippets.append(f"# exemplar {entry.id}/{rec.path}\n{snippet}")
    return plan, specs, uncovered


def _equation_owner(
    doc: PaperDocument,
    eq,
    specs: dict[str, NodeSpec],
    node_names: dict[str, str],
) -> str | None:
    """Attribute an equation to the node whose component (or given name) the
    preceding paragraph mentions."""
    preceding = [p for p in doc.paragraphs if p.section == eq.section and p.order < eq.order]
    if not preceding:
        return None
    context = normalize_component(preceding[-1].text)
    for path in sorted(specs):
        names = [c.name for c in specs[path].components]
        if path in node_names:
            names.append(normalize_component(node_names[path]))
        if any(name and name in context for name in names):
            return path
    return None


def _contract_text(grammar: PluginGrammar, role: str) -> str:
    contract = grammar.contracts.get(role)
    if contract is None:
        return "no contract"
    exports = ", ".join(
        name + (sig.to_text() if sig else "") for name, sig in contract.required_exports
    ) or "none"
    return f"required exports: {exports}; may import roles: {sorted(contract.allowed_import_roles) or []}"


def _check_interface(
    grammar: PluginGrammar,
    state: SynthesisState,
    path: str,
    iface: FileInterface,
) -> str | None:
    """Contract check for one frozen interface; returns a violation or None."""
    role = next(r for r, p in state.plan.nodes if p == path)
    contract = grammar.contracts.get(role)
    exported = dict(iface.exports)
    for name, sig in (contract.required_exports if contract else []):
        if name not in exported:
            return f"missing required export {name!r}"
        if sig is not None:
            found = exported[name]
            if found is None:
                return f"export {name!r} needs signature {sig.to_text()!r}"
            outcome = unify_shapes(sig, found)
            if isinstance(outcome, UnifyMismatch):
                return f"export {name!r} shape mismatch: {outcome}"
    ancestors = state.ancestors_of(path)
    roles = dict((p, r) for r, p in state.plan.nodes)
    allowed = contract.allowed_import_roles if contract else set()
    for name, provider in iface.imports:
        if provider not in ancestors:
            return f"import {name!r} from {provider} which is not a plan ancestor"
        if roles.get(provider) not in allowed:
            return f"role {role} may not import from role {roles.get(provider)}"
        provider_iface = state.interfaces.get(provider)
        if provider_iface is None or name not in provider_iface.export_names():
            return f"import {name!r} not exported by {provider}"
    return None


def freeze_interfaces(
    state: SynthesisState,
    grammar: PluginGrammar,
    gateway: LlmGateway,
    config: SynthConfig = SynthConfig(),
) -> SynthesisState:
    """Commit public surfaces in topological order; each must satisfy its
    role contract and import only frozen ancestor exports."""
    for path in state.order():
        spec = state.node_specs[path]
        ancestor_ifaces = "\n".join(
            json.dumps(state.interfaces[a].to_dict(), sort_keys=True) for a in sorted(state.frozen & state.ancestors_of(path))
        )
        base_prompt = (
            f"Freeze the public interface of {path} (role {spec.role}).\n"
            f"Contract: {_contract_text(grammar, spec.role)}\n"
            f"Ancestor interfaces:\n{ancestor_ifaces or 'none'}\n"
            f"Paper excerpts:\n" + "\n".join(spec.excerpts[:4])
            + "\nReturn JSON {\"exports\": [{\"name\", \"signature\"?}], \"imports\": [{\"name\", \"from\"}]}."
        )
        violation = None
        for attempt in range(config.interface_reprompts + 1):
            prompt = base_prompt if violation is None else f"{base_prompt}\nPrevious attempt violated: {violation}"
            response = gateway.complete(
                simple_request(prompt, tag=f"freeze:{path}", schema=_INTERFACE_SCHEMA,
                               model_id=gateway.model_id("text"))
            )
            iface = _interface_from_response(path, response.structured or {})
            violation = _check_interface(grammar, state, path, iface)
            if violation is None:
                state.interfaces[path] = iface
                state.frozen.add(path)
                state.log.emit("freeze", "interface-frozen", node=path,
                               detail=", ".join(iface.export_names()))
                break
            state.log.emit("freeze", "contract-violation", node=path, detail=violation)
        else:
            raise ContractUnsatisfiable(path, violation or "unknown")
    return state


def _interface_from_response(path: str, data: dict) -> FileInterface:
    exports: list[tuple[str, object]] = []
    for item in data.get("exports", []):
        sig_text = item.get("signature")
        sig = parse_signature(item["name"] + sig_text) if sig_text else None
        exports.append((item["name"], sig))
    imports = [(i["name"], i["from"]) for i in data.get("imports", [])]
    return FileInterface(file_id=path, exports=exports, imports=imports)


_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```\s*$", re.DOTALL)
_NAME_DEF = r"(?:^|\n)\s*(?:def\s+{0}\s*\(|class\s+{0}\b|{0}\s*=)"


def _code_violations(state: SynthesisState, path: str, code: str) -> str | None:
    iface = state.interfaces[path]
    for name in iface.export_names():
        if not re.search(_NAME_DEF.format(re.escape(name)), code):
            return f"declared export {name!r} not defined in the file"
    files = [FileRecord(p, p, r, "") for r, p in state.plan.nodes]
    from .repograph import scan_imports

    candidate = [FileRecord(path, path, "", code) if rec.file_id == path else rec for rec in files]
    edges = scan_imports(candidate)
    ancestors = state.ancestors_of(path)
    for provider, consumer in edges:
        if consumer != path:
            continue
        if provider not in ancestors:
            return f"imports {provider} which is not an ancestor of {path}"
    iface_exports = {p: set(state.interfaces[p].export_names()) for p in state.interfaces}
    for match in re.finditer(r"^\s*from\s+\.([\w.]*)\s+import\s+([^\n]+)", code, re.MULTILINE):
        module = match.group(1)
        provider = module.replace(".", "/") + ".py"
        if provider not in iface_exports:
            continue
        names = [n.strip().split(" as ")[0] for n in match.group(2).split(",")]
        unknown = [n for n in names if n and n != "*" and n not in iface_exports[provider]]
        if unknown:
            return f"imports {unknown} not exported by {provider}"
    return None


def implement_node(
    state: SynthesisState,
    path: str,
    gateway: LlmGateway,
    config: SynthConfig = SynthConfig(),
    error_context: str = "",
) -> str:
    """Generate one file against its frozen interface; local contract
    failures trigger budgeted reprompts carrying the violation text."""
    missing = [a for a in state.ancestors_of(path) if a not in state.frozen]
    if missing or path not in state.frozen:
        raise SynthesisError(f"cannot implement {path}: unfrozen {missing or [path]}")
    spec = state.node_specs[path]
    iface = state.interfaces[path]
    base_prompt = (
        f"Implement {path} (role {spec.role}) in Python.\n"
        f"Interface to satisfy exactly: {json.dumps(iface.to_dict(), sort_keys=True)}\n"
        f"Paper excerpts:\n" + "\n".join(spec.excerpts[:6])
        + ("\nExemplars:\n" + "\n".join(spec.exemplar_snippets[:2]) if spec.exemplar_snippets else "")
        + (f"\nPrevious failure:\n{error_context}" if error_context else "")
        + "\nReturn only the file content."
    )
    violation = None
    for attempt in range(config.node_reprompts + 1):
        prompt = base_prompt if violation is None else f"{base_prompt}\nPrevious attempt violated: {violation}"
        response = gateway.complete(
            simple_request(prompt, tag=f"impl:{path}", model_id=gateway.model_id("text"))
        )
        code = response.text
        fenced = _FENCE.match(code.strip())
        if fenced:
            code = fenced.group(1)
        if not code.endswith("\n"):
            code += "\n"
        violation = _code_violations(state, path, code)
        if violation is None:
            state.sources[path] = code
            state.attempts[path] = state.attempts.get(path, 0) + attempt
            state.log.emit("implement", "node-implemented", node=path, detail=f"attempt {attempt + 1}")
            return code
        state.log.emit("implement", "local-contract-failure", node=path, detail=violation)
    raise LocalContractFailure(path, violation or "unknown")


def integration_test(
    state: SynthesisState,
    sandbox: SandboxRunner,
    repo_dir: str | Path,
    iters: int = 3000,
) -> SmokeReport:
    """Write the repository to disk and smoke-train it in the sandbox."""
    graph = build_repo_dag(
        [FileRecord(p, p, r, state.sources[p]) for r, p in state.plan.nodes],
        plan_edges=state.plan.edges,
    )
    artifacts.write_repo(repo_dir, graph, state.interfaces)
    report = sandbox.run_smoke(repo_dir, iters)
    state.log.emit(
        "test", "smoke-complete",
        detail=f"steps={report.steps_completed} nan={report.nan_detected} error={bool(report.error)}",
    )
    return report


def locate_fault(state: SynthesisState, report: SmokeReport) -> str:
    """Map a failure report to the plan node owning it; Pipeline by default."""
    paths = {p for _, p in state.plan.nodes}
    error = report.error or {}
    candidate = error.get("file", "")
    if candidate in paths:
        return candidate
    for token in re.findall(r"[\w/]+\.py", error.get("traceback", "")):
        if token in paths:
            return token
    for role, path in state.plan.nodes:
        if role == "Pipeline":
            return path
    return sorted(paths)[0]


def repair(
    state: SynthesisState,
    report: SmokeReport,
    gateway: LlmGateway,
    config: SynthConfig = SynthConfig(),
) -> str:
    """Re-implement exactly the node implicated by the failing report."""
    if report.error is None:
        raise SynthesisError("repair requires a failing report")
    path = locate_fault(state, report)
    state.log.emit("repair", "fault-localized", node=path, detail=report.error.get("stage", ""))
    context = f"stage={report.error.get('stage')}; traceback:\n{report.error.get('traceback', '')}"
    implement_node(state, path, gateway, config, error_context=context)
    return path


@dataclass
class SynthesisResult:
    repo_dir: Path
    graph: RepositoryGraph
    interfaces: dict[str, FileInterface]
    report: SmokeReport
    log: EventLog
    validation: dict
    citation_graph: CitationGraph | None = None
    uncovered_equations: list[int] = field(default_factory=list)


def synthesize(
    doc: PaperDocument,
    kb: KnowledgeBase | None,
    grammar: PluginGrammar,
    fetcher: WebFetcher,
    gateway: LlmGateway,
    sandbox: SandboxRunner,
    out_dir: str | Path,
    config: SynthConfig = SynthConfig(),
) -> SynthesisResult:
    """End-to-end synthesis of one paper into a validated plugin repository.

    Raises ContractUnsatisfiable, LocalContractFailure or
    RepairBudgetExhausted on terminal failure; the event log is written to
    `events.jsonl` in either outcome.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    repo_dir = out_dir / "repo"
    log = EventLog()
    try:
        log.emit("ingest", "start", detail=doc.id)
        try:
            doc = clean_document(doc, gateway)
            log.emit("ingest", "cleaned", detail=f"{len(doc.headings)} sections kept")
        except PreservationViolation as exc:
            log.emit("ingest", "clean-rejected", detail=str(exc))
        findings = validate_completeness(doc)
        if findings:
            log.emit("ingest", "completeness-findings", detail=", ".join(findings))
        if kb is None or not len(kb):
            log.emit("ingest", "degraded-context", detail="knowledge base empty; no exemplars")

        citation_graph = resolve_transitive(doc, fetcher, gateway)
        resolved, unresolved = is_resolved(citation_graph)
        log.emit(
            "citations", "resolved",
            detail=f"nodes={citation_graph.node_count()} complete={resolved}"
                   + (f" warnings={unresolved}" if unresolved else ""),
        )
        citation_graph.save(out_dir / "citations.json")

        plan, specs, uncovered = construct_dag(doc, citation_graph, grammar, gateway, kb,
                                               exemplar_count=config.exemplar_count)
        state = SynthesisState(plan=plan, node_specs=specs, log=log)
        log.emit("dag", "plan-constructed", detail=" ".join(sorted(p for _, p in plan.nodes)))
        if uncovered:
            log.emit("dag", "uncovered-equations", detail=",".join(str(i) for i in uncovered))

        freeze_interfaces(state, grammar, gateway, config)
        for path in state.order():
            implement_node(state, path, gateway, config)

        report = integration_test(state, sandbox, repo_dir, iters=config.smoke_iters)
        rounds = 0
        while report.error is not None and rounds < config.repair_rounds:
            rounds += 1
            repair(state, report, gateway, config)
            report = integration_test(state, sandbox, repo_dir, iters=config.smoke_iters)
        if report.error is not None:
            log.emit("test", "terminal", detail="repair-budget-exhausted")
            raise RepairBudgetExhausted(report)

        files = [FileRecord(p, p, r, state.sources[p]) for r, p in state.plan.nodes]
        validation = validate_repository(grammar, files, state.interfaces)
        (out_dir / "validation.json").write_text(validation.to_json() + "\n")
        if not validation.passed:
            log.emit("validate", "terminal", detail="grammar-validation-failed")
            raise SynthesisError(f"generated repository fails validation: {validation.to_json()}")
        log.emit("validate", "grammar-pass")

        report.save(out_dir / "smoke_report.json")
        log.emit("done", "terminal", detail="success")
        graph = build_repo_dag(files, plan_edges=state.plan.edges)
        return SynthesisResult(
            repo_dir=repo_dir,
            graph=graph,
            interfaces=state.interfaces,
            report=report,
            log=log,
            validation=validation.to_dict(),
            citation_graph=citation_graph,
            uncovered_equations=uncovered,
        )
    finally:
        log.save(out_dir / "events.jsonl")
