"""Context-free plugin grammar: role productions, interface contracts, validation.

The grammar formalizes which file-role compositions form a valid plugin and
what public surface each role must expose. Repositories are validated
post-hoc against it; derivation plans are checked for derivability by
exhaustive expansion (the grammar is small enough that brute force is fine).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .repograph import (
    FileInterface,
    FileRecord,
    RepositoryGraph,
    _adjacency,
    _find_cycle,
    ancestors,
    scan_imports,
)

START_SYMBOL = "Plugin"

DEFAULT_GRAMMAR_PATH = Path(__file__).parent / "data" / "default_grammar.cfg"


class GrammarError(Exception):
    """Malformed grammar file: undeclared symbol, unreachable role, bad line."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NoDerivation(Exception):
    """The requested component mix cannot be realized by any production."""


Dim = "str | int"


@dataclass(frozen=True)
class ShapeSignature:
    """Callable surface with symbolic tensor shapes.

    Dims are positive integer literals or single-uppercase-letter symbols;
    the result is either one dim vector or a named map of dim vectors.
    """

    name: str
    params: tuple[tuple[str, tuple[object, ...]], ...] = ()
    result: tuple[object, ...] | tuple[tuple[str, tuple[object, ...]], ...] | None = None
    result_named: bool = False

    def to_text(self) -> str:
        out = ""
        if self.params or self.result is not None:
            out += "(" + ", ".join(f"{n}{_dims_text(d)}" for n, d in self.params) + ")"
        if self.result is not None:
            if self.result_named:
                inner = ", ".join(f"{n}:{_dims_text(d)}" for n, d in self.result)  # type: ignore[misc]
                out += " -> {" + inner + "}"
            else:
                out += " -> " + _dims_text(self.result)
        return out


def _dims_text(dims: Sequence[object]) -> str:
    return "[" + ",".join(str(d) for d in dims) + "]"


_DIMS_RE = re.compile(r"\[([^\[\]]*)\]")
_SIG_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(\((.*?)\))?\s*(->\s*(.+))?\s*$")


def _parse_dims(text: str) -> tuple[object, ...]:
    dims: list[object] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token.isdigit():
            value = int(token)
            if value <= 0:
                raise ValueError(f"literal dim must be positive: {token}")
            dims.append(value)
        elif re.fullmatch(r"[A-Z]", token):
            dims.append(token)
        else:
            raise ValueError(f"bad dim {token!r} (single uppercase symbol or positive int)")
    return tuple(dims)


def parse_signature(text: str) -> ShapeSignature:
    """Parse `name(param[dims], ...) -> [dims] | {key:[dims], ...}`.

    Both the parameter list and the result are optional; a bare name is a
    contract for existence only.
    """
    match = _SIG_RE.match(text)
    if not match:
        raise ValueError(f"unparseable signature: {text!r}")
    name = match.group(1)
    params: list[tuple[str, tuple[object, ...]]] = []
    if match.group(3):
        for part in _split_top(match.group(3)):
            pm = re.match(r"^\s*([A-Za-z_]\w*)\s*(\[[^\]]*\])?\s*$", part)
            if not pm:
                raise ValueError(f"bad parameter {part!r} in {text!r}")
            dims = _parse_dims(pm.group(2)[1:-1]) if pm.group(2) else ()
            params.append((pm.group(1), dims))
    result: object = None
    result_named = False
    if match.group(5):
        res_text = match.group(5).strip()
        if res_text.startswith("{"):
            if not res_text.endswith("}"):
                raise ValueError(f"unclosed result map in {text!r}")
            named: list[tuple[str, tuple[object, ...]]] = []
            for part in _split_top(res_text[1:-1]):
                key, _, dims_text = part.partition(":")
                dm = _DIMS_RE.fullmatch(dims_text.strip())
                if not key.strip() or not dm:
                    raise ValueError(f"bad result entry {part!r} in {text!r}")
                named.append((key.strip(), _parse_dims(dm.group(1))))
            result = tuple(named)
            result_named = True
        else:
            dm = _DIMS_RE.fullmatch(res_text)
            if not dm:
                raise ValueError(f"bad result {res_text!r} in {text!r}")
            result = _parse_dims(dm.group(1))
    return ShapeSignature(name=name, params=tuple(params), result=result, result_named=result_named)


def _split_top(text: str) -> list[str]:
    """Split on commas not nested inside brackets."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


@dataclass
class UnifyMismatch:
    """First position where two signatures cannot be made equal."""

    position: str
    left: object
    right: object

    def __str__(self) -> str:
        return f"{self.position}: {self.left} vs {self.right}"


def unify_shapes(declared: ShapeSignature, found: ShapeSignature):
    """Bind symbolic dims so the two signatures agree.

    Symbols form one namespace shared by both signatures (the same letter
    names the same dimension). Returns a dict binding on success or a
    UnifyMismatch naming the first conflicting position; success is
    symmetric in the argument order.
    """
    parent: dict[str, str] = {}
    literal: dict[str, int] = {}

    def find(sym: str) -> str:
        parent.setdefault(sym, sym)
        while parent[sym] != sym:
            parent[sym] = parent[parent[sym]]
            sym = parent[sym]
        return sym

    def unify_dim(a: object, b: object, pos: str) -> UnifyMismatch | None:
        if isinstance(a, str) and isinstance(b, str):
            ra, rb = find(a), find(b)
            if ra == rb:
                return None
            la, lb = literal.get(ra), literal.get(rb)
            if la is not None and lb is not None and la != lb:
                return UnifyMismatch(pos, la, lb)
            parent[ra] = rb
            if la is not None:
                literal[rb] = la
            return None
        if isinstance(b, str):
            a, b = b, a
        if isinstance(a, str):
            root = find(a)
            bound = literal.get(root)
            if bound is not None and bound != b:
                return UnifyMismatch(pos, bound, b)
            literal[root] = int(b)  # type: ignore[arg-type]
            return None
        if a != b:
            return UnifyMismatch(pos, a, b)
        return None

    def unify_vec(va: Sequence[object], vb: Sequence[object], where: str) -> UnifyMismatch | None:
        if len(va) != len(vb):
            return UnifyMismatch(where + " rank", len(va), len(vb))
        for i, (a, b) in enumerate(zip(va, vb)):
            mismatch = unify_dim(a, b, f"{where} dim {i + 1}")
            if mismatch:
                return mismatch
        return None

    if len(declared.params) != len(found.params):
        return UnifyMismatch("param count", len(declared.params), len(found.params))
    for (name_a, dims_a), (_, dims_b) in zip(declared.params, found.params):
        mismatch = unify_vec(dims_a, dims_b, f"param {name_a}")
        if mismatch:
            return mismatch
    if declared.result_named != found.result_named or (declared.result is None) != (found.result is None):
        return UnifyMismatch("result form", declared.result_named, found.result_named)
    if declared.result is not None:
        if declared.result_named:
            left = dict(declared.result)  # type: ignore[arg-type]
            right = dict(found.result)  # type: ignore[arg-type]
            if set(left) != set(right):
                return UnifyMismatch("result keys", sorted(left), sorted(right))
            for key in sorted(left):
                mismatch = unify_vec(left[key], right[key], f"result {key}")
                if mismatch:
                    return mismatch
        else:
            mismatch = unify_vec(declared.result, found.result, "result")  # type: ignore[arg-type]
            if mismatch:
                return mismatch
    return {sym: literal.get(find(sym), find(sym)) for sym in parent}


@dataclass
class InterfaceContract:
    """Per-role surface: required exports and which roles it may import."""

    role: str
    required_exports: list[tuple[str, ShapeSignature | None]] = field(default_factory=list)
    allowed_import_roles: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class RhsItem:
    symbol: str
    marker: str = ""  # "", "?" (optional) or "*" (zero or more)


@dataclass
class Production:
    lhs: str
    rhs: list[RhsItem]


@dataclass
class PluginGrammar:
    """Role nonterminals, productions from the start symbol, role contracts."""

    nonterminals: set[str]
    start: str
    productions: list[Production]
    contracts: dict[str, InterfaceContract]

    def production_for(self, symbol: str) -> Production | None:
        for prod in self.productions:
            if prod.lhs == symbol:
                return prod
        return None

    def roles(self) -> set[str]:
        return self.nonterminals - {self.start}

    def derivable(self, roles: Iterable[str]) -> bool:
        """True iff the role multiset expands from the start symbol."""
        target: dict[str, int] = {}
        for role in roles:
            target[role] = target.get(role, 0) + 1
        if any(role not in self.nonterminals or role == self.start for role in target):
            return False
        total = sum(target.values())

        def expand(symbol: str, counts: dict[str, int]) -> list[dict[str, int]]:
            """All count-vectors emittable by one occurrence of `symbol`."""
            emitted = dict(counts)
            if symbol != self.start:
                emitted[symbol] = emitted.get(symbol, 0) + 1
                if emitted[symbol] > target.get(symbol, 0):
                    return []
            prod = self.production_for(symbol)
            if prod is None:
                return [emitted]
            options = [emitted]
            for item in prod.rhs:
                cap = 1 if item.marker in ("", "?") else target.get(item.symbol, 0)
                low = 1 if item.marker == "" else 0
                next_options: list[dict[str, int]] = []
                for state in options:
                    for repeat in range(low, cap + 1):
                        branches = [state]
                        ok = True
                        for _ in range(repeat):
                            grown: list[dict[str, int]] = []
                            for b in branches:
                                grown.extend(expand(item.symbol, b))
                            branches = grown
                            if not branches:
                                ok = False
                                break
                        if ok:
                            next_options.extend(branches)
                options = _dedupe_counts(next_options)
                if not options:
                    return []
            return options

        for counts in expand(self.start, {}):
            if counts == target and sum(counts.values()) == total:
                return True
        return False


def _dedupe_counts(states: list[dict[str, int]]) -> list[dict[str, int]]:
    seen = set()
    out = []
    for st in states:
        key = tuple(sorted(st.items()))
        if key not in seen:
            seen.add(key)
            out.append(st)
    return out


_PRODUCTION_RE = re.compile(r"^([A-Za-z_]\w*)\s*:=\s*(.*)$")
_RHS_ITEM_RE = re.compile(r"\(\s*([A-Za-z_]\w*)\s*\)\s*([?*])|([A-Za-z_]\w*)")


def load_grammar(text: str | None = None) -> PluginGrammar:
    """Parse the line-oriented grammar format.

    Lines: `LHS := SYM (SYM)? (SYM)*` productions, `contract ROLE export
    NAME SIG`, `contract ROLE imports ROLE...`, `#` comments. Loads the
    packaged default grammar when no text is given.
    """
    if text is None:
        text = DEFAULT_GRAMMAR_PATH.read_text()
    productions: list[Production] = []
    contracts: dict[str, InterfaceContract] = {}
    declared: set[str] = set()
    mentioned: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("contract "):
            parts = line.split(None, 3)
            if len(parts) < 3:
                raise GrammarError(lineno, f"bad contract line: {raw.strip()!r}")
            role = parts[1]
            declared.add(role)
            contract = contracts.setdefault(role, InterfaceContract(role=role))
            verb = parts[2]
            rest = parts[3] if len(parts) > 3 else ""
            if verb == "export":
                try:
                    sig = parse_signature(rest)
                except ValueError as exc:
                    raise GrammarError(lineno, str(exc)) from exc
                if any(name == sig.name for name, _ in contract.required_exports):
                    raise GrammarError(lineno, f"duplicate export contract {role}.{sig.name}")
                bare = sig.params == () and sig.result is None
                contract.required_exports.append((sig.name, None if bare else sig))
            elif verb == "imports":
                for sym in rest.split():
                    contract.allowed_import_roles.add(sym)
                    mentioned.setdefault(sym, lineno)
            else:
                raise GrammarError(lineno, f"unknown contract verb {verb!r}")
            continue
        match = _PRODUCTION_RE.match(line)
        if not match:
            raise GrammarError(lineno, f"unparseable line: {raw.strip()!r}")
        lhs = match.group(1)
        declared.add(lhs)
        rhs: list[RhsItem] = []
        consumed = 0
        for item in _RHS_ITEM_RE.finditer(match.group(2)):
            consumed += len(item.group(0))
            if item.group(1):
                rhs.append(RhsItem(item.group(1), item.group(2)))
            else:
                rhs.append(RhsItem(item.group(3), ""))
            mentioned.setdefault(rhs[-1].symbol, lineno)
        if re.sub(r"\s", "", match.group(2)) != "".join(
            (f"({i.symbol}){i.marker}" if i.marker else i.symbol) for i in rhs
        ):
            raise GrammarError(lineno, f"unparseable production RHS: {match.group(2)!r}")
        productions.append(Production(lhs=lhs, rhs=rhs))

    for sym, lineno in mentioned.items():
        if sym not in declared:
            raise GrammarError(lineno, f"undeclared symbol {sym!r}")
    lhs_set = {p.lhs for p in productions}
    if START_SYMBOL not in lhs_set:
        raise GrammarError(0, f"missing start production {START_SYMBOL!r}")
    seen_twice = {p.lhs for i, p in enumerate(productions) if p.lhs in {q.lhs for q in productions[:i]}}
    if seen_twice:
        raise GrammarError(0, f"duplicate production for {sorted(seen_twice)}")

    nonterminals = declared | set(mentioned)
    grammar = PluginGrammar(
        nonterminals=nonterminals,
        start=START_SYMBOL,
        productions=productions,
        contracts=contracts,
    )

    # Reachability from the start symbol over productions.
    reachable = {START_SYMBOL}
    frontier = [START_SYMBOL]
    while frontier:
        sym = frontier.pop()
        prod = grammar.production_for(sym)
        if prod:
            for item in prod.rhs:
                if item.symbol not in reachable:
                    reachable.add(item.symbol)
                    frontier.append(item.symbol)
    unreachable = nonterminals - reachable
    if unreachable:
        raise GrammarError(0, f"unreachable nonterminals: {sorted(unreachable)}")
    in_some_production = lhs_set | {i.symbol for p in productions for i in p.rhs}
    orphan_contracts = [r for r in contracts if r not in in_some_production]
    if orphan_contracts:
        raise GrammarError(0, f"contract for symbol outside productions: {sorted(orphan_contracts)}")
    return grammar


# ---------------------------------------------------------------------------
# Derivation plans


@dataclass
class DerivationPlan:
    """Planned node set (role, path) with role-level dataflow edges."""

    nodes: list[tuple[str, str]]  # (role, file path)
    edges: list[tuple[str, str]]  # (provider path, consumer path)
    production_trace: list[str] = field(default_factory=list)

    def roles(self) -> list[str]:
        return [role for role, _ in self.nodes]

    def path_of_role(self, role: str) -> str | None:
        for r, path in self.nodes:
            if r == role:
                return path
        return None

    def to_dict(self) -> dict:
        return {
            "nodes": [{"role": r, "path": p} for r, p in self.nodes],
            "edges": [list(e) for e in self.edges],
            "production_trace": self.production_trace,
        }


MINIMAL_ROLES = ["Config", "DataManager", "Model", "Pipeline"]

_ROLE_KEYWORDS = [
    ("Encoder", ("encoder", "encoding", "hash grid", "hash-grid")),
    ("Sampler", ("sampler", "sampling", "proposal")),
    ("Field", ("field", "plane", "triplane", "factorization", "decomposition", "representation", "grid", "octree")),
]


def _role_for_component(kind: str, name: str, has_equations: bool) -> str:
    lowered = name.lower()
    if kind == "loss-function":
        return "Loss" if has_equations else "Model"
    for role, keywords in _ROLE_KEYWORDS:
        if any(k in lowered for k in keywords):
            return role
    if kind == "training-protocol":
        return "Pipeline"
    return "Model"


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def derive_plan(grammar: PluginGrammar, components: Sequence, outline: str = "") -> DerivationPlan:
    """Realize a component mix as a derivable plan over grammar roles.

    Repeatable roles get one node per component; singleton roles absorb all
    their components. Loss components carrying equations earn a dedicated
    Loss node, otherwise they fold into the Model. Any architectural
    component implies a Field node for it to plug into.
    """
    taxonomy = {"architectural-module", "loss-function", "training-protocol"}
    assignments: dict[str, list] = {}
    for comp in components:
        kind = getattr(comp, "kind", None)
        if kind not in taxonomy:
            raise NoDerivation(f"component kind outside taxonomy: {kind!r}")
        role = _role_for_component(kind, getattr(comp, "name"), bool(getattr(comp, "equations", ())))
        assignments.setdefault(role, []).append(comp)

    roles = list(MINIMAL_ROLES)
    if any(r in assignments for r in ("Encoder", "Sampler", "Field")) and "Field" not in roles:
        roles.append("Field")
    nodes: list[tuple[str, str]] = []
    for role in MINIMAL_ROLES:
        nodes.append((role, f"{role.lower()}.py"))
    if "Field" in roles[len(MINIMAL_ROLES):]:
        nodes.append(("Field", "field.py"))
    for role in ("Encoder", "Sampler", "Loss"):
        for comp in assignments.get(role, []):
            nodes.append((role, f"{role.lower()}_{_slug(getattr(comp, 'name'))}.py"))

    trace = [f"{grammar.start} -> " + " ".join(sorted(r for r, _ in nodes))]
    if not grammar.derivable([r for r, _ in nodes]):
        raise NoDerivation(f"role multiset not derivable: {sorted(r for r, _ in nodes)}")
    plan = DerivationPlan(nodes=nodes, edges=_plan_edges(nodes), production_trace=trace)
    return plan


_ROLE_FLOW = {
    "Config": [],
    "DataParser": ["Config"],
    "DataManager": ["Config", "DataParser"],
    "Encoder": ["Config"],
    "Sampler": ["Config"],
    "Field": ["Config", "Encoder"],
    "Loss": ["Config"],
    "Model": ["Config", "Field", "Encoder", "Sampler", "Loss"],
    "Pipeline": ["Config", "DataManager", "Model"],
}


def _plan_edges(nodes: Sequence[tuple[str, str]]) -> list[tuple[str, str]]:
    """Role-level dataflow edges instantiated over the planned files."""
    by_role: dict[str, list[str]] = {}
    for role, path in nodes:
        by_role.setdefault(role, []).append(path)
    edges: list[tuple[str, str]] = []
    for role, paths in by_role.items():
        for provider_role in _ROLE_FLOW.get(role, []):
            for provider in by_role.get(provider_role, []):
                for consumer in paths:
                    if provider != consumer:
                        edges.append((provider, consumer))
    return sorted(set(edges))


# ---------------------------------------------------------------------------
# Repository validation


@dataclass
class Violation:
    file: str
    rule: str
    detail: str

    def to_dict(self) -> dict:
        return {"file": self.file, "rule": self.rule, "detail": self.detail}


@dataclass
class ValidationReport:
    passed: bool
    violations: list[Violation]

    def to_dict(self) -> dict:
        return {"pass": self.passed, "violations": [v.to_dict() for v in self.violations]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def validate_repository(
    grammar: PluginGrammar,
    repo: RepositoryGraph | Sequence[FileRecord],
    interfaces: Mapping[str, FileInterface],
) -> ValidationReport:
    """Check a repository against the grammar.

    Passes iff the role multiset is derivable, every file satisfies its
    role's contract under shape unification, every import edge is allowed,
    and the dependency graph is acyclic. A cycle short-circuits the other
    checks (topological reasoning is meaningless on a cyclic graph) and is
    reported against its lexicographically greatest member.
    """
    if isinstance(repo, RepositoryGraph):
        files = list(repo.files.values())
        edges = set(repo.edges)
    else:
        files = list(repo)
        edges = scan_imports(files)
    by_id = {rec.file_id: rec for rec in files}
    violations: list[Violation] = []

    known: dict[str, FileRecord] = {}
    for rec in sorted(files, key=lambda r: r.file_id):
        if rec.role == grammar.start or rec.role not in grammar.nonterminals:
            violations.append(Violation(rec.file_id, "unknown-role", f"role {rec.role!r} not in grammar"))
        else:
            known[rec.file_id] = rec

    checkable_edges = set()
    for u, v in sorted(edges):
        if u not in known or v not in known:
            continue
        consumer_contract = grammar.contracts.get(known[v].role)
        allowed = consumer_contract.allowed_import_roles if consumer_contract else set()
        if known[u].role not in allowed:
            violations.append(
                Violation(v, "illegal-import", f"{known[v].role} may not import {known[u].role} ({u})")
            )
        else:
            checkable_edges.add((u, v))

    cycle = _find_cycle(known, _adjacency(checkable_edges))
    if cycle:
        ordered = cycle[cycle.index(min(cycle)):] + cycle[: cycle.index(min(cycle))]
        violations.append(
            Violation(max(cycle), "cycle", " -> ".join(ordered + ordered[:1]))
        )
        return ValidationReport(passed=False, violations=violations)

    if known and not grammar.derivable([rec.role for rec in known.values()]):
        roles = sorted(rec.role for rec in known.values())
        culprit = _derivability_culprit(grammar, known)
        violations.append(Violation(culprit, "underivable-roles", f"role multiset {roles} not derivable"))

    for file_id in sorted(known):
        rec = known[file_id]
        contract = grammar.contracts.get(rec.role)
        iface = interfaces.get(file_id)
        exported = {name: sig for name, sig in (iface.exports if iface else [])}
        for name, sig in (contract.required_exports if contract else []):
            if name not in exported:
                violations.append(Violation(file_id, "missing-export", f"{rec.role} requires export {name!r}"))
                continue
            if sig is not None:
                found = exported[name]
                if found is None:
                    violations.append(
                        Violation(file_id, "shape-mismatch", f"{name}: contract declares {sig.to_text()!r}, none found")
                    )
                else:
                    outcome = unify_shapes(sig, found)
                    if isinstance(outcome, UnifyMismatch):
                        violations.append(Violation(file_id, "shape-mismatch", f"{name}: {outcome}"))

    graph = RepositoryGraph(files={f: known[f] for f in known}, edges=checkable_edges)
    for file_id in sorted(known):
        iface = interfaces.get(file_id)
        if not iface:
            continue
        ancestor_set = ancestors(graph, file_id)
        for name, provider in iface.imports:
            if provider not in by_id:
                violations.append(Violation(file_id, "unknown-import-provider", f"{name} from missing {provider}"))
                continue
            if provider not in ancestor_set:
                violations.append(
                    Violation(file_id, "non-ancestor-import", f"{name} from {provider} which is not an ancestor")
                )
                continue
            provider_iface = interfaces.get(provider)
            provider_exports = provider_iface.export_names() if provider_iface else []
            if name not in provider_exports:
                violations.append(
                    Violation(file_id, "unknown-import-name", f"{provider} does not export {name!r}")
                )

    return ValidationReport(passed=not violations, violations=violations)


def _derivability_culprit(grammar: PluginGrammar, known: Mapping[str, FileRecord]) -> str:
    """Best-effort attribution: a file whose removal restores derivability."""
    for file_id in sorted(known, reverse=True):
        rest = [rec.role for fid, rec in known.items() if fid != file_id]
        if grammar.derivable(rest):
            return file_id
    return min(known)
