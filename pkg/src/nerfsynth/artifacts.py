"""Reading and writing the on-disk plugin artifact layout.

An artifact directory holds the generated source tree plus `repo_graph.json`
(nodes with roles, edges) and `interfaces.json` (frozen public surfaces).
"""

from __future__ import annotations

import json
from pathlib import Path

from .repograph import FileInterface, FileRecord, RepositoryGraph, build_repo_dag

GRAPH_FILE = "repo_graph.json"
INTERFACES_FILE = "interfaces.json"
_METADATA = {GRAPH_FILE, INTERFACES_FILE}


class ArtifactError(Exception):
    """Artifact directory is missing files or metadata it must contain."""


def load_repo_files(repo_dir: str | Path) -> list[FileRecord]:
    """Load source files with roles taken from repo_graph.json."""
    root = Path(repo_dir)
    graph_path = root / GRAPH_FILE
    if not graph_path.exists():
        raise ArtifactError(f"missing {GRAPH_FILE} in {root}")
    meta = json.loads(graph_path.read_text())
    records = []
    for node in meta["nodes"]:
        src_path = root / node["path"]
        if not src_path.exists():
            raise ArtifactError(f"file listed in {GRAPH_FILE} is missing: {node['path']}")
        records.append(
            FileRecord(
                file_id=node["id"],
                path=node["path"],
                role=node["role"],
                source=src_path.read_text(),
            )
        )
    return records


def load_interfaces(repo_dir: str | Path) -> dict[str, FileInterface]:
    root = Path(repo_dir)
    path = root / INTERFACES_FILE
    if not path.exists():
        raise ArtifactError(f"missing {INTERFACES_FILE} in {root}")
    data = json.loads(path.read_text())
    interfaces = [FileInterface.from_dict(item) for item in data]
    return {iface.file_id: iface for iface in interfaces}


def load_repo(repo_dir: str | Path) -> tuple[RepositoryGraph, dict[str, FileInterface]]:
    files = load_repo_files(repo_dir)
    return build_repo_dag(files), load_interfaces(repo_dir)


def write_repo(
    repo_dir: str | Path,
    graph: RepositoryGraph,
    interfaces: dict[str, FileInterface],
) -> None:
    """Write the source tree and metadata; deterministic byte layout."""
    root = Path(repo_dir)
    root.mkdir(parents=True, exist_ok=True)
    for rec in sorted(graph.files.values(), key=lambda r: r.file_id):
        out = root / rec.path
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rec.source)
    graph.save(root / GRAPH_FILE)
    payload = [interfaces[k].to_dict() for k in sorted(interfaces)]
    (root / INTERFACES_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def tree_bytes(repo_dir: str | Path) -> dict[str, bytes]:
    """Map of repo-relative path to content, for byte-identity comparisons."""
    root = Path(repo_dir)
    out: dict[str, bytes] = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out
