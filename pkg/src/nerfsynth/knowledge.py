"""Knowledge base of paper/implementation pairs used as in-context exemplars.

Directory layout: `kb/<id>/paper.md`, `kb/<id>/repo/...`, `kb/index.json`
with entries `{id, title, year, roles, path}`. Every stored repository must
validate under the loaded grammar, at insertion and at load time.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .artifacts import load_interfaces, load_repo_files
from .grammar import PluginGrammar, validate_repository
from .ingest import PaperDocument, parse_markdown
from .repograph import FileRecord

INDEX_FILE = "index.json"


class InvalidExemplar(Exception):
    """Candidate repository fails grammar validation."""


class DuplicateId(Exception):
    pass


@dataclass
class KbEntry:
    id: str
    title: str
    year: int
    roles: list[str]
    path: str

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "year": self.year, "roles": self.roles, "path": self.path}


@dataclass
class KnowledgeBase:
    root: Path
    grammar: PluginGrammar
    entries: dict[str, KbEntry] = field(default_factory=dict)

    @classmethod
    def load(cls, root: str | Path, grammar: PluginGrammar) -> "KnowledgeBase":
        root = Path(root)
        kb = cls(root=root, grammar=grammar)
        index_path = root / INDEX_FILE
        if not index_path.exists():
            return kb
        for item in json.loads(index_path.read_text()):
            entry = KbEntry(**item)
            repo_dir = root / entry.path / "repo"
            files = load_repo_files(repo_dir)
            report = validate_repository(grammar, files, load_interfaces(repo_dir))
            if not report.passed:
                raise InvalidExemplar(f"entry {entry.id} no longer validates: {report.to_json()}")
            kb.entries[entry.id] = entry
        return kb

    def __len__(self) -> int:
        return len(self.entries)

    def document(self, entry_id: str) -> PaperDocument:
        path = self.root / self.entries[entry_id].path / "paper.md"
        return parse_markdown(path.read_text(), doc_id=entry_id)

    def repo_dir(self, entry_id: str) -> Path:
        return self.root / self.entries[entry_id].path / "repo"

    def repo_files(self, entry_id: str) -> list[FileRecord]:
        return load_repo_files(self.repo_dir(entry_id))

    def top_by_role_overlap(self, roles: list[str], k: int = 2) -> list[KbEntry]:
        """Exemplars ranked by how many plan roles they also exercise."""
        wanted = set(roles)
        scored = sorted(
            self.entries.values(),
            key=lambda e: (-len(wanted & set(e.roles)), e.id),
        )
        return scored[:k]

    def _write_index(self) -> None:
        payload = [self.entries[k].to_dict() for k in sorted(self.entries)]
        (self.root / INDEX_FILE).write_text(json.dumps(payload, indent=2) + "\n")


def store_pair(kb: KnowledgeBase, doc: PaperDocument, repo_dir: str | Path) -> KnowledgeBase:
    """Persist a (paper, repository) exemplar after grammar validation."""
    if doc.id in kb.entries:
        raise DuplicateId(doc.id)
    repo_dir = Path(repo_dir)
    files = load_repo_files(repo_dir)
    report = validate_repository(kb.grammar, files, load_interfaces(repo_dir))
    if not report.passed:
        raise InvalidExemplar(report.to_json())

    kb.root.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(kb.root / (INDEX_FILE + ".lock")))
    with lock:
        entry_dir = kb.root / doc.id
        if entry_dir.exists():
            raise DuplicateId(doc.id)
        (entry_dir / "repo").parent.mkdir(parents=True, exist_ok=True)
        (entry_dir / "paper.md").write_text(doc.to_markdown())
        shutil.copytree(repo_dir, entry_dir / "repo")
        kb.entries[doc.id] = KbEntry(
            id=doc.id,
            title=doc.title(),
            year=doc.year(),
            roles=sorted({f.role for f in files}),
            path=doc.id,
        )
        kb._write_index()
    return kb
