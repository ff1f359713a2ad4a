"""Paper fetchers: the interface plus a deterministic fixture implementation."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Protocol

from .ingest import BibEntry, PaperDocument, parse_markdown


class NotFound(Exception):
    """The fetcher has no document for the requested key."""


class WebFetcher(Protocol):
    """Retrieval of cited papers by bibliography entry."""

    def fetch(self, entry: BibEntry) -> PaperDocument: ...


class FixtureFetcher:
    """Fetcher over a `graph.json` fixture: `{papers:{key:path}, cites:{key:[keys]}}`.

    Keys with a markdown path are parsed from disk. Keys present only in the
    `cites` adjacency get a synthesized stub document whose text borrows one
    component from each cited key, so discovery works without bespoke prose.
    Deterministic by construction; safe for concurrent calls.
    """

    def __init__(self, graph_path: str | Path, min_interval_s: float = 0.0):
        data = json.loads(Path(graph_path).read_text())
        base = Path(graph_path).parent
        self.papers = {k: base / v for k, v in data.get("papers", {}).items()}
        self.cites = {k: list(v) for k, v in data.get("cites", {}).items()}
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._last_fetch = 0.0
        self.fetch_count = 0

    def _throttle(self) -> None:
        if self.min_interval_s <= 0:
            return
        with self._lock:
            wait = self._last_fetch + self.min_interval_s - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_fetch = time.monotonic()

    def fetch_key(self, key: str) -> PaperDocument:
        self._throttle()
        with self._lock:
            self.fetch_count += 1
        if key in self.papers:
            path = self.papers[key]
            if not path.exists():
                raise NotFound(f"fixture file missing for {key}: {path}")
            return parse_markdown(path.read_text(), doc_id=key)
        if key in self.cites:
            return self._synthesize(key)
        raise NotFound(key)

    def fetch(self, entry: BibEntry) -> PaperDocument:
        return self.fetch_key(entry.cite_key)

    def _synthesize(self, key: str) -> PaperDocument:
        cited = self.cites.get(key, [])
        lines = [
            f"# Stub paper {key}",
            "",
            "## Method",
            "",
            f"The module {key} combines features along each ray.",
            "",
        ]
        for other in cited:
            lines.append(f"We adopt the module {other} from [{other}].")
            lines.append("")
        lines += ["## References", ""]
        for other in cited:
            lines.append(f"[{other}] Stub reference {other}. 2020.")
        if not cited:
            lines.append(f"[self-{key}] Placeholder entry. 2020.")
        return parse_markdown("\n".join(lines) + "\n", doc_id=key)


class NullFetcher:
    """Fetcher that finds nothing; resolution marks targets unresolvable."""

    def fetch(self, entry: BibEntry) -> PaperDocument:
        raise NotFound(entry.cite_key)
