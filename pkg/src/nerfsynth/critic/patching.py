"""Revertible repository patches: hyperparameter changes and code edits.

Every apply snapshots the target file, so apply followed by revert is a
byte-level identity, and a LIFO stack of patches unwinds to the original
tree exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path


class SpanMismatch(Exception):
    """The old span (or hyperparameter key) is absent from the target file."""


class UnknownRevertToken(KeyError):
    pass


PATCH_KINDS = ("hyperparameter-change", "code-edit")


@dataclass
class Patch:
    target_file: str
    kind: str
    payload: dict  # hyperparameter-change: {key, new_value}; code-edit: {old, new}
    revert_token: str | None = None

    def __post_init__(self):
        if self.kind not in PATCH_KINDS:
            raise ValueError(f"unknown patch kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "target_file": self.target_file,
            "kind": self.kind,
            "payload": self.payload,
            "revert_token": self.revert_token,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Patch":
        return cls(
            target_file=data["target_file"],
            kind=data["kind"],
            payload=dict(data["payload"]),
            revert_token=data.get("revert_token"),
        )


@dataclass
class Patcher:
    repo_dir: Path
    _snapshots: dict[str, tuple[str, bytes]] = field(default_factory=dict)
    _counter: int = 0

    def __init__(self, repo_dir: str | Path):
        self.repo_dir = Path(repo_dir)
        self._snapshots = {}
        self._counter = 0

    def apply(self, patch: Patch) -> str:
        """Apply in place; returns the revert token (also set on the patch)."""
        target = self.repo_dir / patch.target_file
        if not target.is_file():
            raise SpanMismatch(f"target file missing: {patch.target_file}")
        original = target.read_bytes()
        text = original.decode("utf-8")
        if patch.kind == "code-edit":
            old = patch.payload["old"]
            if old not in text:
                raise SpanMismatch(f"old span not found in {patch.target_file}")
            updated = text.replace(old, patch.payload["new"], 1)
        else:
            key = patch.payload["key"]
            # Annotated or plain assignment first, then dict/config "key: value".
            patterns = [
                re.compile(rf"^([ \t]*{re.escape(key)}[ \t]*(?::[^=\n]*?)?=[ \t]*)([^\n]+?)([ \t]*,?)$", re.MULTILINE),
                re.compile(rf"^([ \t]*[\"']?{re.escape(key)}[\"']?[ \t]*:[ \t]*)([^\n]+?)([ \t]*,?)$", re.MULTILINE),
            ]
            pattern = next((p for p in patterns if p.search(text)), None)
            if pattern is None:
                raise SpanMismatch(f"hyperparameter {key!r} not found in {patch.target_file}")
            updated = pattern.sub(lambda m: m.group(1) + str(patch.payload["new_value"]) + m.group(3), text, count=1)
        self._counter += 1
        token = f"patch-{self._counter:04d}"
        self._snapshots[token] = (patch.target_file, original)
        target.write_bytes(updated.encode("utf-8"))
        patch.revert_token = token
        return token

    def revert(self, token: str) -> None:
        if token not in self._snapshots:
            raise UnknownRevertToken(token)
        rel, original = self._snapshots.pop(token)
        (self.repo_dir / rel).write_bytes(original)

    def revert_all(self, tokens: list[str]) -> None:
        """Revert a batch in LIFO order."""
        for token in reversed(tokens):
            self.revert(token)
