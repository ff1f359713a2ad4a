"""Smoke-training sandboxes and the report schema they emit.

The stub sandbox is a hermetic, fully deterministic stand-in for host-side
training: it checks imports and registration honestly (source compilation,
relative import resolution) and simulates a smooth training curve. The shim
sandbox shells out to an external runner speaking the same report schema.
"""

from __future__ import annotations

import json
import math
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import jsonschema

from .repograph import scan_imports


class SandboxCrash(Exception):
    """Sandbox infrastructure failed; distinct from failures of the code under test."""


class InvalidReport(Exception):
    pass


SMOKE_REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "imports_resolve": {"type": "boolean"},
        "registered": {"type": "boolean"},
        "train_started": {"type": "boolean"},
        "steps_completed": {"type": "integer", "minimum": 0},
        "nan_detected": {"type": "boolean"},
        "loss_first": {"type": ["number", "null"]},
        "loss_last": {"type": ["number", "null"]},
        "psnr_eval": {"type": ["number", "null"]},
        "wall_time_s": {"type": "number"},
        "error": {
            "type": ["object", "null"],
            "properties": {
                "stage": {"type": "string"},
                "file": {"type": "string"},
                "traceback": {"type": "string"},
            },
            "required": ["stage"],
        },
    },
    "required": [
        "imports_resolve", "registered", "train_started", "steps_completed",
        "nan_detected", "loss_first", "loss_last", "psnr_eval", "wall_time_s", "error",
    ],
    "additionalProperties": True,
}


@dataclass
class SmokeReport:
    imports_resolve: bool = False
    registered: bool = False
    train_started: bool = False
    steps_completed: int = 0
    nan_detected: bool = False
    loss_first: float | None = None
    loss_last: float | None = None
    psnr_eval: float | None = None
    wall_time_s: float = 0.0
    error: dict | None = None

    def __post_init__(self):
        if self.steps_completed > 0 and not self.train_started:
            raise InvalidReport("steps_completed > 0 requires train_started")
        if self.registered and not self.imports_resolve:
            raise InvalidReport("registered requires imports_resolve")

    def to_dict(self) -> dict:
        return {
            "imports_resolve": self.imports_resolve,
            "registered": self.registered,
            "train_started": self.train_started,
            "steps_completed": self.steps_completed,
            "nan_detected": self.nan_detected,
            "loss_first": self.loss_first,
            "loss_last": self.loss_last,
            "psnr_eval": self.psnr_eval,
            "wall_time_s": self.wall_time_s,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "SmokeReport":
        try:
            jsonschema.validate(data, SMOKE_REPORT_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise InvalidReport(str(exc)) from exc
        return cls(**{k: data[k] for k in SMOKE_REPORT_SCHEMA["required"]})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


class SandboxRunner(Protocol):
    def run_smoke(self, repo_dir: str | Path, iters: int, evaluate: bool = True) -> SmokeReport: ...

    def render_views(self, repo_dir: str | Path, out_dir: str | Path): ...


def _relative_imports_resolve(repo_dir: Path) -> tuple[bool, dict | None]:
    """Compile every source file and resolve repo-internal imports textually."""
    from .artifacts import GRAPH_FILE, load_repo_files

    if (repo_dir / GRAPH_FILE).exists():
        records = load_repo_files(repo_dir)
    else:
        records = []
        for path in sorted(repo_dir.rglob("*.py")):
            rel = str(path.relative_to(repo_dir))
            from .repograph import FileRecord

            records.append(FileRecord(rel, rel, "Model", path.read_text()))
    for rec in records:
        try:
            compile(rec.source, rec.path, "exec")
        except SyntaxError as exc:
            return False, {"stage": "import", "file": rec.path, "traceback": f"SyntaxError: {exc.msg}"}
    # Unresolvable relative imports are import failures; externals are fine.
    modules = {rec.path[:-3].replace("/", ".") for rec in records if rec.path.endswith(".py")}
    for rec in records:
        for line in rec.source.splitlines():
            stripped = line.strip()
            if stripped.startswith("from .") :
                module = stripped.split()[1]
                rest = module.lstrip(".")
                dots = len(module) - len(rest)
                parts = rec.path.split("/")[:-1]
                if dots - 1 > len(parts):
                    return False, {"stage": "import", "file": rec.path, "traceback": f"unresolvable import {module}"}
                base = parts[: len(parts) - (dots - 1)] if dots > 1 else parts
                dotted = ".".join(base + rest.split(".")) if rest else ".".join(base)
                if dotted not in modules:
                    return False, {
                        "stage": "import",
                        "file": rec.path,
                        "traceback": f"ModuleNotFoundError: {module}",
                    }
    return True, None


def _is_registered(repo_dir: Path) -> bool:
    for path in sorted(repo_dir.rglob("*.py")):
        if "method_spec" in path.read_text():
            return True
    return False


@dataclass
class StubSandbox:
    """Deterministic desk-scale trainer substitute.

    The loss curve is a fixed exponential decay; evaluation PSNR comes from
    `psnr_schedule` (consumed one value per smoke run, last value repeating)
    so tests can script improvement or regression, and optional floater
    injection makes the rendered views exhibit a known artifact.
    """

    psnr_schedule: list[float] = field(default_factory=lambda: [25.0])
    nan_at_step: int | None = None
    inject_floater: bool = False
    loss_start: float = 1.0
    decay: float = 2e-3
    _run_index: int = 0

    def run_smoke(self, repo_dir: str | Path, iters: int, evaluate: bool = True) -> SmokeReport:
        repo_dir = Path(repo_dir)
        if iters <= 0:
            raise SandboxCrash("iters must be positive")
        ok, error = _relative_imports_resolve(repo_dir)
        if not ok:
            return SmokeReport(
                imports_resolve=False, wall_time_s=0.0, error=error,
            )
        registered = _is_registered(repo_dir)
        if not registered:
            return SmokeReport(
                imports_resolve=True,
                registered=False,
                wall_time_s=0.0,
                error={"stage": "registration", "file": "", "traceback": "method_spec export not found"},
            )
        if self.nan_at_step is not None and self.nan_at_step <= iters:
            steps = self.nan_at_step
            return SmokeReport(
                imports_resolve=True,
                registered=True,
                train_started=True,
                steps_completed=steps,
                nan_detected=True,
                loss_first=self.loss_start * math.exp(-self.decay),
                loss_last=float("nan"),
                psnr_eval=None,
                wall_time_s=round(steps * 1e-5, 6),
                error={"stage": "train", "file": "", "traceback": f"NaN loss at step {steps}"},
            )
        idx = min(self._run_index, len(self.psnr_schedule) - 1)
        psnr = self.psnr_schedule[idx] if self.psnr_schedule else 25.0
        self._run_index += 1
        return SmokeReport(
            imports_resolve=True,
            registered=True,
            train_started=True,
            steps_completed=iters,
            nan_detected=False,
            loss_first=self.loss_start * math.exp(-self.decay),
            loss_last=self.loss_start * math.exp(-self.decay * iters),
            psnr_eval=psnr if evaluate else None,
            wall_time_s=round(iters * 1e-5, 6),
            error=None,
        )

    def render_views(self, repo_dir: str | Path, out_dir: str | Path):
        from .critic.synthetic import make_plane_scene, inject_floater
        from .critic.cameras import save_view_bundle

        views = make_plane_scene(n_views=3, width=64, height=48)
        if self.inject_floater:
            inject_floater(views[1], center=(24, 32), radius=7)
        out_dir = Path(out_dir)
        for i, view in enumerate(views):
            save_view_bundle(out_dir, f"view_{i}", view)
        return views


@dataclass
class ShimSandbox:
    """Runs an external shim process that writes the SmokeReport schema."""

    command: list[str]
    data_dir: str | None = None

    def run_smoke(self, repo_dir: str | Path, iters: int, evaluate: bool = True) -> SmokeReport:
        with tempfile.TemporaryDirectory(prefix="shim-report-") as tmp:
            report_path = Path(tmp) / "report.json"
            argv = list(self.command) + ["--repo", str(repo_dir)]
            argv += ["--data", self.data_dir] if self.data_dir else ["--stub"]
            argv += ["--iters", str(iters), "--report", str(report_path)]
            if evaluate:
                argv.append("--eval")
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise SandboxCrash(f"shim invocation failed: {exc}") from exc
            if proc.returncode != 0:
                raise SandboxCrash(f"shim exited {proc.returncode}: {proc.stderr.strip()}")
            if not report_path.exists():
                raise SandboxCrash("shim exited 0 but wrote no report")
            return SmokeReport.from_dict(json.loads(report_path.read_text()))

    def render_views(self, repo_dir: str | Path, out_dir: str | Path):
        raise SandboxCrash("external shim does not render views; use stub mode for refinement")
