"""FastAPI application wiring the core pipelines behind typed endpoints.

Pipeline failures are reported in the response payload (`exit_code` 1 for
run failures, 2 for unusable inputs) rather than as HTTP errors, so a thin
client can forward them as process exit codes.
"""

from __future__ import annotations

import json
import os
import shlex
from pathlib import Path

from fastapi import FastAPI

from .. import __version__, artifacts
from ..bench import ladder_evaluate, load_judgments, run_bench
from ..citations import DepthExceeded
from ..critic.refine import RefineConfig, refine
from ..fetch import FixtureFetcher, NullFetcher
from ..gateway import GatewayConfig, GatewayErrorBase, LlmGateway
from ..grammar import GrammarError, load_grammar, validate_repository
from ..ingest import MalformedDocument, parse_markdown
from ..knowledge import KnowledgeBase
from ..sandbox import SandboxCrash, ShimSandbox, SmokeReport, StubSandbox
from ..synthesizer import SynthConfig, SynthesisError, synthesize
from .schemas import (
    EvalRequest,
    EvalResponse,
    HealthResponse,
    InspectRequest,
    InspectResponse,
    LadderModel,
    SynthRequest,
    SynthResponse,
)

SHIM_COMMAND_ENV = "NERFSYNTH_SHIM"


def _make_sandbox(mode: str):
    if mode == "stub":
        return StubSandbox()
    command = shlex.split(os.environ.get(SHIM_COMMAND_ENV, "nerf-shim"))
    return ShimSandbox(command=command)


def build_app() -> FastAPI:
    app = FastAPI(title="nerfsynth", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest) -> SynthResponse:
        for label, path in (("paper", req.paper), ("llm", req.llm)):
            if not Path(path).is_file():
                return SynthResponse(exit_code=2, message=f"{label} path not found: {path}")
        if req.kb and not Path(req.kb).is_dir():
            return SynthResponse(exit_code=2, message=f"kb directory not found: {req.kb}")
        if req.grammar and not Path(req.grammar).is_file():
            return SynthResponse(exit_code=2, message=f"grammar file not found: {req.grammar}")
        if req.citations and not Path(req.citations).is_file():
            return SynthResponse(exit_code=2, message=f"citations fixture not found: {req.citations}")

        out_dir = Path(req.out)
        try:
            grammar = load_grammar(Path(req.grammar).read_text() if req.grammar else None)
            doc = parse_markdown(Path(req.paper).read_text(), doc_id=Path(req.paper).stem)
            gateway = LlmGateway(GatewayConfig.from_file(req.llm))
            kb = KnowledgeBase.load(req.kb, grammar) if req.kb else None
            fetcher = FixtureFetcher(req.citations) if req.citations else NullFetcher()
            sandbox = _make_sandbox(req.sandbox)
        except (GrammarError, MalformedDocument, ValueError) as exc:
            return SynthResponse(exit_code=2, message=f"unusable input: {exc}")

        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "run_config.json").write_text(
            json.dumps(req.model_dump(), indent=2, sort_keys=True) + "\n"
        )
        config = SynthConfig(smoke_iters=req.smoke_iters)
        try:
            result = synthesize(doc, kb, grammar, fetcher, gateway, sandbox, out_dir, config=config)
        except (SynthesisError, GatewayErrorBase, DepthExceeded, SandboxCrash) as exc:
            return SynthResponse(
                exit_code=1,
                message=f"synthesis failed: {exc}",
                events_path=str(out_dir / "events.jsonl"),
            )

        report = result.report
        refine_iters = 0
        terminated = None
        if req.max_refine > 0:
            refine_cfg = RefineConfig(
                max_refine=req.max_refine,
                smoke_iters=req.smoke_iters,
                psnr_target=req.psnr_target,
            )
            try:
                refined = refine(result.repo_dir, sandbox, gateway, refine_cfg, out_dir / "refine")
            except (GatewayErrorBase, SandboxCrash) as exc:
                return SynthResponse(
                    exit_code=1,
                    message=f"refinement failed: {exc}",
                    events_path=str(out_dir / "events.jsonl"),
                )
            refine_iters = len(refined.history)
            terminated = refined.terminated_by
            if refined.final_report is not None:
                report = refined.final_report
                report.save(out_dir / "smoke_report.json")

        ladder = ladder_evaluate(report, req.psnr_target)
        return SynthResponse(
            exit_code=0,
            message="synthesis complete",
            repo_dir=str(result.repo_dir),
            events_path=str(out_dir / "events.jsonl"),
            smoke=report.to_dict(),
            ladder=LadderModel(**ladder.__dict__),
            validation=result.validation,
            refine_iterations=refine_iters,
            refine_terminated_by=terminated,
        )

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        from ..bench import ManifestError, NoveltyItem

        out_dir = Path(req.out)

        def judgments_source(entry: dict) -> list[NoveltyItem]:
            if entry.get("judgments"):
                return load_judgments(entry["judgments"])
            if req.judgments:
                root = Path(req.judgments)
                if root.is_dir():
                    return load_judgments(root / f"{entry['id']}.json")
                return load_judgments(root)
            raise ManifestError(f"no judgments available for entry {entry['id']}")

        try:
            report = run_bench(req.bench, judgments_source=judgments_source, tolerance=req.psnr_tolerance)
        except ManifestError as exc:
            return EvalResponse(exit_code=1, message=f"manifest error: {exc}")
        except (OSError, ValueError) as exc:
            return EvalResponse(exit_code=1, message=f"evaluation failed: {exc}")

        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "report.csv"
        json_path = out_dir / "report.json"
        report.write_csv(csv_path)
        report.write_json(json_path)
        return EvalResponse(
            exit_code=0,
            message="evaluation complete",
            rows=[r.to_dict() for r in report.rows],
            aggregate=report.aggregate(),
            csv_path=str(csv_path),
            json_path=str(json_path),
        )

    @app.post("/inspect", response_model=InspectResponse)
    def inspect(req: InspectRequest) -> InspectResponse:
        out_dir = Path(req.out)
        repo_dir = out_dir / "repo" if (out_dir / "repo").is_dir() else out_dir
        try:
            grammar = load_grammar(Path(req.grammar).read_text() if req.grammar else None)
            files = artifacts.load_repo_files(repo_dir)
            interfaces = artifacts.load_interfaces(repo_dir)
        except (artifacts.ArtifactError, GrammarError, OSError, ValueError) as exc:
            return InspectResponse(exit_code=1, message=f"unreadable artifact: {exc}")
        validation = validate_repository(grammar, files, interfaces)

        ladder = None
        report_path = out_dir / "smoke_report.json"
        if report_path.is_file():
            smoke = SmokeReport.from_dict(json.loads(report_path.read_text()))
            ladder = LadderModel(**ladder_evaluate(smoke, None).__dict__)
        events_path = out_dir / "events.jsonl"
        events = len(events_path.read_text().splitlines()) if events_path.is_file() else 0
        return InspectResponse(
            exit_code=0 if validation.passed else 1,
            message="valid plugin repository" if validation.passed else "validation failed",
            valid=validation.passed,
            violations=[v.to_dict() for v in validation.violations],
            files=[{"id": f.file_id, "role": f.role, "path": f.path} for f in files],
            ladder=ladder,
            events=events,
        )

    return app


app = build_app()
