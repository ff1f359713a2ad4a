"""The closed refinement loop: smoke-train, render, critique on three
branches, patch, and re-evaluate with revert-on-regression.

Termination: (1) the critique produces no actionable feedback, (2) the
iteration budget is exhausted, or (3) evaluation PSNR reaches the target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..gateway import LlmGateway
from ..sandbox import SandboxRunner, SmokeReport
from .consensus import ConsensusConfig, ConsensusResult, cross_view_consensus
from .diagnose import Diagnosis, vlm_diagnose
from .fields import WindowConfig, compute_error_fields
from .patching import Patch, Patcher, SpanMismatch
from .rois import MorphConfig, extract_rois, roi_summaries


@dataclass(frozen=True)
class RefineConfig:
    max_refine: int = 5
    smoke_iters: int = 3000
    psnr_target: float | None = None
    regression_db: float = 0.1
    window: WindowConfig = WindowConfig()
    morph: MorphConfig = MorphConfig()
    consensus: ConsensusConfig = ConsensusConfig()


@dataclass
class IterationRecord:
    index: int
    rois: dict
    consensus: dict
    diagnoses: list[Diagnosis]
    patches: list[Patch]
    decision: str
    psnr_before: float | None
    psnr_after: float | None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "rois": self.rois,
            "consensus": self.consensus,
            "diagnoses": [d.to_dict() for d in self.diagnoses],
            "patches": [p.to_dict() for p in self.patches],
            "decision": self.decision,
            "psnr_before": self.psnr_before,
            "psnr_after": self.psnr_after,
        }


@dataclass
class RefineResult:
    history: list[IterationRecord] = field(default_factory=list)
    final_report: SmokeReport | None = None
    terminated_by: str = "max-iterations"


def _write_heatmap(psnr_map: np.ndarray, path: Path, ceiling: float) -> None:
    lo, hi = float(psnr_map.min()), float(min(psnr_map.max(), ceiling))
    span = (hi - lo) or 1.0
    norm = 1.0 - np.clip((psnr_map - lo) / span, 0.0, 1.0)  # hot = worse
    Image.fromarray((norm * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)


def refine(
    repo_dir: str | Path,
    sandbox: SandboxRunner,
    gateway: LlmGateway,
    cfg: RefineConfig,
    out_dir: str | Path,
) -> RefineResult:
    """Iteratively patch the repository until one termination criterion fires.

    A patch set whose follow-up evaluation regresses PSNR by more than
    `regression_db` is reverted before the next iteration, so a run with no
    accepted patches leaves the repository byte-identical to its start.
    """
    repo_dir = Path(repo_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    patcher = Patcher(repo_dir)
    result = RefineResult()
    report = sandbox.run_smoke(repo_dir, cfg.smoke_iters, evaluate=True)
    result.final_report = report

    for index in range(1, cfg.max_refine + 1):
        views_dir = out_dir / f"views_{index}"
        views = sandbox.render_views(repo_dir, views_dir)

        # Metric branch: dense error fields and worst regions per view.
        fields = []
        rois_by_view: dict = {}
        for view in views:
            if view.gt is None:
                continue
            fld = compute_error_fields(view.render, view.gt, cfg.window)
            fields.append((view, fld))
            rois_by_view[view.name] = roi_summaries(extract_rois(fld, cfg.morph))

        # Geometry branch: cross-view consensus over the same views.
        consensus_dict: dict = {}
        consensus: ConsensusResult | None = None
        if len([v for v in views if v.gt is not None]) >= 2:
            consensus = cross_view_consensus([v for v in views if v.gt is not None], cfg.consensus)
            consensus_dict = consensus.to_dict()

        any_roi = any(rois_by_view.values())
        any_flag = bool(consensus and consensus.total_flagged())
        diagnoses: list[Diagnosis] = []
        patches: list[Patch] = []
        if any_roi or any_flag:
            # Semantics branch: the worst view goes to the vision model.
            worst_view, worst_field = min(
                fields, key=lambda pair: float(pair[1].psnr_map.min())
            )
            heatmap_path = views_dir / worst_view.name / "heatmap.png"
            _write_heatmap(worst_field.psnr_map, heatmap_path, cfg.window.psnr_ceiling)
            context = (
                f"iteration {index}; eval psnr {report.psnr_eval}; "
                f"flagged pixels {consensus.total_flagged() if consensus else 0}; "
                f"worst window psnr {float(worst_field.psnr_map.min()):.2f} dB"
            )
            diagnosis = vlm_diagnose(
                views_dir / worst_view.name / "gt.png",
                views_dir / worst_view.name / "render.png",
                heatmap_path,
                context,
                gateway,
            )
            diagnoses.append(diagnosis)
            patches = [d.patch for d in diagnoses if d.patch is not None]

        psnr_before = report.psnr_eval
        if not patches:
            record = IterationRecord(
                index=index, rois=rois_by_view, consensus=consensus_dict,
                diagnoses=diagnoses, patches=[], decision="no-feedback",
                psnr_before=psnr_before, psnr_after=psnr_before,
            )
            result.history.append(record)
            _write_critique(out_dir, record)
            result.terminated_by = "no-feedback"
            break

        tokens = []
        decision = "accepted"
        try:
            for patch in patches:
                tokens.append(patcher.apply(patch))
        except SpanMismatch as exc:
            patcher.revert_all(tokens)
            decision = f"patch-failed: {exc}"
            tokens = []

        psnr_after = psnr_before
        if tokens:
            new_report = sandbox.run_smoke(repo_dir, cfg.smoke_iters, evaluate=True)
            psnr_after = new_report.psnr_eval
            worsened = (
                psnr_after is None
                or (psnr_before is not None and psnr_after < psnr_before - cfg.regression_db)
            )
            if worsened:
                patcher.revert_all(tokens)
                decision = "reverted"
                psnr_after = psnr_before
            else:
                report = new_report
                result.final_report = report

        record = IterationRecord(
            index=index, rois=rois_by_view, consensus=consensus_dict,
            diagnoses=diagnoses, patches=patches, decision=decision,
            psnr_before=psnr_before, psnr_after=psnr_after,
        )
        result.history.append(record)
        _write_critique(out_dir, record)

        if (
            cfg.psnr_target is not None
            and report.psnr_eval is not None
            and report.psnr_eval >= cfg.psnr_target
        ):
            result.terminated_by = "psnr-target"
            break

    return result


def _write_critique(out_dir: Path, record: IterationRecord) -> None:
    payload = record.to_dict()
    payload = {
        "rois": payload["rois"],
        "consensus": payload["consensus"],
        "diagnoses": payload["diagnoses"],
        "patches": payload["patches"],
        "decision": payload["decision"],
    }
    (out_dir / f"critique_{record.index}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
