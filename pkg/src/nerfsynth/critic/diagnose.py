"""Vision-model diagnosis of artifact triplets (ground truth, render, heatmap)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..gateway import ContentPart, LlmGateway, LlmRequest, Message
from .patching import Patch

ARTIFACT_CLASSES = ("floater", "ghosting", "blur", "color-shift", "geometry-break", "other")

DIAGNOSIS_SCHEMA = {
    "type": "object",
    "properties": {
        "artifact_class": {"type": "string", "enum": list(ARTIFACT_CLASSES)},
        "suspected_role": {"type": "string"},
        "rationale": {"type": "string"},
        "patch": {
            "type": ["object", "null"],
            "properties": {
                "target_file": {"type": "string"},
                "kind": {"type": "string", "enum": ["hyperparameter-change", "code-edit"]},
                "payload": {"type": "object"},
            },
            "required": ["target_file", "kind", "payload"],
        },
    },
    "required": ["artifact_class", "suspected_role", "rationale"],
}


@dataclass
class Diagnosis:
    artifact_class: str
    suspected_role: str
    rationale: str
    patch: Patch | None = None

    def to_dict(self) -> dict:
        return {
            "artifact_class": self.artifact_class,
            "suspected_role": self.suspected_role,
            "rationale": self.rationale,
            "patch": self.patch.to_dict() if self.patch else None,
        }


def vlm_diagnose(
    gt_path: str | Path,
    render_path: str | Path,
    heatmap_path: str | Path,
    context: str,
    gateway: LlmGateway,
) -> Diagnosis:
    """Structured diagnosis of one triplet; schema-validated with one reprompt."""
    prompt = (
        "Images: ground truth, current render, error heatmap. Diagnose the dominant "
        "artifact and propose one targeted patch. Reply as JSON with artifact_class, "
        "suspected_role, rationale and optional patch {target_file, kind, payload}.\n"
        f"Run context: {context}"
    )
    parts = (
        ContentPart(type="text", text=prompt),
        ContentPart(type="image", path=str(gt_path)),
        ContentPart(type="image", path=str(render_path)),
        ContentPart(type="image", path=str(heatmap_path)),
    )
    req = LlmRequest(
        messages=(Message(role="user", parts=parts),),
        schema=DIAGNOSIS_SCHEMA,
        tag="diagnose",
        model_id=gateway.model_id("vision"),
    )
    response = gateway.complete_vision(req)
    data = response.structured or {}
    patch = Patch.from_dict(data["patch"]) if data.get("patch") else None
    return Diagnosis(
        artifact_class=data["artifact_class"],
        suspected_role=data["suspected_role"],
        rationale=data["rationale"],
        patch=patch,
    )
