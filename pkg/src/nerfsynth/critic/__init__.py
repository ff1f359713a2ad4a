"""Closed-loop visual critique: error fields, ROI extraction, cross-view
consensus, VLM diagnosis, revertible patching and the refinement loop."""

from .cameras import Camera, ViewSample, load_view_bundle, save_view_bundle
from .consensus import ConsensusConfig, InsufficientViews, cross_view_consensus
from .diagnose import Diagnosis, vlm_diagnose
from .fields import DimensionMismatch, ErrorField, WindowConfig, compute_error_fields
from .patching import Patch, Patcher, SpanMismatch, UnknownRevertToken
from .refine import RefineConfig, refine
from .rois import MorphConfig, Roi, extract_rois

__all__ = [
    "Camera", "ViewSample", "load_view_bundle", "save_view_bundle",
    "ConsensusConfig", "InsufficientViews", "cross_view_consensus",
    "Diagnosis", "vlm_diagnose",
    "DimensionMismatch", "ErrorField", "WindowConfig", "compute_error_fields",
    "Patch", "Patcher", "SpanMismatch", "UnknownRevertToken",
    "RefineConfig", "refine",
    "MorphConfig", "Roi", "extract_rois",
]
