"""HTTP service wrapping the synthesis, evaluation and inspection pipelines."""

from .app import build_app

__all__ = ["build_app"]
