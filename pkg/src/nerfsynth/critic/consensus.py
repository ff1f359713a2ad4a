"""Cross-view artifact consensus via depth reprojection.

A flagged pixel is view-inconsistent (floater-like) when its unprojected 3-D
point lands, in at least `min_confirmations` other views, on pixels that are
themselves unflagged and whose rendered depth disagrees with the point's
expected depth by more than the tolerance. Real geometry reprojects onto
agreeing depths; a floater hangs in space and disagrees everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cameras import ViewSample


class InsufficientViews(Exception):
    pass


@dataclass(frozen=True)
class ConsensusConfig:
    min_confirmations: int = 2
    depth_tol_frac: float = 0.05
    error_threshold: float = 0.10


@dataclass
class FloaterCluster:
    view: str
    centroid: tuple[float, float, float]
    pixels: int


@dataclass
class ConsensusResult:
    masks: list[np.ndarray]
    clusters: list[FloaterCluster]
    depth_tolerance: float

    def total_flagged(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    def to_dict(self) -> dict:
        return {
            "depth_tolerance": round(self.depth_tolerance, 6),
            "flagged_per_view": [int(m.sum()) for m in self.masks],
            "clusters": [
                {"view": c.view, "centroid": [round(x, 4) for x in c.centroid], "pixels": c.pixels}
                for c in self.clusters
            ],
        }


def error_masks(views: list[ViewSample], threshold: float) -> list[np.ndarray]:
    masks = []
    for view in views:
        if view.gt is None:
            raise ValueError(f"view {view.name} has no ground truth; pass masks explicitly")
        masks.append(np.abs(view.render - view.gt).max(axis=-1) > threshold)
    return masks


def cross_view_consensus(
    views: list[ViewSample],
    cfg: ConsensusConfig = ConsensusConfig(),
    masks: list[np.ndarray] | None = None,
) -> ConsensusResult:
    if len(views) < 2:
        raise InsufficientViews(f"need >= 2 views, got {len(views)}")
    if masks is None:
        masks = error_masks(views, cfg.error_threshold)

    depths = np.concatenate([v.depth.reshape(-1) for v in views])
    positive = depths[depths > 0]
    extent = float(positive.max() - positive.min()) if positive.size else 1.0
    tol = cfg.depth_tol_frac * max(extent, 1e-9)

    out_masks = []
    clusters: list[FloaterCluster] = []
    for vi, view in enumerate(views):
        flagged = masks[vi]
        inconsistent = np.zeros_like(flagged)
        ys, xs = np.nonzero(flagged)
        if ys.size:
            world = view.camera.unproject(xs.astype(np.float64), ys.astype(np.float64), view.depth[ys, xs])
            confirmations = np.zeros(ys.size, dtype=int)
            for ui, other in enumerate(views):
                if ui == vi:
                    continue
                u, v, z = other.camera.project(world)
                px = np.round(u).astype(int)
                py = np.round(v).astype(int)
                valid = (z > 1e-9) & (px >= 0) & (px < other.width) & (py >= 0) & (py < other.height)
                if not valid.any():
                    continue
                other_mask = masks[ui]
                unflagged = np.zeros(ys.size, dtype=bool)
                disagrees = np.zeros(ys.size, dtype=bool)
                sel = valid.nonzero()[0]
                unflagged[sel] = ~other_mask[py[sel], px[sel]]
                disagrees[sel] = np.abs(other.depth[py[sel], px[sel]] - z[sel]) > tol
                confirmations += (valid & unflagged & disagrees).astype(int)
            hits = confirmations >= cfg.min_confirmations
            inconsistent[ys[hits], xs[hits]] = True

            labels, count = ndimage.label(inconsistent, structure=np.ones((3, 3), dtype=bool))
            for lab in range(1, count + 1):
                lys, lxs = np.nonzero(labels == lab)
                pts = view.camera.unproject(lxs.astype(np.float64), lys.astype(np.float64), view.depth[lys, lxs])
                centroid = pts.mean(axis=0)
                clusters.append(
                    FloaterCluster(
                        view=view.name,
                        centroid=(float(centroid[0]), float(centroid[1]), float(centroid[2])),
                        pixels=int(lys.size),
                    )
                )
        out_masks.append(inconsistent)
    return ConsensusResult(masks=out_masks, clusters=clusters, depth_tolerance=tol)
