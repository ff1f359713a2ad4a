"""Region-of-interest extraction from error fields via morphology.

Anchors whose PSNR falls strictly below the worst-q percentile are opened and
closed with a 3x3 element, labeled into 8-connected components, mapped back
to pixel space as the union of their windows, and returned worst-first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fields import ErrorField


@dataclass(frozen=True)
class MorphConfig:
    percentile: float = 5.0
    min_area_px: int = 16


@dataclass
class Roi:
    bbox: tuple[int, int, int, int]  # (row0, col0, row1, col1), exclusive ends
    mean_psnr: float
    area: int  # pixels
    mask: np.ndarray  # boolean, image shape

    def __post_init__(self):
        assert self.area > 0


_STRUCT = np.ones((3, 3), dtype=bool)


def extract_rois(field: ErrorField, cfg: MorphConfig = MorphConfig()) -> list[Roi]:
    cut = float(np.percentile(field.psnr_map, cfg.percentile))
    low = field.psnr_map < cut  # strict: a uniform field yields nothing
    if not low.any():
        return []
    cleaned = ndimage.binary_opening(low, structure=_STRUCT)
    cleaned = ndimage.binary_closing(cleaned, structure=_STRUCT)
    labels, count = ndimage.label(cleaned, structure=_STRUCT)
    window, stride = field.window
    h, w = field.image_shape
    components = []
    for lab in range(1, count + 1):
        cells = np.argwhere(labels == lab)
        mean_psnr = float(field.psnr_map[labels == lab].mean())
        components.append((mean_psnr, lab, cells))
    components.sort(key=lambda t: (t[0], t[1]))

    rois: list[Roi] = []
    claimed = np.zeros((h, w), dtype=bool)
    for mean_psnr, _, cells in components:
        mask = np.zeros((h, w), dtype=bool)
        for ci, cj in cells:
            r0, c0 = int(ci) * stride, int(cj) * stride
            mask[r0 : min(r0 + window, h), c0 : min(c0 + window, w)] = True
        mask &= ~claimed  # overlapping window unions stay pairwise disjoint
        area = int(mask.sum())
        if area < cfg.min_area_px or area == 0:
            continue
        claimed |= mask
        rows = np.any(mask, axis=1).nonzero()[0]
        cols = np.any(mask, axis=0).nonzero()[0]
        bbox = (int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1)
        rois.append(Roi(bbox=bbox, mean_psnr=mean_psnr, area=area, mask=mask))
    return rois


def roi_summaries(rois: list[Roi]) -> list[dict]:
    return [
        {"bbox": list(r.bbox), "mean_psnr": round(r.mean_psnr, 4), "area": r.area}
        for r in rois
    ]
