"""Deterministic synthetic multi-view scenes with exact depth, for tests and
the stub sandbox: a textured plane observed by slightly rotated cameras, plus
floater injection with a known ground-truth mask."""

from __future__ import annotations

import numpy as np

from .cameras import Camera, ViewSample


def _texture(points: np.ndarray) -> np.ndarray:
    """Smooth closed-form RGB texture over world coordinates."""
    x, y = points[..., 0], points[..., 1]
    r = 0.5 + 0.35 * np.sin(3.1 * x) * np.cos(2.3 * y)
    g = 0.5 + 0.35 * np.sin(2.2 * x + 1.0) * np.cos(3.7 * y + 0.5)
    b = 0.5 + 0.35 * np.sin(1.7 * x + 2.0) * np.cos(2.9 * y + 1.2)
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def _rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def make_plane_scene(
    n_views: int = 3,
    width: int = 64,
    height: int = 48,
    plane_z: float = 2.0,
    baseline: float = 0.12,
    tilt: float = 0.05,
) -> list[ViewSample]:
    """Views of the textured plane z = plane_z with exact analytic depth.

    Cameras sit on a small x-axis baseline with a slight yaw toward the
    center, so depth varies across the image and reprojection is exercised.
    """
    views = []
    focal = 0.9 * width
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    for i in range(n_views):
        offset = (i - (n_views - 1) / 2.0) * baseline
        pose = np.eye(4)
        pose[:3, :3] = _rotation_y(-tilt * offset)
        pose[:3, 3] = [offset, 0.0, 0.0]
        camera = Camera(fx=focal, fy=focal, cx=cx, cy=cy, pose=pose)

        us, vs = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
        dirs_cam = np.stack([(us - cx) / focal, (vs - cy) / focal, np.ones_like(us)], axis=-1)
        dirs_world = dirs_cam @ camera.rotation.T
        t = (plane_z - camera.origin[2]) / dirs_world[..., 2]
        points = camera.origin + t[..., None] * dirs_world
        depth = t  # camera-frame z-depth: dirs_cam has unit z component
        rgb = _texture(points)
        views.append(ViewSample(render=rgb.copy(), depth=depth.copy(), camera=camera, gt=rgb.copy(), name=f"view_{i}"))
    return views


def inject_floater(
    view: ViewSample,
    center: tuple[int, int],
    radius: int,
    depth_scale: float = 0.55,
    color: tuple[float, float, float] = (0.95, 0.1, 0.1),
) -> np.ndarray:
    """Paint a disk into one view's render and pull its depth off the surface.

    Returns the boolean injection mask (the floater ground truth).
    """
    h, w = view.depth.shape
    ys, xs = np.ogrid[:h, :w]
    cy, cx = center
    mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
    view.render[mask] = np.array(color)
    view.depth[mask] *= depth_scale
    return mask
