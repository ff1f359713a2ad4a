"""Pinhole cameras, view samples and the on-disk view bundle format.

Bundle layout per view: `views/<name>/{render.png, gt.png, depth.bin,
camera.json}` where depth.bin is two little-endian uint32 (width, height)
followed by float32 row-major z-depths, and camera.json holds
`{fx, fy, cx, cy, pose}` with the world-from-camera 4x4 pose flattened
row-major.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    pose: np.ndarray  # 4x4 world-from-camera

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(4, 4)

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def origin(self) -> np.ndarray:
        return self.pose[:3, 3]

    def unproject(self, us: np.ndarray, vs: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Pixel coordinates + z-depths to world points, shape (N, 3)."""
        x = (us - self.cx) / self.fx
        y = (vs - self.cy) / self.fy
        dirs_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
        pts_cam = dirs_cam * depth[..., None]
        return pts_cam @ self.rotation.T + self.origin

    def project(self, points_world: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points to pixel (u, v) and camera-frame z-depth."""
        rel = (points_world - self.origin) @ self.rotation
        z = rel[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * rel[..., 0] / z + self.cx
            v = self.fy * rel[..., 1] / z + self.cy
        return u, v, z

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "pose": [float(x) for x in self.pose.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Camera":
        return cls(
            fx=data["fx"], fy=data["fy"], cx=data["cx"], cy=data["cy"],
            pose=np.array(data["pose"], dtype=np.float64).reshape(4, 4),
        )


@dataclass
class ViewSample:
    render: np.ndarray            # (H, W, 3) in [0, 1]
    depth: np.ndarray             # (H, W) z-depth, scene units
    camera: Camera
    gt: np.ndarray | None = None
    name: str = "view"

    def __post_init__(self):
        if self.render.shape[:2] != self.depth.shape:
            raise ValueError("render and depth dimensions differ")
        if np.any(self.depth < 0):
            raise ValueError("depth must be nonnegative")

    @property
    def height(self) -> int:
        return self.render.shape[0]

    @property
    def width(self) -> int:
        return self.render.shape[1]


def _write_png(path: Path, image: np.ndarray) -> None:
    data = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((data * 255.0 + 0.5).astype(np.uint8)).save(path)


def _read_png(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0


def _write_depth(path: Path, depth: np.ndarray) -> None:
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", w, h))
        fh.write(np.asarray(depth, dtype="<f4").tobytes(order="C"))


def _read_depth(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    w, h = struct.unpack("<II", raw[:8])
    return np.frombuffer(raw[8:], dtype="<f4").reshape(h, w).astype(np.float64)


def save_view_bundle(views_dir: str | Path, name: str, view: ViewSample) -> Path:
    bundle = Path(views_dir) / name
    bundle.mkdir(parents=True, exist_ok=True)
    _write_png(bundle / "render.png", view.render)
    if view.gt is not None:
        _write_png(bundle / "gt.png", view.gt)
    _write_depth(bundle / "depth.bin", view.depth)
    (bundle / "camera.json").write_text(json.dumps(view.camera.to_dict(), indent=2) + "\n")
    return bundle


def load_view_bundle(bundle_dir: str | Path) -> ViewSample:
    bundle = Path(bundle_dir)
    render = _read_png(bundle / "render.png")
    gt_path = bundle / "gt.png"
    gt = _read_png(gt_path) if gt_path.exists() else None
    depth = _read_depth(bundle / "depth.bin")
    camera = Camera.from_dict(json.loads((bundle / "camera.json").read_text()))
    return ViewSample(render=render, depth=depth, camera=camera, gt=gt, name=bundle.name)


def load_views(views_dir: str | Path) -> list[ViewSample]:
    root = Path(views_dir)
    return [load_view_bundle(p) for p in sorted(root.iterdir()) if p.is_dir()]
