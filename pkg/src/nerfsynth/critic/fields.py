"""Dense local-window PSNR and SSIM error fields.

Both maps share one anchor grid: window anchors every `stride` pixels for a
`window`-sized square. PSNR is computed over the full window; SSIM is the
Gaussian-weighted structural similarity of the `ssim_window` patch centered
on the window (clamped inside the image), averaged over channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionMismatch(Exception):
    pass


@dataclass(frozen=True)
class WindowConfig:
    window: int = 16
    stride: int = 8
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0
    psnr_ceiling: float = 100.0


@dataclass
class ErrorField:
    psnr_map: np.ndarray  # (rows, cols) dB
    ssim_map: np.ndarray  # (rows, cols) in [-1, 1]
    window: tuple[int, int]  # (size, stride)
    image_shape: tuple[int, int]

    def worst_anchor(self) -> tuple[int, int]:
        idx = np.unravel_index(int(np.argmin(self.psnr_map)), self.psnr_map.shape)
        return int(idx[0]), int(idx[1])


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    offsets = np.arange(size) - half
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def window_psnr(x: np.ndarray, y: np.ndarray, data_range: float, ceiling: float) -> float:
    """PSNR of one window pair; zero MSE clamps to the ceiling."""
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return ceiling
    return min(10.0 * np.log10(data_range**2 / mse), ceiling)


def window_ssim(x: np.ndarray, y: np.ndarray, weights: np.ndarray, cfg: WindowConfig) -> float:
    """Gaussian-weighted SSIM statistic of one patch pair, channel-averaged."""
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    if x.ndim == 2:
        x = x[..., None]
        y = y[..., None]
    w = weights[..., None]
    mu_x = (w * x).sum(axis=(0, 1))
    mu_y = (w * y).sum(axis=(0, 1))
    var_x = (w * (x - mu_x) ** 2).sum(axis=(0, 1))
    var_y = (w * (y - mu_y) ** 2).sum(axis=(0, 1))
    cov = (w * (x - mu_x) * (y - mu_y)).sum(axis=(0, 1))
    ssim_c = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
    return float(np.mean(ssim_c))


def anchor_grid(shape: tuple[int, int], cfg: WindowConfig) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    rows = np.arange(0, h - cfg.window + 1, cfg.stride)
    cols = np.arange(0, w - cfg.window + 1, cfg.stride)
    return rows, cols


def compute_error_fields(render: np.ndarray, gt: np.ndarray, cfg: WindowConfig = WindowConfig()) -> ErrorField:
    """Per-window PSNR and SSIM maps for a normalized image pair."""
    render = np.asarray(render, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if render.shape != gt.shape:
        raise DimensionMismatch(f"{render.shape} vs {gt.shape}")
    h, w = render.shape[:2]
    if h < cfg.window or w < cfg.window:
        raise DimensionMismatch(f"image {h}x{w} smaller than window {cfg.window}")
    rows, cols = anchor_grid((h, w), cfg)
    psnr_map = np.zeros((len(rows), len(cols)))
    ssim_map = np.zeros((len(rows), len(cols)))
    weights = gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma)
    half = cfg.ssim_window // 2
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            xw = render[r : r + cfg.window, c : c + cfg.window]
            yw = gt[r : r + cfg.window, c : c + cfg.window]
            psnr_map[i, j] = window_psnr(xw, yw, cfg.data_range, cfg.psnr_ceiling)
            center_r = r + cfg.window // 2
            center_c = c + cfg.window // 2
            r0 = min(max(center_r - half, 0), h - cfg.ssim_window)
            c0 = min(max(center_c - half, 0), w - cfg.ssim_window)
            xp = render[r0 : r0 + cfg.ssim_window, c0 : c0 + cfg.ssim_window]
            yp = gt[r0 : r0 + cfg.ssim_window, c0 : c0 + cfg.ssim_window]
            ssim_map[i, j] = window_ssim(xp, yp, weights, cfg)
    return ErrorField(psnr_map=psnr_map, ssim_map=ssim_map, window=(cfg.window, cfg.stride), image_shape=(h, w))
