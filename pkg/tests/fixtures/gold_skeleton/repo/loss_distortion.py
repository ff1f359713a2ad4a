"""Distortion regularizer over ray sample weights."""

import numpy as np


def distortion_loss(weights, midpoints):
    """Penalize weight mass spread along each ray.

    Sum over sample pairs of w_i * w_j * |m_i - m_j|, normalized by rays.
    """
    w = np.asarray(weights)
    m = np.asarray(midpoints)
    diff = np.abs(m[:, :, None] - m[:, None, :])
    per_ray = np.einsum("rs,rt,rst->r", w, w, diff)
    return np.array([per_ray.mean()])
