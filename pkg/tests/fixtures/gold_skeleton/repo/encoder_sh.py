"""Spherical-harmonics direction encoding."""

import numpy as np


class SphericalEncoder:
    degree = 2

    def out_dim(self):
        return self.degree**2

    def encode(self, positions):
        d = np.asarray(positions)
        feats = [np.ones_like(d[..., :1]), d[..., :1], d[..., 1:2], d[..., 2:3]]
        return np.concatenate(feats, axis=-1)


def encode(positions):
    return SphericalEncoder().encode(positions)
