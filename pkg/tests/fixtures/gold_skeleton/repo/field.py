"""Density and color field backed by the hash encoder."""

import numpy as np

from .config import PluginConfig
from .encoder_hash import HashEncoder


class PluginField:
    def __init__(self, config: PluginConfig):
        self.config = config
        self.encoder = HashEncoder()

    def get_density(self, positions):
        feats = self.encoder.encode(np.asarray(positions))
        return np.maximum(feats.sum(axis=-1, keepdims=True), 0.0)


def get_density(positions):
    return PluginField(PluginConfig()).get_density(positions)
