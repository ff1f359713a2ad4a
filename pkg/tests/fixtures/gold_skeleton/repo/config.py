"""Method registration and hyperparameters for the gold plugin."""

from dataclasses import dataclass


@dataclass
class PluginConfig:
    method_name: str = "gold-plugin"
    num_rays_per_batch: int = 4096
    samples_per_ray: int = 48
    proposal_warmup: int = 512
    distortion_weight: float = 0.002
    learning_rate: float = 0.01


method_spec = {
    "name": "gold-plugin",
    "config": "PluginConfig",
    "description": "reference skeleton exercising every grammar role",
}
