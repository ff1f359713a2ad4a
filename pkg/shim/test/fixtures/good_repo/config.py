"""Method registration."""

method_spec = {"name": "stub-plugin", "config": "PluginConfig"}


class PluginConfig:
    learning_rate = 0.01
