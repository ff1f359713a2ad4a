"""nerfsynth: paper-to-plugin synthesis for NeRF methods.

Converts a structured research-paper document into a validated, trainable
Nerfstudio-style plugin repository through grammar-constrained multi-agent
synthesis, citation dependency resolution, a visual critique loop, and a
reproducibility benchmark harness.
"""

__version__ = "0.1.0"
