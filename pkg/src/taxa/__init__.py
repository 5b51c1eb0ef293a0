"""Taxonomy-conditioned diffusion engine, desk scale.

Progressive per-level condition training with sequential freezing, low-rank
attention adaptation, taxonomy-anchored guidance, a procedural hierarchical
image dataset, and probe-classifier evaluation metrics.
"""

from . import _mem  # noqa: F401  (malloc tuning; must import before heavy numpy use)

__version__ = "0.1.0"
