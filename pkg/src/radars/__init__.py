"""Memory-bounded neural architecture search: RL exploration prunes the space,
differentiable search exploits the pruned SuperNet."""

__version__ = "0.1.0"
