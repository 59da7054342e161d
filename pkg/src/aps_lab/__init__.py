"""Loss-driven aligned-points label assignment on synthetic detector loss fields."""

__version__ = "0.1.0"
