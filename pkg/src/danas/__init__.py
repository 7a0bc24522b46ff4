"""danas: joint gradient-based search over audio data configurations and
cell-based tiny neural architectures."""

__version__ = "0.1.0"
