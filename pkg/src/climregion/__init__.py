"""Climate regionalization with Gaussian-mixture EM and per-region regression."""

__version__ = "0.1.0"
