"""Video reconstruction from under-sampled linear measurements with a deconvolutional generator prior."""

__version__ = "0.1.0"
