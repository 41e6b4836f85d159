"""Budget-aware benchmark for semisupervised threat detectors."""

__version__ = "0.1.0"
