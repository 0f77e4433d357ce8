"""Disentangled adversarial subject-transfer learning for physiological biosignals."""

__all__ = ["__version__"]
__version__ = "0.1.0"
