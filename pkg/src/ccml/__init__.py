"""Two collaborating networks that detect, rank and correct noisy multi-labels."""

__version__ = "0.1.0"
