"""Audio-driven talking face synthesis toolkit."""

__version__ = "0.1.0"
