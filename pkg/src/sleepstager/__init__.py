"""Classical sleep-stage scoring from polysomnography recordings."""

__version__ = "0.1.0"
