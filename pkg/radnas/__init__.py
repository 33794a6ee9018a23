"""Range-Doppler radar detection with a searchable dual-branch adapter."""

__version__ = "0.1.0"
