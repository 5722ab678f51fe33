"""Energy-saving UAV formation flight and control-aware ISAC beamforming."""

__version__ = "0.1.0"
