"""Mask-based MVDR, multi-tap MVDR, WPD and WPD++ beamforming toolkit."""

__version__ = "0.1.0"
