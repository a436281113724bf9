"""Discrete-event simulator and control-plane library for segmented industrial networks."""

__version__ = "0.1.0"
