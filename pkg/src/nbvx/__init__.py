"""Sampling-based 3D exploration planner with yaw-optimized gain,
history-graph reseeding, and smooth polynomial trajectories."""

__version__ = "0.1.0"
