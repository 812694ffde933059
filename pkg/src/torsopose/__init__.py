"""Multi-camera torso pose estimation (floor position and orientation) with GNNs."""

__version__ = "0.1.0"
