"""Branching geodesics and strong Kato limits on a glued planar surface."""

__version__ = "0.1.0"
