"""Collective Rydberg excitation dynamics in mesoscopic samples via superatom coarse-graining."""

__version__ = "0.1.0"
