"""Volunteer edge-cloud task scheduling: simulator, scores, A3C agent and baselines."""

__version__ = "0.1.0"
