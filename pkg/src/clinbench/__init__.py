"""Affect-driven simulated patients, clinician-model conversations and committee rubric judging."""

__version__ = "0.1.0"
