"""Single-hit triage for single-particle-imaging diffraction data."""

__version__ = "0.1.0"
