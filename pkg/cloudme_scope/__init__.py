"""Forensic extraction of CloudMe client artefacts."""

__version__ = "0.3.0"
