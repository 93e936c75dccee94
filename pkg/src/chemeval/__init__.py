"""Offline evaluation toolkit for chemistry OCR and exam benchmarks."""

__version__ = "0.1.0"
