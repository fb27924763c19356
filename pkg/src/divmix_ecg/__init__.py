"""Noisy-label multi-label ECG classification with multi-label DivideMix and SWA."""

__version__ = "0.1.0"
