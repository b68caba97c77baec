"""Subband spectrogram features, SENet scoring, and score fusion for spoofed-speech detection."""

__version__ = "0.1.0"
