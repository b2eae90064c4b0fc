"""Keyphrase extraction for noisy live-stream transcripts."""

__version__ = "0.1.0"
