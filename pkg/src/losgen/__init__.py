"""Synthetic LOS/NLOS satellite-channel traces and generative-model evaluation."""

__version__ = "0.1.0"
