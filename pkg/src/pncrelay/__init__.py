"""Relay-side iterative receiver for physical-layer network coding over
doubly-spread underwater acoustic OFDM channels."""

__version__ = "0.1.0"
