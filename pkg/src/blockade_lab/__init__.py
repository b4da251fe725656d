"""Photon blockade laboratory."""
