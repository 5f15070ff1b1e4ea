"""Wi-Fi intrusion detection from 16 link-layer features encoded as 16x16 matrices."""

__version__ = "0.1.0"
