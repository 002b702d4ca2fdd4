"""provlab: a desk-scale testbed for smart-home EZ-mode provisioning.

Packet-length credential broadcasting, token-based device/cloud
registration, signed app-cloud envelopes with steganographically hidden
keys, per-device network isolation, and an edge proxy gateway, all over
a deterministic in-process network simulation.
"""

__version__ = "0.1.0"
