"""Simulation and key-rate analysis for a semiquantum key distribution
protocol in which Bob prepares X-basis states only and Alice never measures."""

__version__ = "0.1.0"
