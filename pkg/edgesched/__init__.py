"""Task scheduling and edge-cluster simulation for object-detection workloads."""

__version__ = "0.1.0"
