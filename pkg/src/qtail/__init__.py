"""Hybrid quantum-classical classification heads with a long-tailed
multi-label training, benchmarking, and evaluation harness."""

__version__ = "0.1.0"
