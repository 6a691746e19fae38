"""Synthetic sequences, metrics and the benchmark runner."""
