"""Committed benchmark suite files (JSON)."""
