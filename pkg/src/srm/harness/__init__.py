"""Datasets, query streams, experiment driver and metrics."""
