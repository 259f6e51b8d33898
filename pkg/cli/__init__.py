"""Batch command line and dataset I/O."""
