"""Synthetic workloads, the reference performance model and benchmarks."""
