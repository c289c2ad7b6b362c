"""miniswift: a desk-scale typed dataflow workflow system.

A small scripting language for file-based workflows, an engine that runs
them by data availability, a scheduler with several execution providers,
and a benchmark harness with a reference performance model.
"""

__version__ = "0.1.0"
