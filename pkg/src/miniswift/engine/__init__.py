"""Dataflow evaluation: event loops, the engine, and the restart log."""
