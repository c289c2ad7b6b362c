"""Logical types, dataset nodes and mappers."""
