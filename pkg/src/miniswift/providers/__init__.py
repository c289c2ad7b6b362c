"""Execution providers: local processes, a simulated batch system, Falkon."""

from .base import JobSpec, JobStatus, Provider


def make_provider(kind, site_id, params, loop=None):
    """Instantiate a provider from a sites-file entry."""
    params = dict(params or {})
    if kind == "local":
        from .local import LocalProvider
        return LocalProvider(site_id, **params)
    if kind == "simbatch":
        from .simbatch import SimBatchProvider
        return SimBatchProvider(site_id, **params)
    if kind == "falkon":
        if params.get("connect"):
            from .falkonclient import FalkonClientProvider
            return FalkonClientProvider(site_id, **params)
        from .falkonsim import FalkonSimProvider
        return FalkonSimProvider(site_id, **params)
    raise ValueError(f"unknown provider kind {kind!r}")


__all__ = ["JobSpec", "JobStatus", "Provider", "make_provider"]
