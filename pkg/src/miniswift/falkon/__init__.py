"""A streamlined task dispatcher: a FIFO queue, registered workers, two
messages per task, and a provisioner that sizes the worker pool to the load."""

from .core import FalkonCore, ProvisionerPolicy, deregister_idle, provision

__all__ = ["FalkonCore", "ProvisionerPolicy", "provision", "deregister_idle"]
