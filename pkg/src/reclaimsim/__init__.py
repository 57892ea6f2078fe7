"""Trace-driven simulator of a multi-tenant serverless node with a shared reclaim pool."""

__version__ = "0.1.0"
