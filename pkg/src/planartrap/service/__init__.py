"""HTTP service wrapping the toolkit: one task endpoint per CLI command."""

from .app import create_app

__all__ = ["create_app"]
