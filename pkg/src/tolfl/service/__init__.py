"""HTTP service exposing experiment execution, suites and reports."""

from .app import app, create_app

__all__ = ["app", "create_app"]
