"""HTTP service exposing experiment runs, sweeps, and contraction checks."""

from .app import app

__all__ = ["app"]
