"""Bundled example data."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

__all__ = ["bodyfat_path"]


def bodyfat_path() -> Path:
    """Path to the bundled body-fat example table (y plus 8 covariates)."""
    return Path(resources.files("unitcp.data") / "bodyfat.csv")
