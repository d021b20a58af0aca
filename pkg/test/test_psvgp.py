"""Tests for psvgp."""

from __future__ import annotations

import psvgp


def test_version() -> None:
    """Check version is set."""
    assert psvgp.__version__
