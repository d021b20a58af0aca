"""Tests for psvgp.cli package."""
