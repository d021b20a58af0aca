"""Tests for psvgp.fabric package."""
