"""Tests for kerr_stability."""
