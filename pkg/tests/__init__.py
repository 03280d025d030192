"""Tests for semica."""
