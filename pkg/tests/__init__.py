"""Tests for gbmask."""
