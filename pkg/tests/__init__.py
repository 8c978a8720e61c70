"""Tests for orthobell."""
