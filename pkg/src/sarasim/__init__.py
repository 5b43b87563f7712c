"""Socially-aware resource allocation for D2D-enabled small cell networks."""
