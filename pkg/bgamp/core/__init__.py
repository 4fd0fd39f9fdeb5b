"""Core application components."""

