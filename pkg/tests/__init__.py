"""Test package for the back-gate amplifier toolkit."""
