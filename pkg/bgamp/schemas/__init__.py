"""Pydantic schemas for run requests and analysis reports."""
