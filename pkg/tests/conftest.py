"""Keeps this directory importable so tests can share helpers in support.py."""
