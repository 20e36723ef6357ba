"""Compiled inner loops (numba when enabled, plain Python otherwise)."""
