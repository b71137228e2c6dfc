"""Numerical verification toolkit for gamma analysis."""
