"""Asymptotic information-theoretic quantities of sparse generalized linear models."""
__version__ = "0.1.0"
