"""Insider-attack flow detection: bi-clustering and One-Class SVM with joint voting."""

__version__ = "0.1.0"
