"""Estimating a classifier's risk on an unlabeled, shifted target distribution."""

__version__ = "0.1.0"
