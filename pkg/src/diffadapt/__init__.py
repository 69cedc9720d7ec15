"""Diffusion adaptation over agent networks: linear, logistic, kernel,
random-feature and spline filters with single-task and multitask cooperation."""

__version__ = "0.1.0"
