"""Flatness analysis, linearization by prolongation and quasi-static tracking
control for two-input nonlinear systems with an (x,u)-flat output."""

__version__ = "0.1.0"
