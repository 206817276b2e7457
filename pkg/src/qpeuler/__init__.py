"""Space quasi-periodic stationary Euler flows bifurcating from near-Couette shears."""

__version__ = "0.1.0"
