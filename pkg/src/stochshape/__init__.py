"""Second-order stochastic landmark and curve dynamics on dyadic Sobolev spaces."""

__version__ = "0.1.0"
