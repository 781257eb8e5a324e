"""Design and evaluation of RCTs for capacity-constrained service interventions."""

__version__ = "0.1.0"
