"""cutgate: cutting-plane solvers with a gated learned surrogate for the master problem."""

__version__ = "0.1.0"
