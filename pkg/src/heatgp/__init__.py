"""Heat kernels on manifolds estimated from simulated Brownian motion, used as GP covariances."""

__version__ = "0.1.0"
