"""Semi-blind multi-user MIMO channel estimation with Gaussian mixture priors."""

__version__ = "0.1.0"
