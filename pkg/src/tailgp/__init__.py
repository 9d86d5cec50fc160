"""Sequential Gaussian-process estimation of extreme tail probabilities and quantiles."""
__version__ = "0.1.0"
