"""Three-stage reconstruction with learned patch priors and Tikhonov data consistency."""

__version__ = "0.1.0"
