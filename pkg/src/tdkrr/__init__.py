"""Time-domain sound field estimation by kernel ridge regression with data weighting"""
__version__ = "0.1.0"
