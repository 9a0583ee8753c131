"""Point cloud geometry surface coding toolkit."""

__version__ = "0.1.0"
