"""Truncated white-noise calculus: chaos algebra, renormalized products, a pathwise SDE solver."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
