"""Distributionally robust frequency-constrained microgrid scheduling."""

from importlib import resources

__version__ = "0.1.0"


def packaged_case(name: str = "case33_desk"):
    """Path to a case file shipped with the package."""
    return resources.files("mgsched.data").joinpath(f"{name}.json")
