"""Modular multi-sensor biosignal pipeline: acquisition, DSP, features, detection."""

__version__ = "0.1.0"


class NeuropipeError(Exception):
    """Base class for errors raised by neuropipe stages."""
