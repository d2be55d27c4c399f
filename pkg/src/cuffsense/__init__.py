"""Interface-force evaluation toolkit for back-support exoskeleton cuffs."""

__version__ = "0.1.0"
