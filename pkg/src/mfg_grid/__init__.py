"""Mean-field prosumer electricity market simulator."""

__version__ = "0.1.0"
