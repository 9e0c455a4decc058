"""Second-order randomized identification over AWGN channels: bounds, codes and checks."""

__version__ = "0.1.0"
