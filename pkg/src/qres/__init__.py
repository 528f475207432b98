"""Two-level resonance dynamics, weak values and EDM counting simulations."""

__version__ = "0.1.0"
