"""In-memory hyperdimensional computing: ideal reference and crossbar simulator."""

__version__ = "0.1.0"
