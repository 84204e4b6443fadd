"""Monte Carlo model of transducer-mediated remote entanglement."""

__version__ = "0.1.0"
