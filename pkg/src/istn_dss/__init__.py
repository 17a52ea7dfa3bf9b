"""Dynamic spectrum sharing between a terrestrial 5G network and a LEO satellite.

Resource-grid arithmetic, channel synthesis, rate evaluation, queue dynamics,
successive convex approximation planners and a simulation harness.
"""

__version__ = "0.1.0"
