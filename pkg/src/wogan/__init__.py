"""Online WGAN-based test generation for a lane-keeping stand-in simulator."""

__version__ = "0.1.0"
