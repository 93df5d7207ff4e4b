"""Full-waveform inversion of a 2D plate with conventional, network and transfer-learning methods."""

__version__ = "0.1.0"
