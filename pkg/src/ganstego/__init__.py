"""GAN-based image steganography with classical baselines and evaluation tools."""

__version__ = "0.1.0"
