"""Image/text conditioned Mel-spectrogram generation, dataset alignment and evaluation."""

__version__ = "0.1.0"
