"""Semi-supervised segmentation training by denoising network predictions."""

__version__ = "0.1.0"
