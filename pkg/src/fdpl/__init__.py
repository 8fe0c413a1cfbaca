"""Frequency-domain perceptual loss for single-image super resolution."""
