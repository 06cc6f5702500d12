"""Delay-Doppler domain communications laboratory.

A simulation and analysis toolbox for OTFS-style waveforms: discrete Zak
transforms, linear time-varying channels, iterative detection, error-rate
bounds, convolutional coding with turbo equalization, and a spatially-spread
ISAC (integrated sensing and communication) pipeline, all driven by a
reproducible Monte Carlo harness.
"""

from otfs_lab.transforms import Domain, DomainVector, FrameParams

__all__ = ["Domain", "DomainVector", "FrameParams"]

__version__ = "0.1.0"
