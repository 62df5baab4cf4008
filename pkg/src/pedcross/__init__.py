"""Hybrid-automaton prediction of pedestrian crosswalk behavior around automated vehicles."""

__version__ = "0.1.0"
