"""Simulate magnetic fingerprints on a touchscreen magnetometer, extract
touch features and classify which finger touched."""

__version__ = "0.1.0"
