"""Activity recognition from LFI eye sensors and a head IMU."""

__version__ = "0.1.0"
