"""maliot: real-time malicious traffic detection for IoT flow logs."""

__version__ = "0.1.0"
