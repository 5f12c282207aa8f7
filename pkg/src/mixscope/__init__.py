"""Mix-network traffic analysis: anonymize traces, run the least squares disclosure attack, check its error."""

__version__ = "0.1.0"
