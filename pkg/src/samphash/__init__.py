"""Min-entropy sampling toolkit and streaming sample-and-hash pipeline."""

__version__ = "0.1.0"
REPORT_FORMAT = "1"
