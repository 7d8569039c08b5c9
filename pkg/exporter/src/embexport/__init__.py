"""Per-layer [CLS] embedding exporter for the lingprobe toolkit."""

__version__ = "0.1.0"
