"""htssim: system- and link-level models for multibeam high throughput satellites."""

__version__ = "0.1.0"
