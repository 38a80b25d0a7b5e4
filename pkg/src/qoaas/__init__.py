"""qoaas: a multi-engine cost-based query optimizer behind a service
boundary, with toy execution engines for desk-scale ground truth."""

__version__ = "0.1.0"
