"""K-seed random-subspace federated fine-tuning simulator."""

__version__ = "0.3.0"
