"""fedarena: deterministic federated-learning simulator with adversarial
training, model-replacement attacks, and robust aggregation defenses."""

from .backends import BACKEND_NAME

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "__version__"]
