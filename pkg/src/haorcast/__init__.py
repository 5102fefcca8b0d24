"""Flash-flood mapping, 72-hour flood probability, alerts and crop damage for haor wetlands."""

from .errors import HaorcastError

__version__ = "0.1.0"
__all__ = ["HaorcastError", "__version__"]
