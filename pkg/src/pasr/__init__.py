"""Geography-aware self-attention recommender for next-location prediction."""

from ._accel import USE_NUMBA, backend
from .config import ModelConfig, RunConfig
from .geocode import GeoCoordinate, decode_geohash, encode_geohash, ngram_tokenize
from .model import PASR

__version__ = "0.1.0"

__all__ = [
    "GeoCoordinate", "ModelConfig", "PASR", "RunConfig", "USE_NUMBA", "backend",
    "decode_geohash", "encode_geohash", "ngram_tokenize",
]
