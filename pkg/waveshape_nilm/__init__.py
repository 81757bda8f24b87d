"""
Waveshape NILM - event-based load disaggregation with V-I trajectory features
"""

__version__ = "0.1.0"
__author__ = "Waveshape NILM Contributors"

from .errors import ConfigError, DataError, NilmError, NumericError
from .features import FeatureSpace, extract_har, extract_pq, extract_ws, featurize
from .signal import CyclePair, Waveform

__all__ = [
    "ConfigError",
    "CyclePair",
    "DataError",
    "FeatureSpace",
    "NilmError",
    "NumericError",
    "Waveform",
    "extract_har",
    "extract_pq",
    "extract_ws",
    "featurize",
]
