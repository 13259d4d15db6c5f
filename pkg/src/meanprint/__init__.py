"""Fingerprint model synthesis: fuse several impressions of a finger into one
mean fingerprint and match queries against it."""

from .alignment import GAConfig, align_pair, ga_align
from .geometry import SimilarityTransform, exact_two_point, invert
from .minutiae import Minutia, extract_minutiae
from .synthesis import synthesize
from .template import FingerprintTemplate, MeanFingerprint

__all__ = [
    "FingerprintTemplate",
    "GAConfig",
    "MeanFingerprint",
    "Minutia",
    "SimilarityTransform",
    "align_pair",
    "exact_two_point",
    "extract_minutiae",
    "ga_align",
    "invert",
    "synthesize",
]
__version__ = "0.1.0"
