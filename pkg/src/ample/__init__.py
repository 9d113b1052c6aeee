"""AMPLE path loss modelling toolkit."""
from .errors import AmpleError
from .kernels import backend_name
from .regionmap import GeoPoint, LineMatrix, Los, RegionCode, RegionMap, classify_los, geo_to_grid, trace_line
from .models import (AbgParams, AmpleParams, CiParams, SamplePoint, collapse_line, fspl, predict_abg,
                     predict_ample, predict_ci, sample_shadowing)

__version__ = "0.1.0"

__all__ = [
    "AmpleError", "backend_name",
    "GeoPoint", "LineMatrix", "Los", "RegionCode", "RegionMap", "classify_los", "geo_to_grid", "trace_line",
    "AbgParams", "AmpleParams", "CiParams", "SamplePoint", "collapse_line", "fspl", "predict_abg",
    "predict_ample", "predict_ci", "sample_shadowing",
]
