"""Residential vacancy, population dynamics and inter-city mobility from positioning logs."""

from .errors import (
    AlignmentError,
    GhostCityError,
    InvariantError,
    ParameterError,
    ParseError,
    ValidationError,
)
from .geo import GeoPoint, GridIndex, ProjectionParams, Region
from .ingest import Poi, PoiCategory, PointTable, StudyWindow, parse_pois, parse_points

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "GhostCityError", "InvariantError", "ParameterError", "ParseError",
    "ValidationError", "GeoPoint", "GridIndex", "ProjectionParams", "Region", "Poi",
    "PoiCategory", "PointTable", "StudyWindow", "parse_pois", "parse_points",
]
