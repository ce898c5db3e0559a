"""Direct-interaction (Fokker) electrodynamics of two charges on broken world lines."""

from fokker.minkowski import (
    FourVector,
    NonTimelikeSegmentError,
    SingularCrossingError,
    SystemParams,
    WorldLine,
    boost_matrix,
    interval_squared,
    lightcone_crossings,
    minkowski_dot,
    proper_length,
    rotation_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "FourVector",
    "NonTimelikeSegmentError",
    "SingularCrossingError",
    "SystemParams",
    "WorldLine",
    "boost_matrix",
    "interval_squared",
    "lightcone_crossings",
    "minkowski_dot",
    "proper_length",
    "rotation_matrix",
]
