"""
reversible harmonic maps between triangle meshes
"""
__author__ = "The revharm authors"
__license__ = "MIT"
__version__ = "0.1.0"

from revharm import (
    errors,
    mesh,
    shapes,
    geodesics,
    embedding,
    projection,
    maps,
    shape,
    initialization,
    solver,
    metrics,
    transfer
)
