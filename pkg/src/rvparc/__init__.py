"""rvparc: landmark-anchored parcellation and remodelling of ventricular meshes."""

from .mesh import (
    CorrespondencePair,
    LandmarkSet,
    MeshError,
    TriSurface,
    signed_volume,
)

__version__ = "0.1.0"

__all__ = [
    "CorrespondencePair",
    "LandmarkSet",
    "MeshError",
    "TriSurface",
    "signed_volume",
    "__version__",
]
