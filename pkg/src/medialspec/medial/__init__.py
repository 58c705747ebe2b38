"""Distance field, average outward flux and medial surface extraction."""

from .distance import DistanceField, distance_transform, squared_edt
from .flux import AofField, VectorField, average_outward_flux, gradient_field, sphere_directions
from .skeleton import (DEFAULT_TAU, SkeletalPointSet, extract_skeleton, load_skeleton,
                       save_skeleton, thin)
from .thinning import is_endpoint, is_simple

__all__ = [
    "DistanceField", "distance_transform", "squared_edt",
    "AofField", "VectorField", "average_outward_flux", "gradient_field", "sphere_directions",
    "DEFAULT_TAU", "SkeletalPointSet", "extract_skeleton", "load_skeleton", "save_skeleton", "thin",
    "is_endpoint", "is_simple",
]
