"""Medial-axis spectral shape analysis on voxelized solids.

Modules
-------
voxelio      mesh input and output, solid voxelization
medial       distance transform, average outward flux, thinning
recon        reconstruction from skeletal balls, mIoU
spectral     medially weighted boundary graph and its eigenpairs
correspond   spectrum alignment and dense correspondence
segment      subspace-randomized spectral clustering, Rand error
features     Geometry Similarity Connection features
pipeline     staged runs with caching; ``cli`` wraps it as ``medial``
"""

from .errors import MedialError

__version__ = "0.1.0"

__all__ = ["MedialError", "__version__"]
