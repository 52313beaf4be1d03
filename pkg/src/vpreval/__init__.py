"""Deterministic evaluation engine and audit toolkit for visual place
recognition: descriptors, similarity matrices, explicit ground truth,
threshold-sweep metrics under both intended-output protocols, a synthetic
dataset generator, and audits that quantify how setup choices change
results.

Hot kernels run through a compiled extension when it is built and fall
back to bit-identical pure numpy otherwise; see ``vpreval.kernels``.
"""

from vpreval.kernels import DEFAULT_BACKEND, HAVE_COMPILED
from vpreval.model import (
    DescriptorSet,
    ExperimentManifest,
    FormatError,
    GroundTruthMatrix,
    GtCriterion,
    PoseTrack,
    SimilarityMatrix,
    SweepResult,
    hash_descriptor_set,
    read_manifest,
    save_manifest,
    validate_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_BACKEND",
    "HAVE_COMPILED",
    "DescriptorSet",
    "ExperimentManifest",
    "FormatError",
    "GroundTruthMatrix",
    "GtCriterion",
    "PoseTrack",
    "SimilarityMatrix",
    "SweepResult",
    "hash_descriptor_set",
    "read_manifest",
    "save_manifest",
    "validate_manifest",
    "__version__",
]
