"""Recognition of in-place body actions and head gestures from head-mounted
display tracking streams: a two-stream 1-D CNN with a real-time resolution
pipeline, a discrete-HMM baseline, and a synthetic-data evaluation harness.
"""

from .labels import BODY_CLASSES, GATED_CLASSES, HEAD_CLASSES, N_CLASSES, ClassLabel

__version__ = "0.1.0"

__all__ = [
    "BODY_CLASSES",
    "GATED_CLASSES",
    "HEAD_CLASSES",
    "N_CLASSES",
    "ClassLabel",
    "__version__",
]
