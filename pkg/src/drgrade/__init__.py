"""Diabetic retinopathy grading toolkit.

Preprocesses fundus photographs, classifies severity with a weighted-vote
ensemble over CNN-derived feature vectors, stages severity from lesion
segmentation masks, and attaches a per-lesion trust score to every decision.
"""

__version__ = "0.1.0"

from .imgio import (  # noqa: F401
    BinaryMask,
    GrayImage,
    ProbMask,
    RgbImage,
    load_mask,
    load_probmask,
    load_rgb,
    save_mask,
    save_probmask,
    save_rgb,
    to_gray,
)
