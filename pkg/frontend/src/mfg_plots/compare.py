"""Pixel comparison for image regression tests."""

import numpy as np
from matplotlib import image as mimage


def compare_images(actual_path, golden_path, threshold=0.02,
                   max_fraction=0.0):
    """Count pixels whose largest channel difference exceeds threshold.

    Images are read as float arrays in [0, 1] and must have identical
    shapes. Returns a dict with 'passed' (differing fraction at or below
    max_fraction), 'pixels_different', and 'fraction_different'.
    """
    a = np.asarray(mimage.imread(actual_path), dtype=float)
    b = np.asarray(mimage.imread(golden_path), dtype=float)
    if a.shape != b.shape:
        raise ValueError("size mismatch: %s vs %s" % (a.shape, b.shape))
    diff = np.abs(a - b)
    if diff.ndim == 3:
        diff = diff.max(axis=-1)
    different = int(np.count_nonzero(diff > threshold))
    fraction = different / diff.size
    return {"passed": fraction <= max_fraction,
            "pixels_different": different,
            "fraction_different": fraction}
