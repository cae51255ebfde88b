"""Synthetic data augmentation for semantic segmentation.

Turns a real dataset into two synthetic companions: d1 regenerates whole
images guided by a blended structural prior and a class-aware prompt; d2
inpaints each labeled class in turn and composites the generated regions
over the untouched original. Labels are copied byte-for-byte, so synthetic
samples reuse the real annotations unchanged.
"""

__version__ = "0.1.0"
