"""Binary-mask algebra: per-class extraction, dilation, union, compositing.

Masks extracted from a semantic label are pairwise disjoint by construction,
which is what makes the pixel compositor exact: every output pixel comes from
exactly one patch or from the base image, with no blending.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import DimensionMismatchError, MaskError


@dataclass
class BinaryMask:
    """H x W raster of {0, 1} selecting the pixels of one class."""

    data: np.ndarray
    class_id: int | None = None

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise MaskError(f"mask must be 2-D, got shape {self.data.shape}")
        if not np.isin(self.data, (0, 1)).all():
            raise MaskError("mask values must be strictly 0 or 1")
        self.data = self.data.astype(np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _first_coord(flags: np.ndarray) -> tuple[int, int]:
    idx = np.argmax(flags)  # row-major scan; flags has at least one True
    return int(idx // flags.shape[1]), int(idx % flags.shape[1])


def extract_class_masks(label: np.ndarray, class_map) -> list[BinaryMask]:
    """One mask per non-background, non-void class present, ascending class_id.

    Raises MaskError on a pixel value that is not in the class map.
    """
    known = set(class_map.ids())
    if class_map.void_id is not None:
        known.add(class_map.void_id)
    present = np.unique(label)
    for value in present:
        if int(value) not in known:
            coord = _first_coord(label == value)
            raise MaskError(f"label value {int(value)} at {coord} is not in the class map")

    masks = []
    for class_id in sorted(class_map.foreground_ids()):
        selected = label == class_id
        if selected.any():
            masks.append(BinaryMask(selected.astype(np.uint8), class_id=class_id))
    return masks


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Square-structuring-element dilation; radius 0 is the identity."""
    if radius < 0:
        raise MaskError(f"dilation radius must be >= 0, got {radius}")
    if radius == 0:
        return BinaryMask(mask.data.copy(), class_id=mask.class_id)
    grown = maximum_filter(mask.data, size=2 * radius + 1, mode="constant", cval=0)
    return BinaryMask(grown, class_id=mask.class_id)


def composite(
    base: np.ndarray, patches: list[tuple[np.ndarray, BinaryMask]]
) -> np.ndarray:
    """Assemble an image from disjoint per-class patches over a base.

    output(p) = patch_i(p) where mask_i(p) = 1, base(p) elsewhere; exact
    integer copy, no blending. Overlapping masks are an error because summed
    patch contributions would double-count instead of selecting.
    """
    claimed = np.zeros(base.shape[:2], dtype=np.int16)
    claimed_by: dict[int, BinaryMask] = {}
    out = base.copy()
    for patch, mask in patches:
        if patch.shape != base.shape:
            raise DimensionMismatchError(
                f"patch shape {patch.shape} != base shape {base.shape}"
            )
        if mask.shape != base.shape[:2]:
            raise DimensionMismatchError(
                f"mask shape {mask.shape} != base shape {base.shape[:2]}"
            )
        overlap = (claimed > 0) & (mask.data > 0)
        if overlap.any():
            coord = _first_coord(overlap)
            prior = claimed_by[claimed[coord]].class_id
            raise MaskError(
                f"masks for classes {prior} and {mask.class_id} overlap at {coord}"
            )
        token = len(claimed_by) + 1
        claimed[mask.data > 0] = token
        claimed_by[token] = mask
        out[mask.data > 0] = patch[mask.data > 0]
    return out


def union(masks: list[BinaryMask], shape: tuple[int, int] | None = None) -> BinaryMask:
    """Pointwise OR. `shape` is required when the list is empty."""
    if not masks:
        if shape is None:
            raise MaskError("union of no masks needs an explicit shape")
        return BinaryMask(np.zeros(shape, dtype=np.uint8))
    merged = np.zeros(masks[0].shape, dtype=np.uint8)
    for mask in masks:
        if mask.shape != masks[0].shape:
            raise DimensionMismatchError(
                f"mask shapes differ: {mask.shape} vs {masks[0].shape}"
            )
        merged |= mask.data
    return BinaryMask(merged)


def coverage(mask: BinaryMask) -> float:
    """Fraction of pixels set, in [0, 1]."""
    return float(mask.data.sum()) / mask.data.size
