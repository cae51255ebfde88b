"""Structural guide rasters for the controllable generation backends.

Three producers:

* ``edges_from_image``  - classical edge detector (blur, Sobel gradients,
  non-maximum suppression, hysteresis) over the photo; a desk-scale stand-in
  for a model-based line-art extractor, which a worker can provide instead
  through the protocol's prior endpoint.
* ``prior_from_label``  - boundary outlines rendered from the label mask.
* ``blend``             - weighted combination of the two, with the image
  contribution scaled down by alpha so labeled-object structure dominates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DimensionMismatchError
from .raster import bilinear_resize, to_grayscale

PRIOR_SOURCES = ("image", "label", "blended")


@dataclass
class EdgeParams:
    low_threshold: float = 0.1
    high_threshold: float = 0.2
    blur_sigma: float = 1.4

    def __post_init__(self) -> None:
        if not (0.0 <= self.low_threshold < self.high_threshold <= 1.0):
            raise ConfigError(
                "edge thresholds must satisfy 0 <= low < high <= 1, got "
                f"low={self.low_threshold}, high={self.high_threshold}"
            )
        if self.blur_sigma < 0:
            raise ConfigError(f"blur_sigma must be >= 0, got {self.blur_sigma}")


@dataclass
class VisualPrior:
    """Single-channel guide raster with every value in [0, 1]."""

    data: np.ndarray
    source: str

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise DimensionMismatchError(f"prior must be 2-D, got shape {self.data.shape}")
        if self.source not in PRIOR_SOURCES:
            raise ConfigError(f"prior source must be one of {PRIOR_SOURCES}")
        lo, hi = float(self.data.min(initial=0.0)), float(self.data.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ConfigError(f"prior values outside [0, 1]: min={lo}, max={hi}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def _nonmax_suppress(mag: np.ndarray, angle_deg: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2), dtype=mag.dtype)
    padded[1:-1, 1:-1] = mag

    # neighbor pairs along the gradient direction, per 45-degree sector
    offsets = {
        0: ((0, 1), (0, -1)),
        1: ((1, 1), (-1, -1)),
        2: ((1, 0), (-1, 0)),
        3: ((1, -1), (-1, 1)),
    }
    sector = (((angle_deg % 180.0) + 22.5) // 45.0).astype(np.int64) % 4

    keep = np.zeros_like(mag, dtype=bool)
    for s, ((dy1, dx1), (dy2, dx2)) in offsets.items():
        n1 = padded[1 + dy1 : h + 1 + dy1, 1 + dx1 : w + 1 + dx1]
        n2 = padded[1 + dy2 : h + 1 + dy2, 1 + dx2 : w + 1 + dx2]
        keep |= (sector == s) & (mag >= n1) & (mag >= n2)
    return np.where(keep, mag, 0.0)


def edges_from_image(image: np.ndarray, params: EdgeParams | None = None) -> VisualPrior:
    """Edge-strength map of the photo, scaled to [0, 1].

    Gradient magnitudes are normalized by their maximum before thresholding,
    so thresholds are relative to the strongest edge in the image.
    """
    params = params or EdgeParams()
    gray = to_grayscale(image)
    if params.blur_sigma > 0:
        gray = ndimage.gaussian_filter(gray, sigma=params.blur_sigma)

    dy = ndimage.sobel(gray, axis=0)
    dx = ndimage.sobel(gray, axis=1)
    mag = np.hypot(dx, dy)
    peak = mag.max()
    if peak <= 0.0:
        return VisualPrior(np.zeros_like(gray), source="image")
    mag /= peak

    angle = np.degrees(np.arctan2(dy, dx))
    thinned = _nonmax_suppress(mag, angle)

    strong = thinned >= params.high_threshold
    weak = thinned >= params.low_threshold
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=np.int8))
    if count == 0:
        return VisualPrior(np.zeros_like(gray), source="image")
    keep_component = np.zeros(count + 1, dtype=bool)
    keep_component[np.unique(labels[strong])] = True
    keep_component[0] = False
    accepted = keep_component[labels]
    return VisualPrior(np.where(accepted, thinned, 0.0), source="image")


def prior_from_label(
    label: np.ndarray, boundary_width: int, void_id: int | None = None
) -> VisualPrior:
    """1.0 within boundary_width of any boundary between two non-void values.

    A pixel is marked when its (2w+1)-square neighborhood, clipped at the
    image border, contains two distinct non-void label values. Boundaries
    that involve only the void value never mark anything.
    """
    if boundary_width < 1:
        raise ConfigError(f"boundary_width must be >= 1, got {boundary_width}")
    values = [int(v) for v in np.unique(label) if void_id is None or int(v) != void_id]
    out = np.zeros(label.shape, dtype=np.float64)
    if len(values) < 2:
        return VisualPrior(out, source="label")
    size = 2 * boundary_width + 1
    seen = np.zeros(label.shape, dtype=np.int16)
    for v in values:
        near_v = ndimage.maximum_filter(
            (label == v).astype(np.uint8), size=size, mode="constant", cval=0
        )
        seen += near_v
    out[seen >= 2] = 1.0
    return VisualPrior(out, source="label")


def blend(vi: VisualPrior, vs: VisualPrior, alpha: float) -> VisualPrior:
    """Pointwise alpha * image-prior + label-prior, clamped at 1."""
    if vi.shape != vs.shape:
        raise DimensionMismatchError(f"prior shapes differ: {vi.shape} vs {vs.shape}")
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    mixed = np.minimum(1.0, alpha * vi.data + vs.data)
    return VisualPrior(mixed, source="blended")


def resize_prior(prior: VisualPrior, out_h: int, out_w: int) -> VisualPrior:
    """Bilinear resample; values re-clamped to [0, 1]; own dims is identity."""
    resized = bilinear_resize(prior.data, out_h, out_w)
    return VisualPrior(np.clip(resized, 0.0, 1.0), source=prior.source)
