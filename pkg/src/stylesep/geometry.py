"""Landmark coordinates, affine crop normalization, and Gaussian heatmap rendering.

Coordinate convention: x grows rightward, y grows downward, origin at the
center of the top-left pixel. All operations here are pure functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import InputError

DEFAULT_CROP_SIZE = 256
DEFAULT_HEATMAP_SIZE = 64
DEFAULT_HEATMAP_SIGMA = 1.5


@dataclass(frozen=True)
class LandmarkScheme:
    """A landmark count plus the index convention that goes with it."""

    name: str
    n_points: int


P68 = LandmarkScheme("P68", 68)
P98 = LandmarkScheme("P98", 98)
P29 = LandmarkScheme("P29", 29)
P19 = LandmarkScheme("P19", 19)

_NAMED_SCHEMES = {s.name: s for s in (P68, P98, P29, P19)}


def synth_scheme(n_points: int) -> LandmarkScheme:
    """Scheme for procedurally generated faces with an arbitrary point count."""
    if n_points <= 0:
        raise InputError(f"synthetic scheme needs a positive point count, got {n_points}")
    return LandmarkScheme(f"SYNTH{n_points}", n_points)


SYNTH10 = synth_scheme(10)


def scheme_from_name(name: str) -> LandmarkScheme:
    if name in _NAMED_SCHEMES:
        return _NAMED_SCHEMES[name]
    m = re.fullmatch(r"SYNTH(\d+)", name)
    if m:
        return synth_scheme(int(m.group(1)))
    raise InputError(f"unknown landmark scheme {name!r}")


def scheme_for_count(n_points: int) -> LandmarkScheme:
    """Map a point count to the conventional scheme (SYNTH otherwise)."""
    for s in _NAMED_SCHEMES.values():
        if s.n_points == n_points:
            return s
    return synth_scheme(n_points)


@dataclass(eq=False)
class LandmarkSet:
    """Ordered 2-D keypoints for one face, in image pixel coordinates."""

    points: np.ndarray
    scheme: LandmarkScheme

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError(f"landmarks must have shape (L, 2), got {pts.shape}")
        if pts.shape[0] != self.scheme.n_points:
            raise InputError(
                f"scheme {self.scheme.name} expects {self.scheme.n_points} points, got {pts.shape[0]}"
            )
        if not np.all(np.isfinite(pts)):
            raise InputError("landmark coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return self.scheme == other.scheme and np.array_equal(self.points, other.points)

    def copy(self) -> "LandmarkSet":
        return LandmarkSet(self.points.copy(), self.scheme)


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InputError(
                f"degenerate bounding box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping source pixel coordinates to target pixel coordinates."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise InputError(f"affine matrix must be 2x3, got {m.shape}")
        if abs(np.linalg.det(m[:, :2])) < 1e-12:
            raise InputError("affine transform is not invertible")
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "AffineTransform":
        a = self.matrix[:, :2]
        b = self.matrix[:, 2]
        a_inv = np.linalg.inv(a)
        return AffineTransform(np.hstack([a_inv, (-a_inv @ b)[:, None]]))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Transform equal to applying ``inner`` first, then ``self``."""
        a = self.matrix[:, :2] @ inner.matrix[:, :2]
        b = self.matrix[:, :2] @ inner.matrix[:, 2] + self.matrix[:, 2]
        return AffineTransform(np.hstack([a, b[:, None]]))


@dataclass(eq=False)
class HeatmapStack:
    """Per-landmark Gaussian response maps, one (H, W) channel per point."""

    maps: np.ndarray
    sigma: float = field(default=DEFAULT_HEATMAP_SIGMA)

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 3:
            raise InputError(f"heatmap stack must have shape (L, H, W), got {m.shape}")
        self.maps = m

    @property
    def n_channels(self) -> int:
        return self.maps.shape[0]


def apply_transform(landmarks: LandmarkSet, t: AffineTransform) -> LandmarkSet:
    """Map every landmark through ``t``; the scheme is preserved."""
    return LandmarkSet(t.apply_points(landmarks.points), landmarks.scheme)


def crop_transform(bbox: BoundingBox, size: int) -> AffineTransform:
    """Affine map sending ``bbox`` onto a size-by-size pixel frame."""
    sx = size / bbox.width
    sy = size / bbox.height
    return AffineTransform(
        np.array([[sx, 0.0, -sx * bbox.x_min], [0.0, sy, -sy * bbox.y_min]])
    )


def crop_and_resize(
    image: np.ndarray,
    bbox: BoundingBox,
    landmarks: LandmarkSet,
    size: int = DEFAULT_CROP_SIZE,
):
    """Crop ``bbox`` out of ``image``, resize to size x size, and map landmarks along.

    Returns (cropped image, mapped landmarks, transform). The transform takes
    original pixel coordinates into the crop frame.
    """
    if size <= 0:
        raise InputError(f"crop size must be positive, got {size}")
    h, w = image.shape[:2]
    if bbox.x_min >= w or bbox.x_max <= 0 or bbox.y_min >= h or bbox.y_max <= 0:
        raise InputError("bounding box does not intersect the image")
    t = crop_transform(bbox, size)
    warped = cv2.warpAffine(
        image, t.matrix, (size, size), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT
    )
    if warped.ndim == 2 and image.ndim == 3:
        warped = warped[:, :, None]
    return warped, apply_transform(landmarks, t), t


def render_heatmaps(
    landmarks: LandmarkSet,
    height: int = DEFAULT_HEATMAP_SIZE,
    width: int = DEFAULT_HEATMAP_SIZE,
    sigma: float = DEFAULT_HEATMAP_SIGMA,
) -> HeatmapStack:
    """Render one Gaussian channel per landmark, sampled at pixel centers.

    The channel value at pixel (u, v) is exp(-((u-x)^2 + (v-y)^2) / (2 sigma^2));
    the landmark's rounded pixel is clamped to exactly 1.0 so the argmax always
    sits there. Landmarks outside the frame give an all-zero channel.
    """
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    if height <= 0 or width <= 0:
        raise InputError(f"heatmap shape must be positive, got {height}x{width}")
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    inv_two_s2 = 1.0 / (2.0 * sigma * sigma)
    maps = np.zeros((len(landmarks), height, width), dtype=np.float64)
    for i, (x, y) in enumerate(landmarks.points):
        px = int(np.floor(x + 0.5))
        py = int(np.floor(y + 0.5))
        if not (0 <= px < width and 0 <= py < height):
            continue
        gx = np.exp(-((xs - x) ** 2) * inv_two_s2)
        gy = np.exp(-((ys - y) ** 2) * inv_two_s2)
        chan = gy[:, None] * gx[None, :]
        chan[py, px] = 1.0
        maps[i] = chan
    return HeatmapStack(maps, sigma)
