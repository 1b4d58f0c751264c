"""Dataset generation and ingestion.

Three sources: a synthetic super-resolution regression task (downscale
images with a fixed 4-tap kernel, add noise, learn to invert), IDX-format
image/label files, and Gaussian class blobs as a fully synthetic
classification fallback.  Every generator is a pure function of its
configuration and seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

__all__ = [
    "RegressionPairSet",
    "LabeledImageSet",
    "gen_superres",
    "gen_smooth_images",
    "load_idx",
    "gen_synthetic_classes",
    "DOWNSCALE_TAPS",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# Catmull-Rom cubic evaluated at offsets (1.5, 0.5, 0.5, 1.5) from the
# sample point midway between two pixels; sums to 1 exactly.
DOWNSCALE_TAPS = np.array([-0.0625, 0.5625, 0.5625, -0.0625])


@dataclass
class RegressionPairSet:
    """Paired (low-res input, high-res target) images as flat row vectors."""

    X: np.ndarray  # (N, (side/2)^2) noisy low-res inputs
    Y: np.ndarray  # (N, side^2) high-res targets
    noise_sigma: float
    seed: int
    kernel: str = "catmull-rom-4tap"

    @property
    def n(self) -> int:
        return len(self.X)


@dataclass
class LabeledImageSet:
    """Flattened images with integer labels and a normalization record."""

    images: np.ndarray  # (N, d), normalized
    labels: np.ndarray  # (N,), ints
    split: str = "train"
    mean: float | None = None
    normalized: bool = field(default=True)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError("image and label counts differ")

    @property
    def n(self) -> int:
        return len(self.images)

    def normalize(self, mean=None) -> "LabeledImageSet":
        """Scale raw pixels to [0,1] and subtract the mean, exactly once."""
        if self.normalized:
            raise DataFormatError(
                f"{self.split} split is already normalized"
            )
        scaled = self.images.astype(float) / 255.0
        mean = float(scaled.mean()) if mean is None else mean
        return LabeledImageSet(
            images=scaled - mean, labels=self.labels, split=self.split,
            mean=mean, normalized=True,
        )


def _downscale_operator(side: int) -> np.ndarray:
    """1-D factor-2 downscaling matrix (side/2, side), edge-replicated."""
    half = side // 2
    op = np.zeros((half, side))
    for j in range(half):
        idx = np.clip([2 * j - 1, 2 * j, 2 * j + 1, 2 * j + 2], 0, side - 1)
        for i, wgt in zip(idx, DOWNSCALE_TAPS):
            op[j, i] += wgt
    return op


def gen_superres(images, noise_sigma, seed) -> RegressionPairSet:
    """Build regression pairs: low-res = downscale(high-res) + noise.

    ``images`` is (N, side, side) or (N, side*side) with even square side.
    The downscaling applies DOWNSCALE_TAPS separably; noise is i.i.d.
    Gaussian on the low-res pixels only.
    """
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        side = int(round(np.sqrt(images.shape[1])))
        if side * side != images.shape[1]:
            raise ValueError("flattened images must be square")
        images = images.reshape(len(images), side, side)
    if images.ndim != 3 or images.shape[1] != images.shape[2]:
        raise ValueError("images must be square")
    side = images.shape[1]
    if side % 2 != 0:
        raise ValueError("image side must be even")
    op = _downscale_operator(side)
    low = np.einsum("ij,njk,lk->nil", op, images, op)
    rng = np.random.default_rng(seed)
    x = low.reshape(len(images), -1)
    if noise_sigma > 0:
        x = x + noise_sigma * rng.standard_normal(x.shape)
    return RegressionPairSet(
        X=x, Y=images.reshape(len(images), -1), noise_sigma=noise_sigma, seed=seed
    )


def gen_smooth_images(n, side, seed, smoothness=2.0) -> np.ndarray:
    """Random smooth test images in [0, 1]: low-pass filtered Gaussian noise.

    Stands in for natural images when none are supplied to the
    super-resolution generator.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, side, side))
    radius = max(1, int(round(3 * smoothness)))
    t = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (t / smoothness) ** 2)
    kernel /= kernel.sum()
    # Separable smoothing along both image axes.
    smooth = np.apply_along_axis(
        lambda r: np.convolve(np.pad(r, radius, mode="edge"), kernel, "valid"),
        1,
        raw.reshape(n * side, side),
    ).reshape(n, side, side)
    smooth = np.apply_along_axis(
        lambda r: np.convolve(np.pad(r, radius, mode="edge"), kernel, "valid"),
        1,
        smooth.transpose(0, 2, 1).reshape(n * side, side),
    ).reshape(n, side, side).transpose(0, 2, 1)
    lo = smooth.min(axis=(1, 2), keepdims=True)
    hi = smooth.max(axis=(1, 2), keepdims=True)
    return (smooth - lo) / np.maximum(hi - lo, 1e-12)


def _read_be_u32(f, path, what):
    data = f.read(4)
    if len(data) != 4:
        raise DataFormatError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", data)[0]


def load_idx(path_images, path_labels, split="train", mean=None) -> LabeledImageSet:
    """Parse IDX image/label files, scale pixels to [0,1], subtract the mean.

    ``mean`` pins the value subtracted (pass the training mean when loading
    a test split); by default the set's own scalar mean is used.
    """
    with open(path_images, "rb") as f:
        magic = _read_be_u32(f, path_images, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{path_images}: bad image magic 0x{magic:08x}"
            )
        count = _read_be_u32(f, path_images, "count")
        rows = _read_be_u32(f, path_images, "rows")
        cols = _read_be_u32(f, path_images, "cols")
        payload = f.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise DataFormatError(
            f"{path_images}: expected {expected} pixel bytes, got {len(payload)}"
        )
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    with open(path_labels, "rb") as f:
        magic = _read_be_u32(f, path_labels, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{path_labels}: bad label magic 0x{magic:08x}"
            )
        n_labels = _read_be_u32(f, path_labels, "count")
        label_payload = f.read()
    if len(label_payload) != n_labels:
        raise DataFormatError(
            f"{path_labels}: expected {n_labels} label bytes, got {len(label_payload)}"
        )
    if n_labels != count:
        raise DataFormatError(
            f"label count {n_labels} does not match image count {count}"
        )
    labels = np.frombuffer(label_payload, dtype=np.uint8).astype(np.int64)

    scaled = images.astype(float) / 255.0
    if mean is None:
        mean = float(scaled.mean())
    return LabeledImageSet(
        images=scaled - mean, labels=labels, split=split, mean=mean
    )


def gen_synthetic_classes(
    n_classes, d, n, seed, separation=3.0, split="train", means_seed=None
) -> LabeledImageSet:
    """Gaussian class blobs: unit-variance clouds around separated means.

    Class means are random directions scaled to norm ``separation``; labels
    are i.i.d. uniform, so counts fluctuate multinomially around n/classes.
    ``means_seed`` pins the class means independently of the sample draw so
    a train and a test set can share the same underlying distribution.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    means_rng = np.random.default_rng(seed if means_seed is None else means_seed)
    means = means_rng.standard_normal((n_classes, d))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    labels = rng.integers(0, n_classes, size=n)
    images = means[labels] + rng.standard_normal((n, d))
    return LabeledImageSet(
        images=images, labels=labels, split=split, mean=None
    )
