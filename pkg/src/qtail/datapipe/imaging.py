"""Image-style preprocessing and train-time augmentation.

Preprocessing: scale uint8 to [0,1], resize the shortest side to
``resize_to`` (bilinear), center-crop to ``crop_to``, then normalize each
channel with fixed statistics (the standard 3-channel natural-image
constants, or their grayscale reduction for single-channel inputs).

Augmentation: horizontal flip with p=0.5 and rotation uniform in +-15
degrees (bilinear resampling, edge padding). Decisions are drawn from a
stream derived from (seed, epoch, sample_id) only, so they are identical
across model choices; angle 0 and no-flip are exact identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
# Channel-averaged reductions for grayscale inputs.
GRAYSCALE_MEAN = (0.449,)
GRAYSCALE_STD = (0.226,)

MAX_ROTATION_DEG = 15.0


@dataclass(frozen=True)
class PrepConfig:
    resize_to: int = 72
    crop_to: int = 64
    mean: tuple | None = None
    std: tuple | None = None


def _stats_for(channels: int, config: PrepConfig):
    if config.mean is not None and config.std is not None:
        mean, std = config.mean, config.std
    elif channels == 3:
        mean, std = IMAGENET_MEAN, IMAGENET_STD
    elif channels == 1:
        mean, std = GRAYSCALE_MEAN, GRAYSCALE_STD
    else:
        raise ValueError(
            f"no default normalization stats for {channels}-channel images; "
            f"set PrepConfig.mean/std"
        )
    if len(mean) != channels or len(std) != channels:
        raise ValueError("normalization stats length != channel count")
    return np.asarray(mean), np.asarray(std)


def _bilinear_sample(img: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Sample (H,W,C) img at fractional coords; edge-clamped (replicate pad)."""
    h, w = img.shape[:2]
    y0 = np.floor(yy).astype(np.int64)
    x0 = np.floor(xx).astype(np.int64)
    dy = (yy - y0)[..., None]
    dx = (xx - x0)[..., None]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = img[y0c, x0c] * (1 - dx) + img[y0c, x1c] * dx
    bot = img[y1c, x0c] * (1 - dx) + img[y1c, x1c] * dx
    return top * (1 - dy) + bot * dy


def resize_shortest(img: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize so the shortest side equals ``target``; identity if it
    already does."""
    h, w = img.shape[:2]
    if min(h, w) == target:
        return img
    scale = target / min(h, w)
    out_h = target if h <= w else int(round(h * scale))
    out_w = target if w <= h else int(round(w * scale))
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _bilinear_sample(img, yy, xx)


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than {size}x{size} crop")
    top = (h - size) // 2
    left = (w - size) // 2
    return img[top : top + size, left : left + size]


def preprocess(payload: np.ndarray, config: PrepConfig = PrepConfig()) -> np.ndarray:
    """uint8 (H,W,C) image -> normalized float64 (crop,crop,C) tensor."""
    img = np.asarray(payload)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected (H,W,C) image payload, got shape {img.shape}")
    mean, std = _stats_for(img.shape[2], config)
    img = img.astype(np.float64) / 255.0
    img = resize_shortest(img, config.resize_to)
    img = center_crop(img, config.crop_to)
    return (img - mean) / std


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentDecision:
    flip: bool
    rotation_deg: float


def draw_augment_decision(stream: np.random.Generator) -> AugmentDecision:
    # Draw order is part of the reproducibility contract: flip first.
    flip = bool(stream.random() < 0.5)
    angle = float(stream.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    return AugmentDecision(flip=flip, rotation_deg=angle)


def rotate_bilinear(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center; bilinear resampling, edge padding."""
    if degrees == 0.0:
        return img
    theta = math.radians(degrees)
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys = np.arange(h) - cy
    xs = np.arange(w) - cx
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    c, s = math.cos(theta), math.sin(theta)
    src_y = c * yy - s * xx + cy
    src_x = s * yy + c * xx + cx
    return _bilinear_sample(img, src_y, src_x)


def apply_augment(tensor: np.ndarray, decision: AugmentDecision) -> np.ndarray:
    out = tensor
    if decision.flip:
        out = out[:, ::-1]
    return rotate_bilinear(out, decision.rotation_deg)


def augment(stream: np.random.Generator, tensor: np.ndarray) -> np.ndarray:
    """Draw a decision from the stream and apply it."""
    return apply_augment(tensor, draw_augment_decision(stream))
