"""Numpy implementations of the frame kernels (fallback when the compiled
extension is unavailable)."""

import numpy as np

CONTRAST_SCALE = 0.5
SHARPNESS_SCALE = 0.25


def _luminance(p):
    return (p[..., 0] + p[..., 1] + p[..., 2]) / 3.0


def box_blur(p):
    """3x3 box blur per channel with edge replication."""
    h, w = p.shape[:2]
    padded = np.pad(p, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = np.zeros_like(p)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy:dy + h, dx:dx + w]
    return acc / 9.0


def capture(latent, brightness, contrast, color, sharpness):
    p = np.array(latent, dtype=np.float64, copy=True)
    # a factor of exactly 1.0 skips the stage so default settings are an exact identity
    f = brightness / 50.0
    if f != 1.0:
        p = np.clip(f * p, 0.0, 1.0)
    f = contrast / 50.0
    if f != 1.0:
        mu = _luminance(p).mean()
        p = np.clip(mu + f * (p - mu), 0.0, 1.0)
    f = color / 50.0
    if f != 1.0:
        g = _luminance(p)[..., None]
        p = np.clip(g + f * (p - g), 0.0, 1.0)
    f = sharpness / 50.0
    if f != 1.0:
        b = box_blur(p)
        p = np.clip(b + f * (p - b), 0.0, 1.0)
    return p


def laplacian(lum):
    padded = np.pad(lum, 1, mode="edge")
    return (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
            - 4.0 * lum)


def measure(frame):
    p = np.asarray(frame, dtype=np.float64)
    lum = _luminance(p)
    brightness = float(lum.mean())
    contrast = min(float(lum.std()) / CONTRAST_SCALE, 1.0)
    color = float((p.max(axis=2) - p.min(axis=2)).mean())
    sharpness = min(float(np.abs(laplacian(lum)).mean()) / SHARPNESS_SCALE, 1.0)
    return (brightness, contrast, color, sharpness)
