"""Windowed structural similarity between images."""

from __future__ import annotations

import numpy as np

C1 = 0.01**2
C2 = 0.03**2
WINDOW = 8
STRIDE = 4

GRAY = np.array([0.299, 0.587, 0.114])


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ GRAY
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over 8x8 windows at stride 4 on [0, 1]-range images.

    Images are converted to grayscale (0.299 R + 0.587 G + 0.114 B) first;
    images smaller than one window use a single whole-image window.
    """
    ga = _to_gray(a)
    gb = _to_gray(b)
    if ga.shape != gb.shape:
        raise ValueError(f"image dimensions differ: {ga.shape} vs {gb.shape}")
    h, w = ga.shape
    if h < WINDOW or w < WINDOW:
        windows = [(0, h, 0, w)]
    else:
        windows = [
            (r, r + WINDOW, c, c + WINDOW)
            for r in range(0, h - WINDOW + 1, STRIDE)
            for c in range(0, w - WINDOW + 1, STRIDE)
        ]
    vals = []
    for r0, r1, c0, c1 in windows:
        wa = ga[r0:r1, c0:c1]
        wb = gb[r0:r1, c0:c1]
        mu_a = wa.mean()
        mu_b = wb.mean()
        var_a = ((wa - mu_a) ** 2).mean()
        var_b = ((wb - mu_b) ** 2).mean()
        cov = ((wa - mu_a) * (wb - mu_b)).mean()
        num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
        den = (mu_a**2 + mu_b**2 + C1) * (var_a + var_b + C2)
        vals.append(num / den)
    return float(np.mean(vals))
