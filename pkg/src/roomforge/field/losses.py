"""Regularization losses applied during field training.

These are the reference (single-batch, array-in/scalar-out) forms; the
trainer evaluates the same quantities through its fused gradient engine.
"""

from __future__ import annotations

import warnings

import numpy as np

from .grid import VoxelField, density_normals


def sparsity_loss(sigmas: np.ndarray, eps_d: float = 1e-2) -> float:
    """mean(log(sigma + eps_d)) over the batch samples.

    Pushes free-space density toward zero; eps_d keeps the minimizer finite
    (the floor value is log(eps_d)).
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.size == 0:
        raise ValueError("sparsity loss over an empty batch")
    if np.any(sigmas < 0):
        raise ValueError("densities must be >= 0")
    return float(np.mean(np.log(sigmas + eps_d)))


def orientation_loss(
    weights: np.ndarray,
    normals: np.ndarray,
    view_dir: np.ndarray,
    defined: np.ndarray | None = None,
) -> float:
    """sum_i w_i * max(0, n_i . d)^2 over samples with defined normals.

    Penalizes normals that face away from the camera on visible samples.
    """
    weights = np.asarray(weights, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    d = np.asarray(view_dir, dtype=np.float64)
    dots = normals @ d
    if defined is None:
        defined = np.linalg.norm(normals, axis=-1) > 0.5
    m = np.maximum(0.0, dots)
    return float(np.sum(weights[defined] * m[defined] ** 2))


def smoothness_loss(
    field: VoxelField,
    points: np.ndarray,
    jitter: float | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """mean ||n(p) - n(p + u)||^2 with u uniform in a jitter-radius ball.

    Pairs where either normal is undefined are skipped; returns 0 when all
    pairs are skipped.
    """
    if jitter is None:
        jitter = 0.01 * float(np.max(field.bounds.extent))
    if jitter <= 0:
        raise ValueError("jitter must be > 0")
    if rng is None:
        rng = np.random.default_rng(0)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u = rng.normal(size=pts.shape)
    u /= np.maximum(np.linalg.norm(u, axis=-1, keepdims=True), 1e-12)
    u *= jitter * np.cbrt(rng.random((pts.shape[0], 1)))
    n1, ok1 = density_normals(field, pts)
    n2, ok2 = density_normals(field, pts + u)
    ok = ok1 & ok2
    if not ok.any():
        return 0.0
    return float(np.mean(np.sum((n1[ok] - n2[ok]) ** 2, axis=-1)))


def normal_supervision_loss(
    rendered_normals: np.ndarray,
    supervision_normals: np.ndarray,
    mask: np.ndarray,
) -> float:
    """Cosine loss mean(1 - n . n_sup) over masked rays.

    Callers are expected to have excluded rays with opacity < 0.5 or an
    undefined composite normal from ``mask``.  An empty mask returns 0 with
    a warning.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        warnings.warn("normal supervision mask is empty; loss is 0", stacklevel=2)
        return 0.0
    n = np.asarray(rendered_normals, dtype=np.float64)[mask]
    s = np.asarray(supervision_normals, dtype=np.float64)[mask]
    return float(np.mean(1.0 - np.sum(n * s, axis=-1)))
