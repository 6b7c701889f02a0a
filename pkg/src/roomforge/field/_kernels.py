"""Fused numba kernels for the training hot path.

Gather-style kernels (stencil build, weighted sums, Adam) are parallel: every
output element is written by exactly one thread, so results are bitwise
deterministic.  Scatter-style kernels (gradient accumulation) run single
threaded in a fixed order, which is the deterministic-reduction contract the
trainer documents.
"""

from __future__ import annotations

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

# Prefer the always-available fork-safe layer; avoids TBB version probing noise.
_numba_config.THREADING_LAYER = "omp"


@njit(parallel=True, cache=True)
def stencil_kernel(pts, lo0, lo1, lo2, hi0, hi1, hi2, c0, c1, c2, n):
    """Trilinear corner indices and weights; weights are zero outside bounds."""
    m = pts.shape[0]
    idx = np.empty((m, 8), np.int64)
    w = np.empty((m, 8), pts.dtype)
    for p in prange(m):
        px, py, pz = pts[p, 0], pts[p, 1], pts[p, 2]
        inside = (
            (px >= lo0) and (px <= hi0)
            and (py >= lo1) and (py <= hi1)
            and (pz >= lo2) and (pz <= hi2)
        )
        qx = (px - lo0) / c0 - 0.5
        qy = (py - lo1) / c1 - 0.5
        qz = (pz - lo2) / c2 - 0.5
        ix = int(np.floor(qx))
        iy = int(np.floor(qy))
        iz = int(np.floor(qz))
        if ix < 0:
            ix = 0
        elif ix > n - 2:
            ix = n - 2
        if iy < 0:
            iy = 0
        elif iy > n - 2:
            iy = n - 2
        if iz < 0:
            iz = 0
        elif iz > n - 2:
            iz = n - 2
        fx = qx - ix
        fy = qy - iy
        fz = qz - iz
        if fx < 0.0:
            fx = 0.0
        elif fx > 1.0:
            fx = 1.0
        if fy < 0.0:
            fy = 0.0
        elif fy > 1.0:
            fy = 1.0
        if fz < 0.0:
            fz = 0.0
        elif fz > 1.0:
            fz = 1.0
        scale = 1.0 if inside else 0.0
        base = (ix * n + iy) * n + iz
        corner = 0
        for dx in range(2):
            wx = (fx if dx == 1 else 1.0 - fx) * scale
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                for dz in range(2):
                    wz = fz if dz == 1 else 1.0 - fz
                    idx[p, corner] = base + (dx * n + dy) * n + dz
                    w[p, corner] = wx * wy * wz
                    corner += 1
    return idx, w


@njit(parallel=True, cache=True)
def gather_dot(idx, w, grid):
    """out[p] = sum_k w[p,k] * grid[idx[p,k]]"""
    m = idx.shape[0]
    out = np.empty(m, grid.dtype)
    for p in prange(m):
        acc = w[p, 0] * grid[idx[p, 0]]
        for k in range(1, 8):
            acc += w[p, k] * grid[idx[p, k]]
        out[p] = acc
    return out


@njit(cache=True)
def scatter_density(idx, w, dsig, dval, out):
    """out[j] += w[p,k] * dsig[j] * dval[p]; single-threaded fixed order."""
    for p in range(idx.shape[0]):
        dv = dval[p]
        if dv != 0.0:
            for k in range(8):
                j = idx[p, k]
                out[j] += w[p, k] * dsig[j] * dv
    return out


@njit(inline="always")
def _tri8(px, py, pz, lo0, lo1, lo2, hi0, hi1, hi2, c0, c1, c2, n):
    """Inline trilinear stencil: 8 flat indices + 8 weights (zero outside)."""
    inside = (
        (px >= lo0) and (px <= hi0)
        and (py >= lo1) and (py <= hi1)
        and (pz >= lo2) and (pz <= hi2)
    )
    qx = (px - lo0) / c0 - 0.5
    qy = (py - lo1) / c1 - 0.5
    qz = (pz - lo2) / c2 - 0.5
    ix = int(np.floor(qx))
    iy = int(np.floor(qy))
    iz = int(np.floor(qz))
    if ix < 0:
        ix = 0
    elif ix > n - 2:
        ix = n - 2
    if iy < 0:
        iy = 0
    elif iy > n - 2:
        iy = n - 2
    if iz < 0:
        iz = 0
    elif iz > n - 2:
        iz = n - 2
    fx = min(max(qx - ix, 0.0), 1.0)
    fy = min(max(qy - iy, 0.0), 1.0)
    fz = min(max(qz - iz, 0.0), 1.0)
    scale = 1.0 if inside else 0.0
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    j0 = (ix * n + iy) * n + iz
    nn = n * n
    return (
        j0, j0 + 1, j0 + n, j0 + n + 1,
        j0 + nn, j0 + nn + 1, j0 + nn + n, j0 + nn + n + 1,
        gx * gy * gz * scale, gx * gy * fz * scale,
        gx * fy * gz * scale, gx * fy * fz * scale,
        fx * gy * gz * scale, fx * gy * fz * scale,
        fx * fy * gz * scale, fx * fy * fz * scale,
    )


@njit(parallel=True, cache=True, fastmath=True)
def volume_forward(origins, dirs, t, delta, sig, col, valid, eps_d,
                   lo0, lo1, lo2, hi0, hi1, hi2, c0, c1, c2, n):
    """Per-ray fused pass: trilinear density + color, quadrature weights,
    white-background compositing, and the per-ray log-density sparsity sum.
    Stencils are recomputed inline; tnext[r, s] = T_{s+1} is kept for the
    backward pass."""
    r_count, s_count = t.shape
    sigma = np.empty((r_count, s_count), t.dtype)
    weight = np.empty((r_count, s_count), t.dtype)
    tnext = np.empty((r_count, s_count), t.dtype)
    csamp = np.empty((r_count, s_count, 3), t.dtype)
    pixel = np.empty((r_count, 3), t.dtype)
    wsum = np.empty(r_count, t.dtype)
    spar = np.zeros(r_count, np.float64)
    for r in prange(r_count):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        trans = 1.0
        acc0 = acc1 = acc2 = accw = 0.0
        sp = 0.0
        for s in range(s_count):
            ts = t[r, s]
            (j0, j1, j2, j3, j4, j5, j6, j7,
             w0, w1, w2, w3, w4, w5, w6, w7) = _tri8(
                ox + ts * dx, oy + ts * dy, oz + ts * dz,
                lo0, lo1, lo2, hi0, hi1, hi2, c0, c1, c2, n)
            sg = (w0 * sig[j0] + w1 * sig[j1] + w2 * sig[j2] + w3 * sig[j3]
                  + w4 * sig[j4] + w5 * sig[j5] + w6 * sig[j6] + w7 * sig[j7])
            cc0 = (w0 * col[j0, 0] + w1 * col[j1, 0] + w2 * col[j2, 0] + w3 * col[j3, 0]
                   + w4 * col[j4, 0] + w5 * col[j5, 0] + w6 * col[j6, 0] + w7 * col[j7, 0])
            cc1 = (w0 * col[j0, 1] + w1 * col[j1, 1] + w2 * col[j2, 1] + w3 * col[j3, 1]
                   + w4 * col[j4, 1] + w5 * col[j5, 1] + w6 * col[j6, 1] + w7 * col[j7, 1])
            cc2 = (w0 * col[j0, 2] + w1 * col[j1, 2] + w2 * col[j2, 2] + w3 * col[j3, 2]
                   + w4 * col[j4, 2] + w5 * col[j5, 2] + w6 * col[j6, 2] + w7 * col[j7, 2])
            x = sg * delta[r, s]
            a = -np.expm1(-x)
            wgt = trans * a
            trans = trans * (1.0 - a)
            sigma[r, s] = sg
            weight[r, s] = wgt
            tnext[r, s] = trans
            csamp[r, s, 0] = cc0
            csamp[r, s, 1] = cc1
            csamp[r, s, 2] = cc2
            accw += wgt
            acc0 += wgt * cc0
            acc1 += wgt * cc1
            acc2 += wgt * cc2
            sp += np.log(sg + eps_d)
        wsum[r] = accw
        pixel[r, 0] = acc0 + (1.0 - accw)
        pixel[r, 1] = acc1 + (1.0 - accw)
        pixel[r, 2] = acc2 + (1.0 - accw)
        if valid[r]:
            spar[r] = sp
    return sigma, weight, tnext, csamp, pixel, wsum, spar


@njit(parallel=True, cache=True, fastmath=True)
def volume_backward(origins, dirs, t, delta, sigma, weight, tnext, csamp,
                    dw_extra, dpix, sp_coef, eps_d, dsig_grid, col,
                    grad_d, grad_c,
                    lo0, lo1, lo2, hi0, hi1, hi2, c0, c1, c2, n, nthreads):
    """Fused backward for the base quadrature.

    Upstream weight gradient per sample is assembled inline:
        dL/dw_s = sum_ch dpix[r,ch] * (csamp[r,s,ch] - 1) + dw_extra[r,s]
    then routed through
        dL/dx_j = dL/dw_j * T_{j+1} - sum_{i>j} dL/dw_i w_i
    plus the sparsity term sp_coef[r] / (sigma + eps_d), and scattered to the
    raw grids through the trilinear stencil with softplus'/sigmoid'.

    Rays are chunked per thread; thread 0 writes the output grids directly,
    others use private partials merged in fixed order (deterministic).
    """
    r_count, s_count = t.shape
    n3 = grad_d.shape[0]
    npart = nthreads - 1
    pd = np.zeros((npart, n3), grad_d.dtype)
    pc = np.zeros((npart, n3, 3), grad_c.dtype)
    chunk = (r_count + nthreads - 1) // nthreads
    for ti in prange(nthreads):
        r0 = ti * chunk
        r1 = min(r_count, r0 + chunk)
        for r in range(r0, r1):
            ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
            dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
            dp0 = dpix[r, 0]
            dp1 = dpix[r, 1]
            dp2 = dpix[r, 2]
            spc = sp_coef[r]
            suffix = 0.0
            for s in range(s_count - 1, -1, -1):
                dw_rs = (dp0 * (csamp[r, s, 0] - 1.0)
                         + dp1 * (csamp[r, s, 1] - 1.0)
                         + dp2 * (csamp[r, s, 2] - 1.0)
                         + dw_extra[r, s])
                dxv = dw_rs * tnext[r, s] - suffix
                suffix += dw_rs * weight[r, s]
                dsig_tot = dxv * delta[r, s]
                if spc != 0.0:
                    dsig_tot += spc / (sigma[r, s] + eps_d)
                wgt = weight[r, s]
                # Weights below float32 rounding noise cannot contribute a
                # representable color gradient; skip their 24 scatter writes.
                do_color = wgt > 1e-12 and (dp0 != 0.0 or dp1 != 0.0 or dp2 != 0.0)
                if dsig_tot != 0.0 or do_color:
                    ts = t[r, s]
                    (j0, j1, j2, j3, j4, j5, j6, j7,
                     w0, w1, w2, w3, w4, w5, w6, w7) = _tri8(
                        ox + ts * dx, oy + ts * dy, oz + ts * dz,
                        lo0, lo1, lo2, hi0, hi1, hi2, c0, c1, c2, n)
                    if ti == 0:
                        grad_d[j0] += w0 * dsig_grid[j0] * dsig_tot
                        grad_d[j1] += w1 * dsig_grid[j1] * dsig_tot
                        grad_d[j2] += w2 * dsig_grid[j2] * dsig_tot
                        grad_d[j3] += w3 * dsig_grid[j3] * dsig_tot
                        grad_d[j4] += w4 * dsig_grid[j4] * dsig_tot
                        grad_d[j5] += w5 * dsig_grid[j5] * dsig_tot
                        grad_d[j6] += w6 * dsig_grid[j6] * dsig_tot
                        grad_d[j7] += w7 * dsig_grid[j7] * dsig_tot
                    else:
                        pd[ti - 1, j0] += w0 * dsig_grid[j0] * dsig_tot
                        pd[ti - 1, j1] += w1 * dsig_grid[j1] * dsig_tot
                        pd[ti - 1, j2] += w2 * dsig_grid[j2] * dsig_tot
                        pd[ti - 1, j3] += w3 * dsig_grid[j3] * dsig_tot
                        pd[ti - 1, j4] += w4 * dsig_grid[j4] * dsig_tot
                        pd[ti - 1, j5] += w5 * dsig_grid[j5] * dsig_tot
                        pd[ti - 1, j6] += w6 * dsig_grid[j6] * dsig_tot
                        pd[ti - 1, j7] += w7 * dsig_grid[j7] * dsig_tot
                    if do_color:
                        dc0 = wgt * dp0
                        dc1 = wgt * dp1
                        dc2 = wgt * dp2
                        for k in range(8):
                            if k == 0:
                                j = j0
                                wk = w0
                            elif k == 1:
                                j = j1
                                wk = w1
                            elif k == 2:
                                j = j2
                                wk = w2
                            elif k == 3:
                                j = j3
                                wk = w3
                            elif k == 4:
                                j = j4
                                wk = w4
                            elif k == 5:
                                j = j5
                                wk = w5
                            elif k == 6:
                                j = j6
                                wk = w6
                            else:
                                j = j7
                                wk = w7
                            cj0 = col[j, 0]
                            cj1 = col[j, 1]
                            cj2 = col[j, 2]
                            if ti == 0:
                                grad_c[j, 0] += wk * cj0 * (1.0 - cj0) * dc0
                                grad_c[j, 1] += wk * cj1 * (1.0 - cj1) * dc1
                                grad_c[j, 2] += wk * cj2 * (1.0 - cj2) * dc2
                            else:
                                pc[ti - 1, j, 0] += wk * cj0 * (1.0 - cj0) * dc0
                                pc[ti - 1, j, 1] += wk * cj1 * (1.0 - cj1) * dc1
                                pc[ti - 1, j, 2] += wk * cj2 * (1.0 - cj2) * dc2
    n_chunk = (n3 + nthreads - 1) // nthreads
    for ti in prange(nthreads):
        g0 = ti * n_chunk
        g1 = min(n3, g0 + n_chunk)
        for src in range(npart):
            for j in range(g0, g1):
                grad_d[j] += pd[src, j]
                grad_c[j, 0] += pc[src, j, 0]
                grad_c[j, 1] += pc[src, j, 1]
                grad_c[j, 2] += pc[src, j, 2]


@njit(parallel=True, cache=True)
def softplus_sigmoid(raw):
    """(softplus(raw), sigmoid(raw)) in one pass."""
    m = raw.size
    sp = np.empty(m, raw.dtype)
    sg = np.empty(m, raw.dtype)
    for i in prange(m):
        x = raw[i]
        if x > 0.0:
            e = np.exp(-x)
            sp[i] = x + np.log1p(e)
            sg[i] = 1.0 / (1.0 + e)
        else:
            e = np.exp(x)
            sp[i] = np.log1p(e)
            sg[i] = e / (1.0 + e)
    return sp, sg


@njit(parallel=True, cache=True)
def sigmoid_kernel(raw):
    m = raw.size
    out = np.empty(m, raw.dtype)
    for i in prange(m):
        x = raw[i]
        if x > 0.0:
            out[i] = 1.0 / (1.0 + np.exp(-x))
        else:
            e = np.exp(x)
            out[i] = e / (1.0 + e)
    return out


@njit(parallel=True, cache=True, fastmath=True)
def adam_update(p, g, mom, vel, step_scale, eps_scaled, b1, b2):
    """In-place Adam with bias correction folded into the caller-supplied
    scalars: step_scale = lr * sqrt(1 - b2^t) / (1 - b1^t) and
    eps_scaled = eps * sqrt(1 - b2^t), which is algebraically the standard
    update.  Parameters with zero gradient and zero moments are inert and
    skipped."""
    for i in prange(p.size):
        gi = g[i]
        if gi == 0.0 and mom[i] == 0.0 and vel[i] == 0.0:
            continue
        mi = b1 * mom[i] + (1.0 - b1) * gi
        vi = b2 * vel[i] + (1.0 - b2) * gi * gi
        mom[i] = mi
        vel[i] = vi
        p[i] -= step_scale * mi / (np.sqrt(vi) + eps_scaled)
