"""Field training: photometric loss plus density sparsity, normal
orientation, normal smoothness, and supervision-normal cosine losses, with
hand-derived analytic gradients and an Adam-style update.

Gradient structure
------------------
All losses reduce to three kinds of dependencies on the raw grids:

1. per-sample density sigma(p) = sum_c w_c(p) softplus(D_c) (trilinear,
   corners c), so d sigma / d D_c = w_c * sigmoid(D_c);
2. per-sample color, same stencil with sigmoid activation;
3. quadrature weights w_i = T_i alpha_i with x_i = sigma_i delta_i:
       d w_i / d x_i = T_{i+1},   d w_i / d x_j = -w_i  (j < i)
   so for upstream dL/dw:  dL/dx_j = dL/dw_j * T_{j+1} - sum_{i>j} dL/dw_i w_i.

Normals are central differences of sigma at 6 stencil points, normalized and
negated; their backward pass routes through the same stencil evaluations.

Per step, the random batch (rays, stratified offsets, jitter), the
sample-selection masks (significant weight, defined normals, supervised
rays), and the trilinear stencils (pure geometry) are frozen into a step
context; the loss is then a smooth function of the raw parameters alone,
which is exactly what the finite-difference checks differentiate.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from ..geometry import camera_rays, ray_aabb_intersect
from ..oracle.dataset import Dataset
from ..oracle.render import depth_to_normals, perturb_supervision
from . import _kernels as K
from .grid import VoxelField

# Sample-selection thresholds (see module docstring: frozen per step).
WEIGHT_TAU = 1e-3          # rendering weight above which a sample gets a normal
MAX_NORMAL_SAMPLES = 65536
SMOOTH_POINTS = 2048
OPACITY_MIN = 0.5          # rays below this carry no meaningful surface normal
# Normal-loss backprop divides by |grad sigma|, so near-flat regions would
# amplify gradients without bound.  Normals participate in losses only where
# the density changes by at least GRAD_GATE_REL of its local magnitude per
# cell: surface shells (2-3 cells wide in trained fields) pass, proportional
# fog noise does not.
GRAD_GATE_REL = 0.25
GRAD_GATE_SIGMA_FLOOR = 0.05
GRAD_DEFINED_EVAL = 1e-8
# A ray's composite normal sum(w n) must be coherent to supervise (random fog
# normals cancel), and enough rays must qualify for the batch mean to be
# meaningful; both bound the 1/|N| and 1/Rsup gradient factors.
SUPERVISION_COMPOSITE_MIN = 0.3
SUPERVISION_MIN_RAYS = 16


@dataclass
class LossWeights:
    photo: float = 1.0
    sparsity: float = 1e-4
    orientation: float = 1e-2
    smoothness: float = 1e-3
    normal_supervision: float = 5e-2
    eps_d: float = 1e-2

    def __post_init__(self):
        for name in ("photo", "sparsity", "orientation", "smoothness", "normal_supervision"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


@dataclass
class LossReport:
    photo: float
    sparsity: float
    orientation: float
    smoothness: float
    normal_supervision: float
    total: float

    def as_dict(self) -> dict:
        return {
            "photo": self.photo,
            "sparsity": self.sparsity,
            "orientation": self.orientation,
            "smoothness": self.smoothness,
            "normal_supervision": self.normal_supervision,
            "total": self.total,
        }


@dataclass
class TrainConfig:
    steps: int = 2000
    rays_per_batch: int = 4096
    samples_per_ray: int = 128
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    seed: int = 0
    supervision_noise_deg: float = 0.0
    near: float = 0.1
    far: float = 10.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.steps < 0 or self.rays_per_batch < 1 or self.samples_per_ray < 1:
            raise ValueError("counts must be positive")
        if self.near >= self.far:
            raise ValueError("need near < far")


class DivergedError(RuntimeError):
    def __init__(self, report: LossReport):
        super().__init__(f"training diverged: total loss = {report.total}")
        self.report = report


class _Activations:
    """Activated grids for one parameter state; color is built lazily.

    During training these arrays are owned by the TrainState and refreshed
    in place after each Adam step so they always mirror the raw grids."""

    def __init__(self, field: VoxelField):
        self._field = field
        self.sig, self.dsig = K.softplus_sigmoid(field.raw_density.reshape(-1))
        self._col = None

    @property
    def col(self) -> np.ndarray:
        if self._col is None:
            flat = self._field.raw_color.reshape(-1)
            self._col = np.ascontiguousarray(K.sigmoid_kernel(flat).reshape(-1, 3))
        return self._col

    def refresh(self) -> None:
        """Recompute all activation grids from the raw parameters in place
        (vectorized; a couple of ulps from the kernel versions is fine)."""
        raw_d = self._field.raw_density.reshape(-1)
        np.exp(-np.abs(raw_d), out=self.dsig)          # dsig <- e^{-|x|}
        np.log1p(self.dsig, out=self.sig)
        self.sig += np.maximum(raw_d, 0.0)             # softplus, stable
        self.dsig += 1.0
        np.divide(1.0, self.dsig, out=self.dsig)       # 1 / (1 + e^{-|x|})
        neg = raw_d < 0
        self.dsig[neg] = 1.0 - self.dsig[neg]          # sigmoid for x < 0
        col = self.col.reshape(-1)
        with np.errstate(over="ignore"):
            np.exp(np.negative(self._field.raw_color.reshape(-1)), out=col)
        col += 1.0
        np.divide(1.0, col, out=col)


@dataclass
class _Stencil:
    """Trilinear gather pattern at a fixed point set: pure geometry."""

    idx: np.ndarray  # (M, 8) int64, flat grid indices
    w8: np.ndarray   # (M, 8) corner weights, zeroed outside bounds


def _make_stencil(field: VoxelField, pts: np.ndarray) -> _Stencil:
    lo = field.bounds.min
    hi = field.bounds.max
    cell = field.cell_size
    idx, w = K.stencil_kernel(
        np.ascontiguousarray(pts),
        lo[0], lo[1], lo[2], hi[0], hi[1], hi[2],
        cell[0], cell[1], cell[2], field.resolution,
    )
    return _Stencil(idx=idx, w8=w)


def _sigma_fwd(st: _Stencil, act: _Activations) -> np.ndarray:
    return K.gather_dot(st.idx, st.w8, act.sig)


def _sigma_bwd(st: _Stencil, act: _Activations, dsigma: np.ndarray, grad_d: np.ndarray) -> None:
    K.scatter_density(st.idx, st.w8, act.dsig, np.ascontiguousarray(dsigma), grad_d)


def _make_normal_stencils(field: VoxelField, pts: np.ndarray, h: float) -> list[_Stencil]:
    """Six stencils (+x, -x, +y, -y, +z, -z) for central-difference normals."""
    stencils = []
    for axis in range(3):
        step = np.zeros(3, dtype=pts.dtype)
        step[axis] = h
        stencils.append(_make_stencil(field, pts + step))
        stencils.append(_make_stencil(field, pts - step))
    return stencils


def _normals_fwd(stencils: list[_Stencil], act: _Activations, h: float):
    """Returns (n, mag, defined, sigma_bar); n is zero on undefined rows,
    sigma_bar is the mean density over the 6 stencil points."""
    m = stencils[0].idx.shape[0]
    g = np.empty((m, 3), dtype=stencils[0].w8.dtype)
    sbar = np.zeros(m, dtype=stencils[0].w8.dtype)
    for axis in range(3):
        sp = _sigma_fwd(stencils[2 * axis], act)
        sm = _sigma_fwd(stencils[2 * axis + 1], act)
        g[:, axis] = (sp - sm) / (2.0 * h)
        sbar += sp + sm
    sbar /= 6.0
    mag = np.linalg.norm(g, axis=-1)
    defined = mag >= GRAD_DEFINED_EVAL
    n = np.zeros_like(g)
    n[defined] = -g[defined] / mag[defined][:, None]
    return n, mag, defined, sbar


def _loss_gate(mag: np.ndarray, sbar: np.ndarray, cell_min: float) -> np.ndarray:
    """Scale-free surface test for normal-loss participation."""
    return mag >= GRAD_GATE_REL * (sbar + GRAD_GATE_SIGMA_FLOOR) / cell_min


def _normals_bwd(stencils: list[_Stencil], act: _Activations, n, mag, defined,
                 dn: np.ndarray, h: float, grad_d: np.ndarray) -> None:
    dg = np.zeros_like(dn)
    ok = defined
    ndot = np.sum(n[ok] * dn[ok], axis=-1)
    dg[ok] = (n[ok] * ndot[:, None] - dn[ok]) / mag[ok][:, None]
    for axis in range(3):
        d = dg[:, axis] / (2.0 * h)
        _sigma_bwd(stencils[2 * axis], act, d, grad_d)
        _sigma_bwd(stencils[2 * axis + 1], act, -d, grad_d)


@dataclass
class _TrainData:
    """Flattened per-pixel training arrays (origins, dirs, gt, supervision)."""

    origins: np.ndarray
    dirs: np.ndarray
    gt: np.ndarray
    sup: np.ndarray
    near: np.ndarray
    far: np.ndarray
    valid: np.ndarray


def _prepare(dataset: Dataset, config: TrainConfig, bounds) -> _TrainData:
    dtype = np.dtype(config.dtype)
    origins, dirs, gts, sups = [], [], [], []
    for vi, view in enumerate(dataset.views):
        rays = camera_rays(view.camera)
        sup = depth_to_normals(view)
        if config.supervision_noise_deg > 0:
            seed = int(np.random.SeedSequence((config.seed, 0xA15E, vi)).generate_state(1)[0])
            sup = perturb_supervision(sup, config.supervision_noise_deg, seed)
        origins.append(rays.origins.reshape(-1, 3))
        dirs.append(rays.directions.reshape(-1, 3))
        gts.append(np.asarray(view.rgb, dtype=np.float64).reshape(-1, 3))
        sups.append(sup.reshape(-1, 3))
    o = np.concatenate(origins)
    d = np.concatenate(dirs)
    hit, t0, t1 = ray_aabb_intersect(o, d, bounds)
    lo = np.maximum(t0, config.near)
    hi = np.minimum(t1, config.far)
    valid = hit & (lo < hi)
    lo[~valid] = 1.0
    hi[~valid] = 1.0
    return _TrainData(
        origins=o.astype(dtype),
        dirs=d.astype(dtype),
        gt=np.concatenate(gts).astype(dtype),
        sup=np.concatenate(sups).astype(dtype),
        near=lo.astype(dtype),
        far=hi.astype(dtype),
        valid=valid,
    )


@dataclass
class StepContext:
    """Everything random, mask-like, or geometric, frozen for one step."""

    origins: np.ndarray      # (R, 3)
    dirs: np.ndarray         # (R, 3)
    t: np.ndarray            # (R, S)
    delta: np.ndarray        # (R, S)
    gt: np.ndarray           # (R, 3)
    valid: np.ndarray        # (R,) ray intersects the field bounds
    n_valid_rays: int
    norm_flat: np.ndarray    # flat sample indices carrying normals
    norm_stencils: list      # 6 stencils at those points
    orient_sel: np.ndarray   # bool over norm_flat
    sup_sel: np.ndarray      # bool over norm_flat
    sup_ray_pos: np.ndarray  # position into sup arrays per normal sample (-1 = none)
    sup_ray_count: int
    sup_normals: np.ndarray  # (Rsup, 3)
    smooth_stencils_a: list  # 6 stencils at smoothness points
    smooth_stencils_b: list  # 6 stencils at jittered partners
    smooth_sel: np.ndarray
    n_smooth_pairs: int
    h_normal: float
    # Forward results at the build-time parameters; valid only while the raw
    # grids are unchanged (the trainer signals that by passing its act).
    fwd0: tuple | None = None
    norm0: tuple | None = None


def _grid_args(field: VoxelField) -> tuple:
    lo = field.bounds.min
    hi = field.bounds.max
    cell = field.cell_size
    return (
        float(lo[0]), float(lo[1]), float(lo[2]),
        float(hi[0]), float(hi[1]), float(hi[2]),
        float(cell[0]), float(cell[1]), float(cell[2]),
        field.resolution,
    )


def build_step_context(
    field: VoxelField,
    data: _TrainData,
    config: TrainConfig,
    step: int,
    act: _Activations | None = None,
    eps_d: float = 1e-2,
) -> tuple[StepContext, _Activations]:
    rng = np.random.default_rng((config.seed, step))
    dtype = field.dtype
    r, s = config.rays_per_batch, config.samples_per_ray
    sel = rng.integers(0, data.origins.shape[0], size=r)
    origins = data.origins[sel]
    dirs = data.dirs[sel]
    gt = data.gt[sel]
    sup = data.sup[sel]
    near = data.near[sel].astype(np.float64)
    far = data.far[sel].astype(np.float64)
    valid = data.valid[sel]
    u = rng.random((r, s))
    i = np.arange(s)
    t = (near[:, None] + (i[None, :] + u) * ((far - near) / s)[:, None]).astype(dtype)
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = far.astype(dtype) - t[:, -1]

    if act is None:
        act = _Activations(field)
    fwd0 = K.volume_forward(origins, dirs, t, delta, act.sig, act.col, valid, eps_d,
                            *_grid_args(field))
    weight = fwd0[1]
    pts = (origins[:, None, :] + t[..., None] * dirs[:, None, :]).reshape(-1, 3)

    # Normals are evaluated (and regularized) only on samples that both carry
    # rendering weight and lie on rays that already see a surface; normal
    # losses polish formed geometry rather than fight its formation.
    opacity = weight.sum(axis=1)
    ray_opaque = valid & (opacity >= OPACITY_MIN)
    flat_w = weight.reshape(-1)
    cand = np.nonzero((flat_w >= WEIGHT_TAU) & np.repeat(ray_opaque, s))[0]
    if cand.size > MAX_NORMAL_SAMPLES:
        order = np.argsort(-flat_w[cand], kind="stable")[:MAX_NORMAL_SAMPLES]
        cand = cand[order]
    norm_flat = np.sort(cand)

    # Half-voxel stencils: normals reflect cell-scale structure and keep the
    # 1 / (2 h |grad|) backward amplification bounded.
    h_normal = 0.5 * float(np.min(field.cell_size))
    jitter = 0.01 * float(np.max(field.bounds.extent))

    if norm_flat.size:
        norm_stencils = _make_normal_stencils(field, pts[norm_flat], h_normal)
        nrm, mag, ndef, sbar = _normals_fwd(norm_stencils, act, h_normal)
        norm0 = (nrm, mag, ndef)
        defined = _loss_gate(mag, sbar, float(np.min(field.cell_size)))
    else:
        norm_stencils = []
        nrm = np.zeros((0, 3), dtype=dtype)
        norm0 = None
        defined = np.zeros(0, dtype=bool)

    rows = norm_flat // s
    sup_norm = np.linalg.norm(sup, axis=-1)
    ray_ok = ray_opaque & (sup_norm > 0.5)
    sup_sel = defined & ray_ok[rows]

    sup_ray_pos = np.full(norm_flat.shape, -1, dtype=np.int64)
    sup_ray_ids = np.unique(rows[sup_sel]) if sup_sel.any() else np.zeros(0, dtype=np.int64)
    if sup_ray_ids.size:
        # Freeze out rays whose composite normal is near zero at build time.
        w_flat = flat_w[norm_flat]
        n_build = np.zeros((sup_ray_ids.size, 3))
        pos = np.searchsorted(sup_ray_ids, rows[sup_sel])
        np.add.at(n_build, pos, (w_flat[sup_sel, None] * nrm[sup_sel]).astype(np.float64))
        keep = np.linalg.norm(n_build, axis=-1) >= SUPERVISION_COMPOSITE_MIN
        sup_ray_ids = sup_ray_ids[keep]
        if sup_ray_ids.size < SUPERVISION_MIN_RAYS:
            sup_ray_ids = np.zeros(0, dtype=np.int64)
        if sup_ray_ids.size:
            sup_sel = np.isin(rows, sup_ray_ids) & sup_sel
            sup_ray_pos[sup_sel] = np.searchsorted(sup_ray_ids, rows[sup_sel])
        else:
            sup_sel = np.zeros_like(sup_sel)
    sup_normals = sup[sup_ray_ids].astype(np.float64)
    norms = np.linalg.norm(sup_normals, axis=-1, keepdims=True)
    sup_normals = (sup_normals / np.where(norms == 0, 1.0, norms)).astype(dtype)

    didx = np.nonzero(defined)[0]
    if didx.size:
        k = min(SMOOTH_POINTS, didx.size)
        chosen = rng.choice(didx, size=k, replace=False)
        smooth_p = pts[norm_flat[chosen]]
        off = rng.normal(size=(k, 3))
        off /= np.maximum(np.linalg.norm(off, axis=-1, keepdims=True), 1e-12)
        off *= jitter * np.cbrt(rng.random((k, 1)))
        smooth_u = off.astype(dtype)
        sten_a = _make_normal_stencils(field, smooth_p, h_normal)
        sten_b = _make_normal_stencils(field, smooth_p + smooth_u, h_normal)
        _, mag_b, _, sbar_b = _normals_fwd(sten_b, act, h_normal)
        smooth_sel = _loss_gate(mag_b, sbar_b, float(np.min(field.cell_size)))
    else:
        sten_a, sten_b = [], []
        smooth_sel = np.zeros(0, dtype=bool)

    ctx = StepContext(
        origins=origins,
        dirs=dirs,
        t=t,
        delta=delta,
        gt=gt,
        valid=valid,
        n_valid_rays=max(1, int(valid.sum())),
        norm_flat=norm_flat,
        norm_stencils=norm_stencils,
        orient_sel=defined.copy(),
        sup_sel=sup_sel,
        sup_ray_pos=sup_ray_pos,
        sup_ray_count=int(sup_ray_ids.size),
        sup_normals=sup_normals,
        smooth_stencils_a=sten_a,
        smooth_stencils_b=sten_b,
        smooth_sel=smooth_sel,
        n_smooth_pairs=max(1, int(smooth_sel.sum())),
        h_normal=h_normal,
        fwd0=fwd0,
        norm0=norm0,
    )
    return ctx, act


def loss_and_grads(
    field: VoxelField,
    ctx: StepContext,
    weights: LossWeights,
    act: _Activations | None = None,
) -> tuple[LossReport, np.ndarray, np.ndarray]:
    """Evaluate the total loss and its exact gradients w.r.t. both raw grids."""
    dtype = field.dtype
    r, s = ctx.t.shape
    m = r * s
    n3 = field.resolution**3
    # A caller-supplied act asserts the raw grids are unchanged since the
    # context was built, so the build-time forward results are reusable.
    fresh = act is None
    if fresh:
        act = _Activations(field)
    grid_args = _grid_args(field)
    if fresh or ctx.fwd0 is None:
        fwd = K.volume_forward(ctx.origins, ctx.dirs, ctx.t, ctx.delta,
                               act.sig, act.col, ctx.valid, weights.eps_d, *grid_args)
    else:
        fwd = ctx.fwd0
    sigma, weight, tnext, csamp, pixel, wsum, spar = fwd
    resid = pixel - ctx.gt
    photo = float(np.mean(resid.astype(np.float64) ** 2))

    vs = ctx.valid
    n_sp = int(vs.sum()) * s
    sparsity = float(spar.sum() / n_sp) if n_sp > 0 else 0.0

    # Normals at the significant samples.
    k = ctx.norm_flat.size
    w_flat = weight.reshape(-1)[ctx.norm_flat]
    if k:
        if fresh or ctx.norm0 is None:
            nrm, mag, ndef, _ = _normals_fwd(ctx.norm_stencils, act, ctx.h_normal)
        else:
            nrm, mag, ndef = ctx.norm0
        rows = ctx.norm_flat // s
        d_per = ctx.dirs[rows]
        dots = np.sum(nrm * d_per, axis=-1)
        mclip = np.maximum(0.0, dots)
        osel = ctx.orient_sel & ndef
        orient = float(np.sum(w_flat[osel] * mclip[osel] ** 2) / ctx.n_valid_rays)
    else:
        nrm = mag = ndef = None
        osel = np.zeros(0, dtype=bool)
        mclip = np.zeros(0, dtype=dtype)
        d_per = np.zeros((0, 3), dtype=dtype)
        orient = 0.0

    # Supervision composite per frozen ray.
    rsup = ctx.sup_ray_count
    if rsup and k:
        ssel = ctx.sup_sel & ndef
        ncomp = np.zeros((rsup, 3), dtype=np.float64)
        np.add.at(ncomp, ctx.sup_ray_pos[ssel], (w_flat[ssel, None] * nrm[ssel]).astype(np.float64))
        nmag = np.linalg.norm(ncomp, axis=-1)
        live = nmag >= 1e-12
        nbar = np.zeros_like(ncomp)
        nbar[live] = ncomp[live] / nmag[live][:, None]
        cosines = np.sum(nbar * ctx.sup_normals.astype(np.float64), axis=-1)
        normal_sup = float(np.mean(1.0 - np.where(live, cosines, 0.0)))
    else:
        ssel = np.zeros(k, dtype=bool)
        live = np.zeros(0, dtype=bool)
        nbar = np.zeros((0, 3))
        nmag = np.zeros(0)
        normal_sup = 0.0

    # Smoothness pairs.
    ks = ctx.smooth_sel.shape[0]
    if ks:
        n_a, mag_a, def_a, _ = _normals_fwd(ctx.smooth_stencils_a, act, ctx.h_normal)
        n_b, mag_b, def_b, _ = _normals_fwd(ctx.smooth_stencils_b, act, ctx.h_normal)
        pair_ok = ctx.smooth_sel & def_a & def_b
        diff = n_a - n_b
        smooth = float(np.sum(diff[pair_ok] ** 2) / ctx.n_smooth_pairs)
    else:
        pair_ok = np.zeros(0, dtype=bool)
        diff = np.zeros((0, 3), dtype=dtype)
        smooth = 0.0

    total = (
        weights.photo * photo
        + weights.sparsity * sparsity
        + weights.orientation * orient
        + weights.smoothness * smooth
        + weights.normal_supervision * normal_sup
    )
    report = LossReport(
        photo=photo,
        sparsity=sparsity,
        orientation=orient,
        smoothness=smooth,
        normal_supervision=normal_sup,
        total=total,
    )

    # ---------- backward ----------
    grad_d = np.zeros(n3, dtype=dtype)

    dw_extra = np.zeros((r, s), dtype=dtype)
    d_pixel = ((weights.photo * 2.0 / (r * 3)) * resid).astype(dtype)  # (R, 3)

    dn = np.zeros((k, 3), dtype=dtype) if k else None
    if k:
        if weights.orientation > 0:
            coef = weights.orientation / ctx.n_valid_rays
            dw_add = np.zeros(k, dtype=dtype)
            dw_add[osel] = (coef * mclip[osel] ** 2).astype(dtype)
            dn[osel] += ((coef * 2.0) * (w_flat[osel] * mclip[osel])[:, None] * d_per[osel]).astype(dtype)
            np.add.at(dw_extra.reshape(-1), ctx.norm_flat, dw_add)
        if weights.normal_supervision > 0 and rsup:
            dnbar = np.zeros((rsup, 3))
            dnbar[live] = (-weights.normal_supervision / rsup) * ctx.sup_normals.astype(np.float64)[live]
            dncomp = np.zeros((rsup, 3))
            proj = np.sum(nbar[live] * dnbar[live], axis=-1)
            dncomp[live] = (dnbar[live] - nbar[live] * proj[:, None]) / nmag[live][:, None]
            dn_s = dncomp[ctx.sup_ray_pos[ssel]]
            dw_add = np.zeros(k, dtype=dtype)
            dw_add[ssel] = np.sum(nrm[ssel] * dn_s, axis=-1).astype(dtype)
            dn[ssel] += (w_flat[ssel, None] * dn_s).astype(dtype)
            np.add.at(dw_extra.reshape(-1), ctx.norm_flat, dw_add)

    sp_coef = np.zeros(r, dtype=np.float64)
    if weights.sparsity > 0 and n_sp > 0:
        sp_coef[vs] = weights.sparsity / n_sp

    # Fused quadrature + stencil backward for the base samples (density and
    # color gradients in one pass).
    grad_c = np.zeros((n3, 3), dtype=dtype)
    K.volume_backward(
        ctx.origins, ctx.dirs, ctx.t, ctx.delta, sigma, weight, tnext, csamp,
        dw_extra, d_pixel, sp_coef, weights.eps_d, act.dsig, act.col,
        grad_d, grad_c, *grid_args, _num_threads(),
    )

    if k and dn is not None:
        _normals_bwd(ctx.norm_stencils, act, nrm, mag, ndef, dn, ctx.h_normal, grad_d)
    if ks and weights.smoothness > 0:
        dpair = np.zeros_like(diff)
        dpair[pair_ok] = ((weights.smoothness * 2.0 / ctx.n_smooth_pairs) * diff[pair_ok]).astype(dtype)
        _normals_bwd(ctx.smooth_stencils_a, act, n_a, mag_a, def_a, dpair, ctx.h_normal, grad_d)
        _normals_bwd(ctx.smooth_stencils_b, act, n_b, mag_b, def_b, -dpair, ctx.h_normal, grad_d)

    return report, grad_d.reshape(field.raw_density.shape), grad_c.reshape(field.raw_color.shape)


def _num_threads() -> int:
    import numba

    n = numba.get_num_threads()
    # On <= 2 cores the partial-buffer overhead cancels the parallel gain.
    return n if n > 2 else 1


@dataclass
class TrainState:
    field: VoxelField
    m_d: np.ndarray = None
    v_d: np.ndarray = None
    m_c: np.ndarray = None
    v_c: np.ndarray = None
    step_count: int = 0
    data: Optional[_TrainData] = dc_field(default=None, repr=False)
    act: Optional[_Activations] = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.m_d is None:
            self.m_d = np.zeros_like(self.field.raw_density)
            self.v_d = np.zeros_like(self.field.raw_density)
            self.m_c = np.zeros_like(self.field.raw_color)
            self.v_c = np.zeros_like(self.field.raw_color)


def train_step(
    state: TrainState,
    dataset: Dataset,
    weights: LossWeights,
    config: TrainConfig,
    step: int,
) -> LossReport:
    """One seeded batch: build context, evaluate loss + gradients, Adam update."""
    if state.data is None:
        state.data = _prepare(dataset, config, state.field.bounds)
    if state.act is None:
        state.act = _Activations(state.field)
        state.act.col  # materialize so the fused Adam kernel can refresh it
    ctx, act = build_step_context(state.field, state.data, config, step,
                                  act=state.act, eps_d=weights.eps_d)
    report, grad_d, grad_c = loss_and_grads(state.field, ctx, weights, act=act)
    if not np.isfinite(report.total):
        raise DivergedError(report)
    state.step_count += 1
    t = state.step_count
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.eps
    bc2_sqrt = math.sqrt(1.0 - b2**t)
    step_scale = lr * bc2_sqrt / (1.0 - b1**t)
    eps_scaled = eps * bc2_sqrt
    K.adam_update(
        state.field.raw_density.reshape(-1), grad_d.reshape(-1),
        state.m_d.reshape(-1), state.v_d.reshape(-1), step_scale, eps_scaled, b1, b2,
    )
    K.adam_update(
        state.field.raw_color.reshape(-1), grad_c.reshape(-1),
        state.m_c.reshape(-1), state.v_c.reshape(-1), step_scale, eps_scaled, b1, b2,
    )
    act.refresh()
    return report


def train(
    dataset: Dataset,
    weights: LossWeights,
    config: TrainConfig,
    field: VoxelField | None = None,
    resolution: int = 128,
) -> dict:
    """Run ``config.steps`` training steps; returns {"field", "trace"}.

    The trace records (step, LossReport) every 50 steps and at the final
    step.  Deterministic given config.seed.
    """
    if field is None:
        field = VoxelField(resolution=resolution)
    field = field.astype(np.dtype(config.dtype))
    state = TrainState(field=field)
    trace: list[tuple[int, LossReport]] = []
    for step in range(config.steps):
        report = train_step(state, dataset, weights, config, step)
        if step % 50 == 0 or step == config.steps - 1:
            trace.append((step, report))
    return {"field": state.field, "trace": trace}
