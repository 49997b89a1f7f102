"""Legibility-preserving structure transfer between binary shapes.

Forward pass: deform the stroke ends of the text mask toward the contour
style of the guidance mask while the stroke trunks stay fixed.  Backward
pass: deform the guidance mask toward the forward result.  Both passes run
a boundary-patch shape synthesis over a pyramid whose top level has a fixed
size, so the number of levels alone sets how strong the deformation gets.
"""
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize as _zhang_suen
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import raster
from ._validation import check_mask
from .exceptions import EmptyForeground, UniformMask

N_DIRECTIONS = 16
FEATHER = 2.0
_EIGHT = np.ones((3, 3), bool)


@dataclass
class StructureConfig:
    L: int = 7
    top_resolution: int = 64
    boundary_patch: int = 9
    lss_iterations: int = 5
    position_weight: float = 4.0
    completeness_weight: float = 2.0
    prior_weight: float = 0.0

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.top_resolution < 32:
            raise ValueError("top_resolution must be >= 32")
        if self.boundary_patch < 3 or self.boundary_patch % 2 == 0:
            raise ValueError("boundary_patch must be odd and >= 3")
        if self.lss_iterations < 1:
            raise ValueError("lss_iterations must be >= 1")


def level_scale(shape, level, cfg):
    """Scale of pyramid level ``level`` relative to full resolution.

    Levels are spaced geometrically between full resolution (level 0) and a
    top level whose long side is ``cfg.top_resolution``.
    """
    long_side = max(shape[:2])
    if cfg.L == 0 or long_side <= cfg.top_resolution:
        return 1.0
    return (cfg.top_resolution / float(long_side)) ** (level / float(cfg.L))


def level_shape(shape, level, cfg):
    s = level_scale(shape, level, cfg)
    return max(1, int(round(shape[0] * s))), max(1, int(round(shape[1] * s)))


def _to_level(mask, shape):
    if mask.shape == tuple(shape):
        return mask.copy()
    return raster.resample(mask, shape=shape)


# ---------------------------------------------------------------------------
# Skeleton and stroke-end masks
# ---------------------------------------------------------------------------

@dataclass
class Skeleton:
    pixels: np.ndarray           # bool skeleton map
    endpoints: np.ndarray        # (k, 2) row/col of skeletal pixels with one neighbour
    mean_stroke_radius: float
    components: np.ndarray       # connected-component labels of the mask (0 = ground)
    endpoint_component: np.ndarray
    cover_radius: dict           # component label -> radius reaching its whole bbox
    shape: tuple


def skeletonize(mask):
    """Zhang-Suen skeleton of ``mask`` with endpoints and mean stroke radius."""
    mask = check_mask(mask)
    if not mask.any():
        raise EmptyForeground("mask has no foreground pixels")
    skel = _zhang_suen(mask)
    neighbours = ndimage.convolve(skel.astype(np.int64), _EIGHT.astype(np.int64),
                                  mode="constant") - skel
    ends = skel & (neighbours == 1)
    if mask.all():
        radius = float(min(mask.shape)) / 2.0
    else:
        dist = raster.distance_transform(mask)
        radius = float(dist[skel].mean())
        # a skeleton piece shorter than its own stroke radius is the collapsed
        # centre of a round blob, not a stroke: its endpoints do not count
        pieces, _ = ndimage.label(skel, _EIGHT)
        for k, sl in enumerate(ndimage.find_objects(pieces), start=1):
            span = np.hypot(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start)
            if span < dist[pieces == k].mean():
                ends[pieces == k] = False
    ends = np.argwhere(ends)
    comps, n = ndimage.label(mask, _EIGHT)
    end_comp = comps[ends[:, 0], ends[:, 1]] if len(ends) else np.zeros(0, np.int64)
    cover = {}
    for c, sl in enumerate(ndimage.find_objects(comps), start=1):
        pts = ends[end_comp == c]
        if not len(pts):
            continue
        corners = np.array([[sl[0].start, sl[1].start], [sl[0].start, sl[1].stop - 1],
                            [sl[0].stop - 1, sl[1].start], [sl[0].stop - 1, sl[1].stop - 1]])
        far = np.sqrt(((pts[:, None, :] - corners[None]) ** 2).sum(-1)).max(1)
        cover[c] = float(far.min())
    return Skeleton(pixels=skel, endpoints=ends, mean_stroke_radius=radius,
                    components=comps, endpoint_component=end_comp, cover_radius=cover,
                    shape=mask.shape)


def end_radius(skel, component, level, cfg):
    """Stroke-end radius in full-resolution pixels: the mean stroke radius at
    the top level, growing linearly to the component's cover radius at 0."""
    r_top = skel.mean_stroke_radius
    if cfg.L == 0:
        return skel.cover_radius[component]
    r_bottom = max(skel.cover_radius[component], r_top)
    t = level / float(cfg.L)
    return r_bottom + (r_top - r_bottom) * t


def _cosine_ramp(d, r, width):
    out = np.zeros_like(d)
    out[d <= r] = 1.0
    ramp = (d > r) & (d < r + width)
    out[ramp] = 0.5 * (1.0 + np.cos(np.pi * (d[ramp] - r) / width))
    return out


def _level_grid(full, shape):
    h, w = shape
    ys = (np.arange(h) + 0.5) * full[0] / h - 0.5
    xs = (np.arange(w) + 0.5) * full[1] / w - 0.5
    return np.meshgrid(ys, xs, indexing="ij")


def _owners(skel, yy, xx):
    """Label of the component nearest to each (level) pixel."""
    comps = skel.components
    if (comps == 0).any():
        _, (iy, ix) = ndimage.distance_transform_edt(comps == 0, return_indices=True)
        comps = comps[iy, ix]
    ri = np.clip(np.rint(yy).astype(int), 0, comps.shape[0] - 1)
    ci = np.clip(np.rint(xx).astype(int), 0, comps.shape[1] - 1)
    return comps[ri, ci]


def stroke_end_mask(skel, level, cfg, shape=None):
    """Continuous stroke-end mask at ``level``.

    1 inside the disks around the skeleton endpoints, a cosine falloff over
    2 level pixels, 0 elsewhere.  Each pixel only sees the disks of the
    connected component nearest to it.  Returns an all-zero field when the
    skeleton has no endpoints.
    """
    full = skel.shape
    if shape is None:
        shape = level_shape(full, level, cfg)
    out = np.zeros(shape)
    if not len(skel.endpoints):
        return out
    s = level_scale(full, level, cfg)
    yy, xx = _level_grid(full, shape)
    owner = _owners(skel, yy, xx)
    for c in np.unique(skel.endpoint_component):
        region = owner == c
        if not region.any():
            continue
        pts = skel.endpoints[skel.endpoint_component == c]
        r = end_radius(skel, c, level, cfg) * s
        d = np.full(shape, np.inf)
        for py, px in pts:
            d = np.minimum(d, np.hypot(yy - py, xx - px) * s)
        out[region] = _cosine_ramp(d, r, FEATHER)[region]
    return out


def blend_mask(skel, level, cfg, shape=None):
    """The mask the forward pass blends with: stroke-end disks, plus the
    components without stroke ends, which are held fixed on the coarser
    half of the levels and left entirely free on the finer half."""
    full = skel.shape
    if shape is None:
        shape = level_shape(full, level, cfg)
    out = stroke_end_mask(skel, level, cfg, shape)
    closed = set(range(1, skel.components.max() + 1)) - set(np.unique(skel.endpoint_component))
    if closed and level <= cfg.L / 2.0:
        owner = _owners(skel, *_level_grid(full, shape))
        out[np.isin(owner, sorted(closed))] = 1.0
    return out


# ---------------------------------------------------------------------------
# Boundary-patch shape synthesis
# ---------------------------------------------------------------------------

def _contour(mask):
    return mask & ~ndimage.binary_erosion(mask, structure=np.ones((3, 3), bool),
                                          border_value=1)


def _frames(mask):
    """Contour pixels and their outward normals quantized to 16 directions."""
    pts = np.argwhere(_contour(mask))
    smooth = ndimage.gaussian_filter(mask.astype(np.float64), 1.5)
    gy = ndimage.sobel(smooth, 0)[pts[:, 0], pts[:, 1]]
    gx = ndimage.sobel(smooth, 1)[pts[:, 0], pts[:, 1]]
    ang = np.arctan2(-gy, -gx)
    step = 2 * np.pi / N_DIRECTIONS
    ang = np.round(ang / step) * step
    return pts, ang


def _offsets(patch, ang):
    """World offsets (k, P, 2) of canonical patch samples for angles ``ang``."""
    r = patch // 2
    v, u = np.mgrid[-r:r + 1, -r:r + 1]
    u, v = u.ravel().astype(np.float64), v.ravel().astype(np.float64)
    c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
    # u runs along the outward normal, v along the tangent
    dy = u * s + v * c
    dx = u * c - v * s
    off = np.stack([dy, dx], -1)
    return np.where(np.abs(off - np.rint(off)) < 1e-9, np.rint(off), off)


def _sample(field, pts, off):
    coords = pts[:, None, :] + off
    vals = ndimage.map_coordinates(field, [coords[..., 0].ravel(), coords[..., 1].ravel()],
                                   order=1, mode="nearest")
    return vals.reshape(coords.shape[:2])


def _features(field, pts, off, shape, weight):
    patches = _sample(field, pts, off)
    pos = pts / np.maximum(np.asarray(shape, np.float64) - 1.0, 1.0)
    return patches, np.hstack([patches, weight * pos])


def _nearest(a, b):
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.argmin(d, axis=1)


def lss_field(target, reference, cfg=None, iterations=None):
    """Boundary-patch synthesis of ``target`` in the style of ``reference``.

    Returns a continuous field whose 0.5-level set is the new shape.  Each
    iteration matches every target contour patch to its nearest reference
    patch (coherence) and every reference patch to its nearest target patch
    (completeness), in normal-aligned frames, then votes the patch residuals
    back onto the target.
    """
    cfg = StructureConfig() if cfg is None else cfg
    target = check_mask(target, "target")
    reference = check_mask(reference, "reference")
    for name, m in (("target", target), ("reference", reference)):
        if m.all() or not m.any():
            raise UniformMask(f"{name} mask is uniform")
    iterations = cfg.lss_iterations if iterations is None else iterations
    ref_pts, ref_ang = _frames(reference)
    ref_off = _offsets(cfg.boundary_patch, ref_ang)
    ref_patches, ref_feat = _features(reference.astype(np.float64), ref_pts, ref_off,
                                      reference.shape, cfg.position_weight)
    cur = target
    field = target.astype(np.float64)
    h, w = target.shape
    for it in range(iterations):
        if it:
            cur = field >= 0.5
            if cur.all() or not cur.any():
                break
        base = cur.astype(np.float64)
        pts, ang = _frames(cur)
        off = _offsets(cfg.boundary_patch, ang)
        own, feat = _features(base, pts, off, cur.shape, cfg.position_weight)
        votes = []
        coh = _nearest(feat, ref_feat)
        votes.append((pts, off, ref_patches[coh] - own, 1.0))
        comp = _nearest(ref_feat, feat)
        votes.append((pts[comp], off[comp], ref_patches - own[comp], cfg.completeness_weight))
        acc = np.zeros((h, w))
        cnt = np.zeros((h, w))
        for p, o, resid, wt in votes:
            loc = np.rint(p[:, None, :] + o).astype(np.int64)
            ok = (loc[..., 0] >= 0) & (loc[..., 0] < h) & (loc[..., 1] >= 0) & (loc[..., 1] < w)
            np.add.at(acc, (loc[ok][:, 0], loc[ok][:, 1]), wt * resid[ok])
            np.add.at(cnt, (loc[ok][:, 0], loc[ok][:, 1]), wt)
        cnt += cfg.prior_weight
        field = base.copy()
        hit = cnt > 0
        field[hit] = np.clip(base[hit] + acc[hit] / cnt[hit], 0.0, 1.0)
        _drop_detached(field, target)
    return field


def _drop_detached(field, target):
    """Undo islands and holes that votes create away from the input shape.

    A foreground piece that shares no pixel with ``target`` (or a background
    piece sharing none with its complement) is reset to its input value.
    """
    for side, ref in ((field >= 0.5, target), (field < 0.5, ~target)):
        labels, n = ndimage.label(side, _EIGHT)
        if n == 0:
            continue
        keep = np.zeros(n + 1, bool)
        keep[np.unique(labels[ref & side])] = True
        keep[0] = True
        stray = ~keep[labels]
        field[stray] = target[stray]


def lss_step(target, reference, cfg=None):
    """One pyramid level of shape synthesis, binarized."""
    return raster.binarize(lss_field(target, reference, cfg))


# ---------------------------------------------------------------------------
# Forward / backward transfer
# ---------------------------------------------------------------------------

def _safe_lss(target, reference, cfg):
    try:
        return lss_field(target, reference, cfg)
    except UniformMask:
        return target.astype(np.float64)


def forward_transfer(T, S, cfg=None, return_levels=False, masks=None):
    """Text mask with its stroke ends restyled after ``S`` (trunks untouched).

    ``masks`` may override the stroke-end masks (a list indexed by level,
    each a field or scalar); by default they come from :func:`stroke_end_mask`.
    """
    cfg = StructureConfig() if cfg is None else cfg
    T = check_mask(T, "T")
    S = check_mask(S, "S")
    for name, m in (("T", T), ("S", S)):
        if m.all() or not m.any():
            raise UniformMask(f"{name} is uniform")
    skel = skeletonize(T)
    prev = None
    levels = []
    for level in range(cfg.L, -1, -1):
        shape = level_shape(T.shape, level, cfg)
        s = level_scale(T.shape, level, cfg)
        T_l = _to_level(T, shape)
        S_l = _to_level(S, level_shape(S.shape, level, cfg)) if s != 1.0 else S.copy()
        if masks is None:
            M = blend_mask(skel, level, cfg, shape)
        else:
            M = np.broadcast_to(np.asarray(masks[level], np.float64), shape)
        start = T_l if prev is None else _to_level(prev, shape)
        if np.any(M > 0):
            synth = _safe_lss(start, S_l, cfg)
            blended = M * synth + (1.0 - M) * T_l
        else:
            blended = T_l.astype(np.float64)
        prev = raster.binarize(blended)
        levels.append({"level": level, "M": M, "T_hat": prev, "T": T_l})
    if return_levels:
        return prev, levels
    return prev


def backward_transfer(S, T_hat, cfg=None, return_levels=False):
    """Guidance mask restyled after the forward result ``T_hat`` (no trunk mask).

    Each level starts from the level's own downsampled ``S`` plus whatever
    the coarser levels changed, so ``T_hat == S`` is an exact fixed point.
    """
    cfg = StructureConfig() if cfg is None else cfg
    S = check_mask(S, "S")
    T_hat = check_mask(T_hat, "T_hat")
    for name, m in (("S", S), ("T_hat", T_hat)):
        if m.all() or not m.any():
            raise UniformMask(f"{name} is uniform")
    prev = prev_base = None
    levels = []
    for level in range(cfg.L, -1, -1):
        shape = level_shape(S.shape, level, cfg)
        S_l = _to_level(S, shape)
        ref = _to_level(T_hat, level_shape(T_hat.shape, level, cfg))
        if prev is None:
            start = S_l
        else:
            delta = _up_field(prev, shape) - _up_field(prev_base, shape)
            start = raster.binarize(np.clip(S_l + delta, 0.0, 1.0))
        out = raster.binarize(_safe_lss(start, ref, cfg))
        prev, prev_base = out, S_l
        levels.append({"level": level, "S_hat": out})
    if return_levels:
        return prev, levels
    return prev


def _up_field(mask, shape):
    if mask.shape == tuple(shape):
        return mask.astype(np.float64)
    return raster.resample(mask.astype(np.float64), shape=shape)


def structure_transfer(T, S, cfg=None):
    """Forward then backward transfer; returns ``(T_hat, S_hat)``."""
    cfg = StructureConfig() if cfg is None else cfg
    T_hat = forward_transfer(T, S, cfg)
    return T_hat, backward_transfer(S, T_hat, cfg)


class StructureTransfer(BaseEstimator):
    """Estimator front-end for bidirectional structure transfer.

    ``fit(T, S)`` computes and stores ``text_hat_`` and ``style_hat_``;
    ``transform(T)`` runs the forward pass for another text against the
    fitted guidance mask.
    """

    def __init__(self, L=7, top_resolution=64, boundary_patch=9, lss_iterations=5):
        self.L = L
        self.top_resolution = top_resolution
        self.boundary_patch = boundary_patch
        self.lss_iterations = lss_iterations

    def config(self):
        names = {f.name for f in fields(StructureConfig)}
        return StructureConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, X, y):
        cfg = self.config()
        self.guidance_ = check_mask(y, "S")
        self.text_hat_, levels = forward_transfer(X, self.guidance_, cfg, return_levels=True)
        self.stroke_masks_ = [lv["M"] for lv in levels]
        self.style_hat_ = backward_transfer(self.guidance_, self.text_hat_, cfg)
        self.config_ = cfg
        return self

    def transform(self, X):
        check_is_fitted(self, "guidance_")
        return forward_transfer(X, self.guidance_, self.config_)

    def fit_transform(self, X, y):
        return self.fit(X, y).text_hat_.copy()
