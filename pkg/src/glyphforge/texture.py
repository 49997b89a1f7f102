"""Guided texture transfer.

Minimizes, over a nearest-neighbour field ``p -> q``, the sum over target
patches of

    Ea(p, q) + lambda1 * Ed(p, q) + lambda2 * Ep(q) + lambda3 * Es(p, q)

(appearance, distribution, repetition and saliency terms) by alternating
randomized patch matching and voting, coarse to fine.
"""
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _patchmatch as pm
from . import raster
from ._validation import check_image, check_mask, check_random_state
from .exceptions import OutOfBounds, UniformMask

GUIDANCE_WEIGHT = 2.0
DIST_RANGE = (0.5, 2.0)


@dataclass
class TextureConfig:
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.01
    sigma1: Optional[float] = None  # None -> mean stroke radius of the text
    patch: int = 9
    pyramid_levels: Optional[int] = None  # None -> top level long side ~ 64 px
    em_iters_per_level: int = 6
    pm_iters: int = 5
    rng_seed: int = 7
    top_size: int = 64

    def __post_init__(self):
        if self.patch < 5 or self.patch % 2 == 0:
            raise ValueError("patch must be odd and >= 5")
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.sigma1 is not None and self.sigma1 <= 0:
            raise ValueError("sigma1 must be > 0")

    @property
    def radius(self):
        return self.patch // 2


# ---------------------------------------------------------------------------
# Guidance maps
# ---------------------------------------------------------------------------

def mean_stroke_radius(mask):
    from .structure import skeletonize
    return skeletonize(mask).mean_stroke_radius


def truncated_distance(mask, radius):
    """Distance-to-boundary map with 1 on the boundary, > 1 inside, < 1 outside.

    The signed distance is divided by ``radius`` and the result clamped to
    [0.5, 2].  Uniform masks map to the clamp limit of their class.
    """
    mask = check_mask(mask)
    if mask.all():
        return np.full(mask.shape, DIST_RANGE[1])
    if not mask.any():
        return np.full(mask.shape, DIST_RANGE[0])
    d = raster.boundary_distance(mask)
    signed = np.where(mask, d, -d)
    return np.clip(1.0 + signed / radius, *DIST_RANGE)


def legibility_weight(mask, sigma):
    """Gaussian weight that is 0 on the text boundary and tends to 1 far away,
    rescaled so its maximum over the image is 1."""
    mask = check_mask(mask)
    if mask.all() or not mask.any():
        return np.ones(mask.shape)
    d = raster.boundary_distance(mask)
    w = 1.0 - np.exp(-d ** 2 / (2.0 * sigma ** 2))
    top = w.max()
    return w / top if top > 0 else w


@dataclass
class GuidancePack:
    """Per-level guidance: masks, truncated distance maps, saliency and weight."""
    text_hat: np.ndarray
    style_hat: np.ndarray
    dist_text: np.ndarray
    dist_style: np.ndarray
    sal_style: np.ndarray
    weight: np.ndarray
    text: np.ndarray

    @classmethod
    def build(cls, text_hat, style_hat, sal_style, text=None, text_radius=None,
              style_radius=None, sigma1=None):
        text_hat = check_mask(text_hat, "text_hat")
        style_hat = check_mask(style_hat, "style_hat")
        text = text_hat if text is None else check_mask(text, "text")
        if text_radius is None:
            text_radius = _safe_radius(text_hat)
        if style_radius is None:
            style_radius = _safe_radius(style_hat)
        sigma1 = _safe_radius(text) if sigma1 is None else sigma1
        return cls(text_hat=text_hat, style_hat=style_hat,
                   dist_text=truncated_distance(text_hat, text_radius),
                   dist_style=truncated_distance(style_hat, style_radius),
                   sal_style=np.asarray(sal_style, dtype=np.float64),
                   weight=legibility_weight(text, sigma1), text=text)


def _safe_radius(mask):
    if mask.all() or not mask.any():
        return 1.0
    return max(mean_stroke_radius(mask), 1.0)


# ---------------------------------------------------------------------------
# Nearest-neighbour field and per-level state
# ---------------------------------------------------------------------------

class NNField:
    """Correspondence field from target patch centres to source patch centres.

    ``nnf[y, x]`` holds the source centre for the target centre ``(y, x)``;
    only centres at least ``radius`` pixels from the border are meaningful.
    ``usage`` counts how many target centres map to each source centre and
    ``energy`` caches the per-patch energy without the repetition term.
    """

    def __init__(self, nnf, source_shape, radius):
        self.nnf = np.ascontiguousarray(nnf, dtype=np.int64)
        self.source_shape = tuple(source_shape[:2])
        self.radius = int(radius)
        self.energy = np.zeros(self.nnf.shape[:2])
        self.usage = self.recount()

    @property
    def target_shape(self):
        return self.nnf.shape[:2]

    @property
    def n_patches(self):
        h, w = self.target_shape
        return (h - 2 * self.radius) * (w - 2 * self.radius)

    def centres(self):
        r = self.radius
        h, w = self.target_shape
        return self.nnf[r:h - r, r:w - r].reshape(-1, 2)

    def recount(self):
        usage = np.zeros(self.source_shape, dtype=np.int64)
        q = self.centres()
        np.add.at(usage, (q[:, 0], q[:, 1]), 1)
        return usage

    def copy(self):
        out = NNField(self.nnf.copy(), self.source_shape, self.radius)
        out.energy = self.energy.copy()
        return out

    @classmethod
    def random(cls, target_shape, source_shape, radius, rng, valid=None,
               target_mask=None, source_mask=None):
        """Random field; with masks, each p draws q from its own mask class
        where possible."""
        rng = check_random_state(rng)
        h, w = target_shape[:2]
        hs, ws = source_shape[:2]
        r = radius
        if valid is None:
            valid = source_valid_mask(source_shape, r)
        pool = np.argwhere(valid)
        if len(pool) == 0:
            raise OutOfBounds("source has no valid patch centres")
        nnf = np.zeros((h, w, 2), dtype=np.int64)
        nnf[..., 0], nnf[..., 1] = r, r
        inner = (slice(r, h - r), slice(r, w - r))
        n = (h - 2 * r) * (w - 2 * r)
        if n <= 0:
            raise OutOfBounds("target is smaller than one patch")
        pick = pool[rng.integers(0, len(pool), n)]
        if target_mask is not None and source_mask is not None:
            tm = np.asarray(target_mask)[inner].ravel()
            for cls_val in (False, True):
                sub = pool[np.asarray(source_mask)[pool[:, 0], pool[:, 1]] == cls_val]
                sel = tm == cls_val
                if len(sub) and sel.any():
                    pick[sel] = sub[rng.integers(0, len(sub), sel.sum())]
        nnf[inner] = pick.reshape(h - 2 * r, w - 2 * r, 2)
        return cls(nnf, source_shape, r)


def source_valid_mask(source_shape, radius, exclude=None):
    """Boolean map of source centres whose patch lies inside the image and
    does not touch ``exclude``."""
    hs, ws = source_shape[:2]
    r = radius
    valid = np.zeros((hs, ws), bool)
    valid[r:hs - r, r:ws - r] = True
    if exclude is not None and np.any(exclude):
        from scipy import ndimage
        grown = ndimage.binary_dilation(exclude, np.ones((2 * r + 1, 2 * r + 1), bool))
        valid &= ~grown
    return valid


@dataclass
class LevelState:
    """Everything patch matching needs at one pyramid level.

    ``target`` and ``source`` are scaled-Lab images; ``target`` is the
    synthesized image and is updated in place by voting.
    """
    target: np.ndarray
    source: np.ndarray
    pack: GuidancePack
    valid: np.ndarray = None
    config: TextureConfig = field(default_factory=TextureConfig)

    def __post_init__(self):
        self.target = np.ascontiguousarray(self.target, dtype=np.float64)
        self.source = np.ascontiguousarray(self.source, dtype=np.float64)
        if self.valid is None:
            self.valid = source_valid_mask(self.source.shape, self.config.radius)
        p = self.pack
        self._arrays = (
            np.ascontiguousarray(p.text_hat, dtype=np.float64),
            np.ascontiguousarray(p.style_hat, dtype=np.float64),
            np.ascontiguousarray(p.dist_text, dtype=np.float64),
            np.ascontiguousarray(p.dist_style, dtype=np.float64),
            np.ascontiguousarray(p.weight, dtype=np.float64),
            np.ascontiguousarray(p.text, dtype=np.float64),
            np.ascontiguousarray(p.sal_style, dtype=np.float64),
        )

    def kernel_args(self):
        tm, sm, dt, ds, wgt, tind, sal = self._arrays
        return self.target, self.source, tm, sm, dt, ds, wgt, tind, sal


# ---------------------------------------------------------------------------
# Energy terms (scalar forms)
# ---------------------------------------------------------------------------

def _check_centre(p, shape, r, what):
    y, x = p
    if not (r <= y < shape[0] - r and r <= x < shape[1] - r):
        raise OutOfBounds(f"{what} centre {p} is closer than {r} px to the border")


def energy_appearance(p, q, target, source, pack, patch=9, mu=GUIDANCE_WEIGHT):
    """Mean squared Lab difference of the two patches plus ``mu`` times the
    mean squared difference of their guidance-mask patches."""
    r = patch // 2
    _check_centre(p, target.shape, r, "target")
    _check_centre(q, source.shape, r, "source")
    tm = np.asarray(pack.text_hat, dtype=np.float64)
    sm = np.asarray(pack.style_hat, dtype=np.float64)
    return float(pm.appearance(np.ascontiguousarray(target, dtype=np.float64),
                               np.ascontiguousarray(source, dtype=np.float64),
                               tm, sm, p[0], p[1], q[0], q[1], r, mu, np.inf))


def energy_distribution(p, q, pack):
    return float((pack.dist_text[p] - pack.dist_style[q]) ** 2)


def energy_repetitiveness(q, nnfield):
    """Share of target patches currently mapped onto source centre ``q``."""
    return float(nnfield.usage[q] / nnfield.n_patches)


def energy_saliency(p, q, pack, text=None):
    text = pack.text if text is None else text
    w = pack.weight[p]
    s = pack.sal_style[q]
    return float(w * (1.0 - s) if text[p] else w * s)


def total_energy(nnfield, state, config=None, terms=False):
    """Objective summed over every target patch (stride 1).

    With ``terms=True`` returns a dict with the unweighted per-term sums and
    the weighted ``total``.
    """
    cfg = state.config if config is None else config
    ea, ed, ep, es = pm.energy_terms(*state.kernel_args(), nnfield.nnf, nnfield.usage,
                                     nnfield.radius, GUIDANCE_WEIGHT)
    total = ea + cfg.lambda1 * ed + cfg.lambda2 * ep + cfg.lambda3 * es
    if terms:
        return {"appearance": ea, "distribution": ed, "repetition": ep,
                "saliency": es, "total": total}
    return total


def refresh(nnfield, state):
    cfg = state.config
    pm.refresh_energy(*state.kernel_args(), nnfield.nnf, nnfield.energy,
                      nnfield.radius, GUIDANCE_WEIGHT, cfg.lambda1, cfg.lambda3)


def pm_match(nnfield, state, iters=None, seed=0):
    """Improve ``nnfield`` in place against the current target; returns it.

    Each accepted move strictly lowers both the moved patch's energy and the
    global objective; usage counts are updated with every move.
    """
    cfg = state.config
    iters = cfg.pm_iters if iters is None else iters
    if iters <= 0:
        return nnfield
    refresh(nnfield, state)
    pm.patchmatch(*state.kernel_args(), state.valid, nnfield.nnf, nnfield.energy,
                  nnfield.usage, nnfield.radius, GUIDANCE_WEIGHT, cfg.lambda1,
                  cfg.lambda2, cfg.lambda3, int(iters), int(seed))
    return nnfield


def vote(nnfield, source, previous=None):
    """Each target pixel becomes the plain mean of all source pixels that the
    overlapping matched patches place on it."""
    source = np.ascontiguousarray(source, dtype=np.float64)
    squeeze = source.ndim == 2
    if squeeze:
        source = source[..., None]
    h, w = nnfield.target_shape
    prev = np.zeros((h, w, source.shape[2])) if previous is None else \
        np.ascontiguousarray(previous, dtype=np.float64).reshape(h, w, -1)
    out = pm.vote(source, nnfield.nnf, nnfield.radius, h, w, prev)
    return out[..., 0] if squeeze else out


def upsample_field(nnfield, target_shape, source_shape, valid):
    """Carry a coarse field to the next finer level (factor 2)."""
    r = nnfield.radius
    h, w = target_shape[:2]
    hs, ws = source_shape[:2]
    hc, wc = nnfield.target_shape
    yy, xx = np.mgrid[:h, :w]
    cy = np.clip(yy // 2, r, hc - r - 1)
    cx = np.clip(xx // 2, r, wc - r - 1)
    coarse = nnfield.nnf[cy, cx]
    qy = np.clip(2 * coarse[..., 0] + (yy - 2 * cy), r, hs - r - 1)
    qx = np.clip(2 * coarse[..., 1] + (xx - 2 * cx), r, ws - r - 1)
    nnf = np.stack([qy, qx], axis=-1)
    bad = ~valid[qy, qx]
    if bad.any():
        pool = np.argwhere(valid)
        # snap to the nearest valid centre in raster order, deterministic
        idx = np.searchsorted(pool[:, 0] * ws + pool[:, 1], qy[bad] * ws + qx[bad])
        nnf[bad] = pool[np.clip(idx, 0, len(pool) - 1)]
    return NNField(nnf, source_shape, r)


# ---------------------------------------------------------------------------
# Coarse-to-fine driver
# ---------------------------------------------------------------------------

@dataclass
class ContextFrame:
    """Fixed pixels (``mask``) copied from ``image`` after every voting step."""
    mask: np.ndarray
    image: np.ndarray


def _levels_for(shape, source_shape, cfg):
    if cfg.pyramid_levels is not None:
        levels = cfg.pyramid_levels
    else:
        levels = max(0, int(round(np.log2(max(shape[:2]) / float(cfg.top_size)))))
    need = max(cfg.patch + 2, raster.MIN_LEVEL_SIZE)
    while levels > 0:
        th, tw = shape[:2]
        sh, sw = source_shape[:2]
        for _ in range(levels):
            th, tw, sh, sw = -(-th // 2), -(-tw // 2), -(-sh // 2), -(-sw // 2)
        if min(th, tw, sh, sw) >= need:
            break
        levels -= 1
    return levels


def _pyr(x, levels):
    return raster.build_pyramid(x, levels)


def stylize(text_hat, style_hat, style, text=None, config=None, context=None,
            style_saliency=None, source_exclude=None, return_trace=False):
    """Synthesize the stylized text image (sRGB, same size as ``text_hat``).

    ``context`` fixes frame pixels after every vote; ``source_exclude`` marks
    style pixels that must never be copied (inpainting holes).
    """
    from .guidance import saliency as compute_saliency

    cfg = TextureConfig() if config is None else config
    text_hat = check_mask(text_hat, "text_hat")
    style_hat = check_mask(style_hat, "style_hat")
    text = text_hat if text is None else check_mask(text, "text")
    style = check_image(style, "style")
    if style.shape[:2] != style_hat.shape:
        raise ValueError("style and style_hat differ in size")
    if text.shape != text_hat.shape:
        raise ValueError("text and text_hat differ in size")
    r = cfg.radius
    if min(text_hat.shape) < cfg.patch or min(style.shape[:2]) < cfg.patch:
        raise OutOfBounds("images must be at least one patch in size")
    sal = compute_saliency(style) if style_saliency is None else np.asarray(style_saliency)

    levels = _levels_for(text_hat.shape, style.shape, cfg)
    rng = check_random_state(cfg.rng_seed)
    src_lab = raster.rgb_to_lab(style)
    text_r = _safe_radius(text_hat)
    style_r = _safe_radius(style_hat)
    text_sig = cfg.sigma1 if cfg.sigma1 is not None else _safe_radius(text)

    pyr = {
        "text_hat": _pyr(text_hat, levels), "style_hat": _pyr(style_hat, levels),
        "text": _pyr(text, levels), "source": _pyr(src_lab, levels), "sal": _pyr(sal, levels),
    }
    if source_exclude is not None:
        excl = np.asarray(source_exclude, dtype=np.float64)
        pyr["exclude"] = [e > 0 for e in _pyr(excl, levels)]
    if context is not None:
        ctx_lab = raster.rgb_to_lab(context.image)
        pyr["ctx"] = _pyr(ctx_lab, levels)
        pyr["ctx_mask"] = _pyr(check_mask(context.mask, "context mask"), levels)

    trace = []
    nnfield = None
    target = None
    for level in range(levels, -1, -1):
        scale = 2.0 ** level
        pack = GuidancePack.build(
            pyr["text_hat"][level], pyr["style_hat"][level], pyr["sal"][level],
            text=pyr["text"][level], text_radius=max(text_r / scale, 0.5),
            style_radius=max(style_r / scale, 0.5), sigma1=max(text_sig / scale, 0.5))
        source = pyr["source"][level]
        valid = source_valid_mask(source.shape, r,
                                  pyr["exclude"][level] if "exclude" in pyr else None)
        if not valid.any():
            raise OutOfBounds("no valid source patches remain after exclusion")
        tshape = pack.text_hat.shape
        if nnfield is None:
            nnfield = NNField.random(tshape, source.shape, r, rng, valid,
                                     pack.text_hat, pack.style_hat)
        else:
            nnfield = upsample_field(nnfield, tshape, source.shape, valid)
        target = vote(nnfield, source, np.zeros(tshape + (3,)))
        if context is not None:
            cm = pyr["ctx_mask"][level]
            target[cm] = pyr["ctx"][level][cm]
        state = LevelState(target, source, pack, valid, cfg)
        trace.append(dict(level=level, iteration=0,
                          **total_energy(nnfield, state, terms=True)))
        for it in range(cfg.em_iters_per_level):
            pm_match(nnfield, state, cfg.pm_iters, seed=int(rng.integers(2 ** 31 - 1)))
            state.target[...] = vote(nnfield, source, state.target)
            if context is not None:
                state.target[cm] = pyr["ctx"][level][cm]
            trace.append(dict(level=level, iteration=it + 1,
                              **total_energy(nnfield, state, terms=True)))
        target = state.target
    out = raster.lab_to_rgb(target)
    if context is not None:
        cm = check_mask(context.mask)
        out[cm] = check_image(context.image)[cm]
    if return_trace:
        return out, {"trace": trace, "field": nnfield, "levels": levels}
    return out


class TextureTransfer(BaseEstimator):
    """Estimator front-end for :func:`stylize`.

    ``fit(style, style_hat)`` stores the source texture and its guidance map;
    ``transform(text_hat, text=None)`` synthesizes the stylized text.
    """

    def __init__(self, lambda1=1.0, lambda2=0.5, lambda3=0.01, sigma1=None, patch=9,
                 pyramid_levels=None, em_iters_per_level=6, pm_iters=5, rng_seed=7):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.sigma1 = sigma1
        self.patch = patch
        self.pyramid_levels = pyramid_levels
        self.em_iters_per_level = em_iters_per_level
        self.pm_iters = pm_iters
        self.rng_seed = rng_seed

    def config(self):
        names = {f.name for f in fields(TextureConfig)}
        return TextureConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, X, y=None, style_saliency=None):
        """``X`` is the style image, ``y`` its (structure-adjusted) guidance mask."""
        from .guidance import saliency
        cfg = self.config()
        self.style_ = check_image(X, "style")
        if y is None:
            from .guidance import extract_guidance
            y = extract_guidance(self.style_)
        self.style_hat_ = check_mask(y, "style_hat")
        if self.style_hat_.shape != self.style_.shape[:2]:
            raise ValueError("style and guidance differ in size")
        self.style_saliency_ = saliency(self.style_) if style_saliency is None \
            else np.asarray(style_saliency, dtype=np.float64)
        self.config_ = cfg
        return self

    def transform(self, X, text=None, context=None):
        check_is_fitted(self, "style_")
        out, info = stylize(X, self.style_hat_, self.style_, text, self.config_,
                            context=context, style_saliency=self.style_saliency_,
                            return_trace=True)
        self.energy_trace_ = info["trace"]
        self.field_ = info["field"]
        return out
