"""Context-aware placement of the text inside the background image.

Four per-pixel cost maps (local variance, saliency, coherence with the
style, distance from the image centre) are summed into one map; the best
placement is the window with the lowest mean cost, found with box filters
for every candidate scale and rotation.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _patchmatch as pm
from . import raster
from ._validation import check_field, check_image, check_mask, check_random_state
from .exceptions import NoValidPlacement
from .guidance import saliency


@dataclass
class LayoutConfig:
    lambda4: float = 0.5
    scale_range: tuple = (0.8, 1.2, 0.1)
    rotation_range: tuple = (-np.pi / 6, np.pi / 6, np.pi / 60)
    enable_scale: bool = False
    enable_rotation: bool = False
    enable_multishape: bool = False
    local_patch: int = 15
    coherence_patch: int = 7
    coherence_iters: int = 4
    neighbourhood: int = 8
    max_passes: int = 20
    seed: int = 7

    def __post_init__(self):
        if not np.isfinite(self.lambda4) or self.lambda4 < 0:
            raise ValueError("lambda4 must be finite and >= 0")
        if self.local_patch < 1:
            raise ValueError("local_patch must be >= 1")
        for name in ("scale_range", "rotation_range"):
            lo, hi, step = getattr(self, name)
            if hi < lo or step <= 0:
                raise ValueError(f"{name} must be a nonempty (lo, hi, step) range")
        if self.scale_range[0] <= 0:
            raise ValueError("scales must be > 0")

    def scales(self):
        return _grid(*self.scale_range) if self.enable_scale else [1.0]

    def rotations(self):
        return _grid(*self.rotation_range) if self.enable_rotation else [0.0]


def _grid(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(n)]


@dataclass
class LayoutPlacement:
    """Placement of the text rectangle in the background.

    ``(x, y)`` is the top-left corner and ``(w, h)`` the size of the scaled,
    unrotated rectangle; ``rotation`` turns it about its centre.
    """
    x: float
    y: float
    w: int
    h: int
    scale: float = 1.0
    rotation: float = 0.0
    total_cost: float = 0.0
    per_shape: list = field(default_factory=list)
    anchor: tuple = (0, 0)  # top-left in the rotated search frame
    trace: list = field(default_factory=list)         # total cost after each pass
    offset_history: list = field(default_factory=list)  # (dy, dx) per shape after each pass

    @property
    def centre(self):
        return self.y + (self.h - 1) / 2.0, self.x + (self.w - 1) / 2.0

    def corners(self):
        """Rectangle corners (row, col) in background coordinates."""
        cy, cx = self.centre
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        out = []
        for dy, dx in ((-0.5, -0.5), (-0.5, 0.5), (0.5, 0.5), (0.5, -0.5)):
            u, v = dx * self.w, dy * self.h
            out.append((cy + s * u + c * v, cx + c * u - s * v))
        return np.array(out)

    def to_json(self):
        return {
            "x": float(self.x), "y": float(self.y), "w": int(self.w), "h": int(self.h),
            "scale": float(self.scale), "rotation_rad": float(self.rotation),
            "per_shape": [{"id": int(i), "dx": int(dx), "dy": int(dy)}
                          for i, dx, dy in self.per_shape],
            "total_cost": float(self.total_cost),
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls(x=data["x"], y=data["y"], w=int(data["w"]), h=int(data["h"]),
                   scale=data.get("scale", 1.0), rotation=data.get("rotation_rad", 0.0),
                   total_cost=data.get("total_cost", 0.0),
                   per_shape=[(s["id"], s["dx"], s["dy"]) for s in data.get("per_shape", [])],
                   anchor=(int(round(data["y"])), int(round(data["x"]))))


# ---------------------------------------------------------------------------
# Cost maps
# ---------------------------------------------------------------------------

def _normalize(u):
    lo, hi = float(u.min()), float(u.max())
    if hi - lo < 1e-12:
        return np.zeros_like(u)
    return (u - lo) / (hi - lo)


def local_variance(image, size=15):
    g = raster.luminance(check_image(image)) if np.ndim(image) == 3 else check_field(image)
    mean = ndimage.uniform_filter(g, size, mode="reflect")
    sq = ndimage.uniform_filter(g * g, size, mode="reflect")
    return np.maximum(sq - mean * mean, 0.0)


def cost_variance(image, local_patch=15):
    return _normalize(local_variance(image, local_patch))


def cost_saliency(image):
    return _normalize(saliency(image))


def coherence_distance(image, style, patch=7, iters=4, seed=7):
    """Per-pixel mean squared Lab difference between the patch around each
    pixel of ``image`` and its (approximate) best match in ``style``."""
    r = patch // 2
    tgt = np.pad(raster.rgb_to_lab(check_image(image)), ((r, r), (r, r), (0, 0)), mode="reflect")
    src = np.ascontiguousarray(raster.rgb_to_lab(check_image(style, "style")))
    hs, ws = src.shape[:2]
    if min(hs, ws) < patch:
        raise ValueError("style image is smaller than the coherence patch")
    rng = check_random_state(seed)
    h, w = tgt.shape[:2]
    nnf = np.empty((h, w, 2), np.int64)
    nnf[..., 0] = rng.integers(r, hs - r, (h, w))
    nnf[..., 1] = rng.integers(r, ws - r, (h, w))
    dist = np.zeros((h, w))
    pm.ssd_match(np.ascontiguousarray(tgt), src, nnf, dist, r, iters, int(rng.integers(2 ** 31 - 1)))
    return dist[r:h - r, r:w - r]


def cost_coherence(image, style, patch=7, iters=4, seed=7):
    return _normalize(coherence_distance(image, style, patch, iters, seed))


def cost_aesthetics(shape, sigma2=None):
    h, w = shape[:2]
    sigma2 = float(min(h, w)) if sigma2 is None else sigma2
    yy, xx = np.mgrid[:h, :w]
    d2 = (yy - (h - 1) / 2.0) ** 2 + (xx - (w - 1) / 2.0) ** 2
    return 1.0 - np.exp(-d2 / (2.0 * sigma2 ** 2))


def cost_maps(image, style, cfg=None):
    cfg = LayoutConfig() if cfg is None else cfg
    image = check_image(image)
    return {
        "variance": cost_variance(image, cfg.local_patch),
        "saliency": cost_saliency(image),
        "coherence": cost_coherence(image, style, cfg.coherence_patch, cfg.coherence_iters,
                                    cfg.seed),
        "aesthetics": cost_aesthetics(image.shape),
    }


def combine(maps, lambda4):
    return maps["variance"] + maps["saliency"] + maps["coherence"] + lambda4 * maps["aesthetics"]


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def rotate_field(U, angle):
    """Sample ``U`` on a frame turned by ``angle`` about the image centre.

    Returns the resampled map (bilinear) and a mask of samples that fell
    inside the image.
    """
    h, w = U.shape
    if angle == 0.0:
        return U, np.ones((h, w), bool)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[:h, :w].astype(np.float64)
    c, s = math.cos(angle), math.sin(angle)
    u, v = xx - cx, yy - cy
    sx = cx + c * u - s * v
    sy = cy + s * u + c * v
    eps = 1e-9
    valid = (sy >= -eps) & (sy <= h - 1 + eps) & (sx >= -eps) & (sx <= w - 1 + eps)
    out = ndimage.map_coordinates(U, [np.clip(sy, 0, h - 1), np.clip(sx, 0, w - 1)],
                                  order=1, mode="nearest")
    return out, valid


def _frame_to_image(anchor, h, w, angle, shape):
    """Centre of a frame window, mapped back to background coordinates."""
    H, W = shape
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    fy = anchor[0] + (h - 1) / 2.0
    fx = anchor[1] + (w - 1) / 2.0
    c, s = math.cos(angle), math.sin(angle)
    u, v = fx - cx, fy - cy
    return cy + s * u + c * v, cx + c * u - s * v


def _exact_window_sum(U, y, x, h, w):
    return math.fsum(U[y:y + h, x:x + w].ravel().tolist())


def _best_anchor(U, valid, h, w, rel_tol=1e-9):
    """Valid anchor with the smallest window mean, ties to the smallest (row, col)."""
    if h > U.shape[0] or w > U.shape[1]:
        return None
    sums = raster.box_sum(U, w, h)
    bad = raster.box_sum((~valid).astype(np.float64), w, h) > 0.5
    sums = np.where(bad, np.inf, sums)
    best = sums.min()
    if not np.isfinite(best):
        return None
    tol = rel_tol * max(abs(best), 1.0)
    cands = np.argwhere(sums <= best + tol)
    exact = [(_exact_window_sum(U, y, x, h, w), int(y), int(x)) for y, x in cands]
    total, y, x = min(exact)
    return total / float(h * w), (y, x)


def search_placement(U, text_shape, cfg=None):
    """Scan every enabled (scale, rotation) for the lowest mean-cost window."""
    cfg = LayoutConfig() if cfg is None else cfg
    U = check_field(U, "cost")
    th, tw = text_shape[:2]
    best = None
    for angle in cfg.rotations():
        frame, valid = rotate_field(U, angle)
        for scale in cfg.scales():
            h, w = max(1, int(round(th * scale))), max(1, int(round(tw * scale)))
            found = _best_anchor(frame, valid, h, w)
            if found is None:
                continue
            cost, anchor = found
            key = (cost, abs(angle), abs(scale - 1.0), anchor)
            if best is None or key < best[0]:
                best = (key, angle, scale, h, w, anchor)
    if best is None:
        raise NoValidPlacement(f"a {tw}x{th} text does not fit in a {U.shape[1]}x{U.shape[0]} image")
    (cost, _, _, anchor), angle, scale, h, w, anchor = best
    cy, cx = _frame_to_image(anchor, h, w, angle, U.shape)
    return LayoutPlacement(x=cx - (w - 1) / 2.0, y=cy - (h - 1) / 2.0, w=w, h=h, scale=scale,
                           rotation=angle, total_cost=cost, anchor=anchor)


def estimate_position(image, style, text_shape, cfg=None, maps=None):
    """Best placement of a ``text_shape`` rectangle in ``image``."""
    cfg = LayoutConfig() if cfg is None else cfg
    maps = cost_maps(image, style, cfg) if maps is None else maps
    return search_placement(combine(maps, cfg.lambda4), text_shape, cfg)


# ---------------------------------------------------------------------------
# Multi-shape refinement
# ---------------------------------------------------------------------------

@dataclass
class Shape:
    id: int
    box: tuple       # (row, col, h, w) relative to the text origin
    centroid: tuple  # (row, col) relative to the text origin


def split_shapes(text):
    """Connected components of the text, ordered left to right."""
    text = check_mask(text, "text")
    labels, n = ndimage.label(text, np.ones((3, 3), bool))
    shapes = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = np.nonzero(labels == k)
        shapes.append(Shape(k, (sl[0].start, sl[1].start, sl[0].stop - sl[0].start,
                                sl[1].stop - sl[1].start), (ys.mean(), xs.mean())))
    shapes.sort(key=lambda s: (s.box[1], s.box[0]))
    return [Shape(i, s.box, s.centroid) for i, s in enumerate(shapes)]


class _BoxCost:
    def __init__(self, U, valid):
        self.U = U
        self.ii = raster.integral_image(U)
        self.bad = raster.integral_image((~valid).astype(np.float64))
        self.h, self.w = U.shape

    def __call__(self, y, x, h, w):
        if y < 0 or x < 0 or y + h > self.h or x + w > self.w:
            return np.inf
        if _rect(self.bad, y, x, h, w) > 0.5:
            return np.inf
        return _rect(self.ii, y, x, h, w)


def _rect(ii, y, x, h, w):
    return ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x]


def _min_gaps_ok(cents, offsets, i, cand, floors):
    for j in (i - 1, i + 1):
        if 0 <= j < len(cents):
            a = (cents[i][0] + cand[0], cents[i][1] + cand[1])
            b = (cents[j][0] + offsets[j][0], cents[j][1] + offsets[j][1])
            if math.hypot(a[0] - b[0], a[1] - b[1]) < floors[min(i, j)] - 1e-9:
                return False
    return True


def refine_multishape(placement, shapes, U, cfg=None, valid=None):
    """Coordinate descent on per-shape offsets around ``placement``.

    Shapes are visited left to right; each takes the cheapest offset within
    +-``cfg.neighbourhood`` px of its start that keeps its centroid at least
    as far from its neighbours as it started.  Moves happen only on a strict
    cost decrease, so the total never rises.  Works in the placement's
    search frame (``U`` must be that frame).
    """
    cfg = LayoutConfig() if cfg is None else cfg
    U = check_field(U, "cost")
    valid = np.ones(U.shape, bool) if valid is None else valid
    cost = _BoxCost(U, valid)
    ay, ax = placement.anchor
    s = placement.scale
    boxes = [(int(round(b.box[0] * s)), int(round(b.box[1] * s)),
              max(1, int(round(b.box[2] * s))), max(1, int(round(b.box[3] * s)))) for b in shapes]
    cents = [(ay + b.centroid[0] * s, ax + b.centroid[1] * s) for b in shapes]
    floors = [math.dist(cents[i], cents[i + 1]) for i in range(len(cents) - 1)]
    offsets = [(0, 0)] * len(shapes)

    def shape_cost(i, off):
        by, bx, bh, bw = boxes[i]
        return cost(ay + by + off[0], ax + bx + off[1], bh, bw)

    current = [shape_cost(i, offsets[i]) for i in range(len(shapes))]
    trace = [math.fsum(current)]
    history = [list(offsets)]
    n = cfg.neighbourhood
    for _ in range(cfg.max_passes):
        moved = False
        for i in range(len(shapes)):
            best_off, best_c = offsets[i], current[i]
            for dy, dx in product(range(-n, n + 1), repeat=2):
                c = shape_cost(i, (dy, dx))
                if c < best_c and _min_gaps_ok(cents, offsets, i, (dy, dx), floors):
                    best_off, best_c = (dy, dx), c
            if best_off != offsets[i]:
                offsets[i], current[i] = best_off, best_c
                moved = True
        trace.append(math.fsum(current))
        history.append(list(offsets))
        if not moved:
            break
    out = LayoutPlacement(**{k: v for k, v in asdict(placement).items()
                             if k not in ("per_shape", "trace", "offset_history",
                                          "total_cost")})
    out.per_shape = [(shapes[i].id, offsets[i][1], offsets[i][0]) for i in range(len(shapes))]
    out.total_cost = trace[-1]
    out.trace = trace
    out.offset_history = history
    return out


def place(image, style, text, cfg=None, maps=None):
    """Full placement for a text mask, including multi-shape refinement."""
    cfg = LayoutConfig() if cfg is None else cfg
    text = check_mask(text, "text")
    maps = cost_maps(image, style, cfg) if maps is None else maps
    U = combine(maps, cfg.lambda4)
    placement = search_placement(U, text.shape, cfg)
    if cfg.enable_multishape:
        frame, valid = rotate_field(U, placement.rotation)
        placement = refine_multishape(placement, split_shapes(text), frame, cfg, valid)
    return placement


class LayoutEstimator(BaseEstimator):
    """``fit(background, style)`` builds the cost maps; ``predict(text)``
    returns the :class:`LayoutPlacement` for a text mask."""

    def __init__(self, lambda4=0.5, enable_scale=False, enable_rotation=False,
                 enable_multishape=False, local_patch=15, seed=7):
        self.lambda4 = lambda4
        self.enable_scale = enable_scale
        self.enable_rotation = enable_rotation
        self.enable_multishape = enable_multishape
        self.local_patch = local_patch
        self.seed = seed

    def config(self):
        return LayoutConfig(**self.get_params())

    def fit(self, X, y):
        """``X`` is the background image, ``y`` the style image."""
        self.config_ = self.config()
        self.maps_ = cost_maps(X, y, self.config_)
        self.cost_ = combine(self.maps_, self.config_.lambda4)
        return self

    def predict(self, X):
        check_is_fitted(self, "maps_")
        return place(None, None, X, self.config_, maps=self.maps_)
