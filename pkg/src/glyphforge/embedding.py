"""Put the stylized shape into the background.

The synthesis canvas is the placement rectangle grown by a fixed margin;
the margin band (the context frame) holds background pixels that are
written back after every vote, so the synthesized texture has to agree
with its surroundings.  Inpainting reuses the same machinery with the
image acting as its own style.
"""
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import raster
from ._validation import check_image, check_mask
from .color import transfer_colors
from .exceptions import RegionTooLarge, UniformMask
from .guidance import extract_guidance
from .layout import LayoutConfig, place, rotate_field, split_shapes
from .structure import StructureConfig, forward_transfer, structure_transfer
from .texture import ContextFrame, TextureConfig, stylize

MARGIN = 32
MAX_REGION_FRACTION = 0.5


@contextmanager
def _timed(timings, stage):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        if timings is not None:
            timings[stage] = timings.get(stage, 0.0) + time.perf_counter() - t0


@dataclass
class Canvas:
    """Synthesis window in the placement frame.

    ``outer`` is ``(y0, y1, x0, x1)`` of the canvas, ``inner`` the same for
    the synthesized rectangle; both are frame coordinates.
    """
    outer: tuple
    inner: tuple

    @property
    def shape(self):
        y0, y1, x0, x1 = self.outer
        return y1 - y0, x1 - x0

    def inner_mask(self):
        m = np.zeros(self.shape, bool)
        y0, y1, x0, x1 = self.inner
        m[y0 - self.outer[0]:y1 - self.outer[0], x0 - self.outer[2]:x1 - self.outer[2]] = True
        return m


def make_canvas(inner, frame_shape, margin=MARGIN):
    """Grow ``inner`` by ``margin`` on every side, clipped to the frame."""
    y0, y1, x0, x1 = inner
    H, W = frame_shape[:2]
    return Canvas((max(0, y0 - margin), min(H, y1 + margin),
                   max(0, x0 - margin), min(W, x1 + margin)), inner)


def _rotate_image(image, angle):
    if angle == 0.0:
        return image
    return np.stack([rotate_field(image[..., c], angle)[0] for c in range(image.shape[2])], -1)


def _place_text(text, text_hat, placement):
    """Scale both masks to the placement size and apply per-shape offsets.

    Returns ``(T, T_hat, inner)`` where the masks cover ``inner`` (frame
    coordinates), the bounding box of the rectangle and all moved shapes.
    """
    h, w = placement.h, placement.w
    if (h, w) != text.shape:
        text = raster.resample(text, shape=(h, w))
        text_hat = raster.resample(text_hat, shape=(h, w))
    ay, ax = placement.anchor
    if not any(dx or dy for _, dx, dy in placement.per_shape):
        return text, text_hat, (ay, ay + h, ax, ax + w)

    offsets = {i: (dy, dx) for i, dx, dy in placement.per_shape}
    pad = max(max(abs(dy), abs(dx)) for dy, dx in offsets.values())
    labels, _ = ndimage.label(text, np.ones((3, 3), bool))
    # give every stylized-mask pixel the label of its nearest text component
    _, (iy, ix) = ndimage.distance_transform_edt(labels == 0, return_indices=True)
    owner = labels[iy, ix]
    order = {s.id: s for s in split_shapes(text)}
    # map split_shapes ids (left-to-right) back to ndimage labels
    id_for_label = {}
    for sid, s in order.items():
        by, bx = s.box[:2]
        sub = labels[by:by + s.box[2], bx:bx + s.box[3]]
        id_for_label[int(np.bincount(sub[sub > 0]).argmax())] = sid
    big_t = np.zeros((h + 2 * pad, w + 2 * pad), bool)
    big_h = np.zeros_like(big_t)
    for lab, sid in id_for_label.items():
        dy, dx = offsets.get(sid, (0, 0))
        ys, xs = np.nonzero(labels == lab)
        big_t[ys + pad + dy, xs + pad + dx] = True
        ys, xs = np.nonzero(text_hat & (owner == lab))
        big_h[ys + pad + dy, xs + pad + dx] = True
    return big_t, big_h, (ay - pad, ay + h + pad, ax - pad, ax + w + pad)


def _paste_rotated(background, canvas_out, canvas, angle):
    """Write the synthesized inner rectangle back into the background."""
    out = background.copy()
    H, W = background.shape[:2]
    y0, y1, x0, x1 = canvas.inner
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    yy, xx = np.mgrid[:H, :W].astype(np.float64)
    c, s = math.cos(angle), math.sin(angle)
    # inverse of the frame sampling in rotate_field
    u, v = xx - cx, yy - cy
    fx = cx + c * u + s * v
    fy = cy - s * u + c * v
    eps = 1e-9
    inside = (fy >= y0 - eps) & (fy <= y1 - 1 + eps) & (fx >= x0 - eps) & (fx <= x1 - 1 + eps)
    ly, lx = fy[inside] - canvas.outer[0], fx[inside] - canvas.outer[2]
    for ch in range(3):
        out[..., ch][inside] = ndimage.map_coordinates(canvas_out[..., ch], [ly, lx], order=1,
                                                       mode="nearest")
    return out


def compose(text, style, background, placement=None, layout_cfg=None, structure_cfg=None,
            texture_cfg=None, margin=MARGIN, seed=7, timings=None, return_details=False):
    """Stylize ``text`` with ``style`` and embed it seamlessly in ``background``.

    ``timings`` (a dict) receives per-stage wall-clock seconds.
    """
    text = check_mask(text, "text")
    style = check_image(style, "style")
    background = check_image(background, "background")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    layout_cfg = LayoutConfig(seed=seed) if layout_cfg is None else layout_cfg
    texture_cfg = TextureConfig(rng_seed=seed) if texture_cfg is None else texture_cfg

    with _timed(timings, "color"):
        style_adj = transfer_colors(style, background)
    with _timed(timings, "guidance"):
        style_mask = extract_guidance(style_adj, seed=seed)
    with _timed(timings, "structure"):
        text_hat, style_hat = structure_transfer(text, style_mask, structure_cfg)
    with _timed(timings, "position"):
        if placement is None:
            placement = place(background, style_adj, text, layout_cfg)

    with _timed(timings, "texture"):
        angle = placement.rotation
        frame = _rotate_image(background, angle)
        t, t_hat, inner = _place_text(text, text_hat, placement)
        canvas = make_canvas(inner, frame.shape, margin)
        oy0, oy1, ox0, ox1 = canvas.outer
        iy0, ix0 = inner[0] - oy0, inner[2] - ox0
        T = np.zeros(canvas.shape, bool)
        T_hat = np.zeros(canvas.shape, bool)
        T[iy0:iy0 + t.shape[0], ix0:ix0 + t.shape[1]] = t
        T_hat[iy0:iy0 + t.shape[0], ix0:ix0 + t.shape[1]] = t_hat
        crop = frame[oy0:oy1, ox0:ox1]
        fixed = ~canvas.inner_mask()
        context = ContextFrame(fixed, crop) if fixed.any() else None
        synth = stylize(T_hat, style_hat, style_adj, text=T, config=texture_cfg,
                        context=context)
        if angle == 0.0:
            out = background.copy()
            y0, y1, x0, x1 = inner
            out[y0:y1, x0:x1] = synth[iy0:iy0 + y1 - y0, ix0:ix0 + x1 - x0]
        else:
            out = _paste_rotated(background, synth, canvas, angle)

    if return_details:
        return out, {"placement": placement, "style_adjusted": style_adj,
                     "style_mask": style_mask, "text_hat": text_hat, "style_hat": style_hat,
                     "canvas": canvas, "synth": synth}
    return out


def context_frame(region, margin=MARGIN):
    """Pixels within ``margin`` of ``region`` but outside it."""
    region = check_mask(region, "region")
    if margin <= 0:
        return np.zeros_like(region)
    dist = ndimage.distance_transform_edt(~region)
    return (dist <= margin) & ~region


def inpaint(image, region, sketch=None, structure_cfg=None, texture_cfg=None,
            margin=MARGIN, seed=7, return_details=False):
    """Fill ``region`` of ``image`` using the image itself as the style.

    An optional binary ``sketch`` (same size as the image) marks where the
    texture foreground should appear inside the region.
    """
    image = check_image(image)
    region = check_mask(region, "region")
    if region.shape != image.shape[:2]:
        raise ValueError("region and image differ in size")
    if region.mean() > MAX_REGION_FRACTION:
        raise RegionTooLarge(f"region covers {region.mean():.0%} of the image")
    if not region.any():
        return (image.copy(), {}) if return_details else image.copy()
    texture_cfg = TextureConfig(rng_seed=seed) if texture_cfg is None else texture_cfg

    ys, xs = np.nonzero(region)
    H, W = region.shape
    y0, y1 = max(0, ys.min() - margin), min(H, ys.max() + 1 + margin)
    x0, x1 = max(0, xs.min() - margin), min(W, xs.max() + 1 + margin)
    hole = region[y0:y1, x0:x1]

    sketch = np.zeros_like(region) if sketch is None else check_mask(sketch, "sketch")
    T = sketch[y0:y1, x0:x1] & hole
    if T.any():
        style_mask = extract_guidance(image, seed=seed)
        cfg = StructureConfig() if structure_cfg is None else structure_cfg
        try:
            T_hat = (forward_transfer(T, style_mask, cfg) & hole) | T
        except UniformMask:
            # flat image: nothing to borrow structure from
            T_hat = T
        style_hat = style_mask
    else:
        T_hat = np.zeros_like(T)
        style_hat = np.zeros(image.shape[:2], bool)

    context = ContextFrame(~hole, image[y0:y1, x0:x1])
    synth = stylize(T_hat, style_hat, image, text=T, config=texture_cfg, context=context,
                    source_exclude=region)
    out = image.copy()
    out[y0:y1, x0:x1][hole] = synth[hole]
    if return_details:
        return out, {"window": (y0, y1, x0, x1), "text_hat": T_hat, "style_hat": style_hat,
                     "frame": context_frame(region, margin)}
    return out
