"""Deterministic synthetic corpus: textures, glyphs and backgrounds with known
ground truth.  Used by the test-suite and by ``glyphforge fixtures``.
"""
import hashlib
import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import raster


def _rng(seed):
    return np.random.default_rng(seed)


def blob_mask(shape, n_blobs, rmin, rmax, seed, margin=None):
    rng = _rng(seed)
    h, w = shape
    yy, xx = np.mgrid[:h, :w]
    margin = rmax if margin is None else margin
    mask = np.zeros(shape, bool)
    for _ in range(n_blobs):
        cy = rng.uniform(margin, h - margin)
        cx = rng.uniform(margin, w - margin)
        r = rng.uniform(rmin, rmax)
        mask |= (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
    return mask


def two_tone_texture(size=128, seed=0, noise=0.05, inverted=False,
                     fg=(0.9, 0.75, 0.5), bg=(0.1, 0.15, 0.3), n_blobs=6):
    """Noisy blobs on a plain ground; returns ``(image, clean_mask)``.

    ``clean_mask`` marks the blobs, which are the intended foreground.
    """
    mask = blob_mask((size, size), n_blobs, size / 16, size / 8, seed)
    fg, bg = np.asarray(fg), np.asarray(bg)
    if inverted:
        fg, bg = bg, fg
    img = np.where(mask[..., None], fg, bg)
    img = img + _rng(seed + 1000).normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0), mask


def blob_texture(size=96, seed=0, n_blobs=7):
    """Textured style image: bright, striped blobs on a dim mottled ground.

    Returns ``(image, blob_mask)``.  The blobs are both salient and
    distinct in colour, so guidance extraction and saliency agree.
    """
    rng = _rng(seed)
    mask = blob_mask((size, size), n_blobs, size / 14, size / 8, seed)
    yy, xx = np.mgrid[:size, :size]
    stripes = 0.5 + 0.5 * np.sin((xx + 0.6 * yy) * 0.9)
    mottle = ndimage.gaussian_filter(rng.normal(0, 1, (size, size)), 3)
    mottle = (mottle - mottle.min()) / (np.ptp(mottle) + 1e-12)
    fg = np.stack([0.85 + 0.1 * stripes, 0.45 + 0.35 * stripes, 0.15 + 0.1 * stripes], -1)
    bg = np.stack([0.15 + 0.1 * mottle, 0.25 + 0.1 * mottle, 0.35 + 0.15 * mottle], -1)
    img = np.where(mask[..., None], fg, bg)
    return np.clip(img, 0, 1), mask


def smooth_texture(shape, seed, sigma=2.0):
    """Random smooth colour image in [0, 1]."""
    rng = _rng(seed)
    img = ndimage.gaussian_filter(rng.random(shape + (3,)), (sigma, sigma, 0))
    lo, hi = img.min(axis=(0, 1)), img.max(axis=(0, 1))
    return (img - lo) / np.maximum(hi - lo, 1e-12)


def bar_glyph(size=96, stroke=12):
    """An 'H' built from three bars (four stroke ends)."""
    m = np.zeros((size, size), bool)
    lo, hi = size // 6, size - size // 6
    m[lo:hi, lo:lo + stroke] = True
    m[lo:hi, hi - stroke:hi] = True
    mid = size // 2
    m[mid - stroke // 2:mid + stroke - stroke // 2, lo:hi] = True
    return m


def letter_t(size=64, stroke=7):
    m = np.zeros((size, size), bool)
    top = size // 6
    m[top:top + stroke, size // 6:size - size // 6] = True
    c = size // 2
    m[top:size - size // 6, c - stroke // 2:c + stroke - stroke // 2] = True
    return m


def ring_glyph(size=64, outer=24, inner=14):
    yy, xx = np.mgrid[:size, :size]
    r2 = (yy - size / 2) ** 2 + (xx - size / 2) ** 2
    return (r2 < outer ** 2) & (r2 >= inner ** 2)


def wavy_silhouettes(size=96, seed=0, n=5, amp=3.0, period=12.0):
    """Blobs with sinusoidally modulated radius, a stand-in for leaf shapes."""
    rng = _rng(seed)
    yy, xx = np.mgrid[:size, :size]
    mask = np.zeros((size, size), bool)
    for _ in range(n):
        cy, cx = rng.uniform(size * 0.2, size * 0.8, 2)
        r = rng.uniform(size / 10, size / 6)
        ang = np.arctan2(yy - cy, xx - cx)
        rr = np.hypot(yy - cy, xx - cx)
        k = max(3, int(round(2 * np.pi * r / period)))
        mask |= rr < r + amp * np.sin(k * ang + rng.uniform(0, 2 * np.pi))
    return mask


def gradient_background(shape=(128, 128), seed=0, flat_quadrant=None):
    """Smooth two-colour gradient with a busy textured patch.

    With ``flat_quadrant`` in {0, 1, 2, 3} that quadrant is a dark flat
    region while the rest is textured.
    """
    rng = _rng(seed)
    h, w = shape
    yy, xx = np.mgrid[:h, :w]
    a, b = rng.random(3) * 0.5 + 0.25, rng.random(3) * 0.5 + 0.25
    t = (xx / max(w - 1, 1))[..., None]
    img = (1 - t) * a + t * b
    busy = 0.25 * (rng.random((h, w, 3)) - 0.5)
    if flat_quadrant is None:
        cy, cx = rng.integers(h // 4, 3 * h // 4), rng.integers(w // 4, 3 * w // 4)
        patch = (np.abs(yy - cy) < h // 6) & (np.abs(xx - cx) < w // 6)
        img = img + busy * patch[..., None]
    else:
        quad = np.zeros((h, w), bool)
        r0, c0 = (flat_quadrant // 2) * (h // 2), (flat_quadrant % 2) * (w // 2)
        quad[r0:r0 + h // 2, c0:c0 + w // 2] = True
        img = np.where(quad[..., None], 0.2, img + busy)
    return np.clip(img, 0, 1)


def colour_pair(seed=0, size=64):
    """Two images each made of two colour categories (reddish / greenish).

    Style and background use different means and spreads inside each
    category so the per-category transfer has work to do.
    """
    rng = _rng(seed)

    def make(centres, spread, split):
        img = np.empty((size, size, 3))
        left = np.zeros((size, size), bool)
        left[:, :split] = True
        for m, c in ((left, centres[0]), (~left, centres[1])):
            img[m] = np.asarray(c) + rng.normal(0, spread, (m.sum(), 3))
        return np.clip(img, 0, 1)

    style = make([(0.75, 0.18, 0.18), (0.2, 0.56, 0.26)], 0.015, size // 3)
    bg = make([(0.8, 0.16, 0.17), (0.16, 0.6, 0.24)], 0.022, size // 2)
    return style, bg


def make_fixtures(out_dir, seed=7):
    """Write the synthetic corpus plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []

    def add(name, kind, data, **params):
        path = out / f"{name}.png"
        if kind == "mask":
            raster.write_mask(path, data)
        else:
            raster.write_image(path, data)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        entries.append({"file": path.name, "kind": kind, "sha256": digest, **params})

    for i in range(3):
        img, mask = two_tone_texture(seed=seed + i, noise=0.03)
        add(f"two_tone_{i}", "image", img, seed=seed + i, noise=0.03)
        add(f"two_tone_{i}_truth", "mask", mask, seed=seed + i)
    img, mask = blob_texture(seed=seed)
    add("blob_texture", "image", img, seed=seed)
    add("blob_texture_truth", "mask", mask, seed=seed)
    add("bar_glyph", "mask", bar_glyph(), stroke=12, stroke_ends=4)
    add("letter_t", "mask", letter_t(), stroke=7, stroke_ends=3)
    add("ring_glyph", "mask", ring_glyph(), stroke_ends=0)
    add("wavy_silhouettes", "mask", wavy_silhouettes(seed=seed), seed=seed)
    for q in range(2):
        add(f"background_{q}", "image",
            gradient_background(seed=seed + q, flat_quadrant=q), flat_quadrant=q)
    style, bg = colour_pair(seed)
    add("colour_style", "image", style, seed=seed)
    add("colour_background", "image", bg, seed=seed)

    manifest = {"seed": seed, "count": len(entries), "files": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True),
                                       encoding="utf-8")
    return manifest
