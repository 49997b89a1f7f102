"""Per-category colour statistics transfer.

Pixels are grouped by their nearest basic colour term (eleven fixed Lab
prototypes); inside every category present in both images the style's
channel means and deviations are matched to the background's.
"""
from dataclasses import dataclass

import numpy as np
from skimage import color as skcolor
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_image

BASIC_COLOURS = {
    "black": (0, 0, 0),
    "blue": (0, 70, 200),
    "brown": (130, 80, 40),
    "gray": (128, 128, 128),
    "green": (0, 150, 50),
    "orange": (255, 140, 0),
    "pink": (255, 160, 190),
    "purple": (130, 50, 160),
    "red": (210, 20, 30),
    "white": (255, 255, 255),
    "yellow": (255, 230, 0),
}
NAMES = tuple(BASIC_COLOURS)
PROTOTYPES = skcolor.rgb2lab(np.array([BASIC_COLOURS[n] for n in NAMES], float)[None] / 255.0)[0]

MIN_FRACTION = 0.005
MIN_STD = 1e-4


@dataclass
class CategoryStats:
    labels: np.ndarray   # H x W category index into NAMES
    counts: np.ndarray   # (11,)
    mean: np.ndarray     # (11, 3) real Lab, NaN for empty categories
    std: np.ndarray      # (11, 3)
    global_mean: np.ndarray
    global_std: np.ndarray

    @property
    def fractions(self):
        return self.counts / max(self.counts.sum(), 1)


def _stats(lab, labels):
    flat = lab.reshape(-1, 3)
    lab_idx = labels.ravel()
    k = len(NAMES)
    counts = np.bincount(lab_idx, minlength=k)
    mean = np.full((k, 3), np.nan)
    std = np.full((k, 3), np.nan)
    for c in np.nonzero(counts)[0]:
        px = flat[lab_idx == c]
        mean[c] = px.mean(0)
        std[c] = px.std(0)
    return CategoryStats(labels, counts, mean, std, flat.mean(0), flat.std(0))


def categorize(image):
    """Nearest-prototype category of every pixel plus per-category Lab stats."""
    lab = skcolor.rgb2lab(check_image(image))
    d = ((lab[..., None, :] - PROTOTYPES) ** 2).sum(-1)
    labels = np.argmin(d, axis=-1)
    return _stats(lab, labels)


def _affine(mu_s, sd_s, mu_t, sd_t):
    scale = np.where(sd_s >= MIN_STD, sd_t / np.maximum(sd_s, MIN_STD), 1.0)
    return scale, mu_t - scale * mu_s


def category_transforms(src, dst, min_fraction=MIN_FRACTION):
    """Per-category ``(scale, offset)`` arrays, shape (11, 3).

    Categories that are rare in either image, or flat in the source, get the
    global transform instead.
    """
    g_scale, g_off = _affine(src.global_mean, src.global_std, dst.global_mean, dst.global_std)
    scale = np.tile(g_scale, (len(NAMES), 1))
    offset = np.tile(g_off, (len(NAMES), 1))
    usable = (src.fractions >= min_fraction) & (dst.fractions >= min_fraction)
    for c in np.nonzero(usable)[0]:
        if np.all(src.std[c] >= MIN_STD):
            scale[c], offset[c] = _affine(src.mean[c], src.std[c], dst.mean[c], dst.std[c])
    return scale, offset, usable


def transfer_colors(style, background, min_fraction=MIN_FRACTION, return_info=False):
    """Recolour ``style`` so each shared colour category takes on the
    background's Lab mean and standard deviation.  Output is clipped to sRGB."""
    style = check_image(style, "style")
    background = check_image(background, "background")
    src = categorize(style)
    dst = categorize(background)
    scale, offset, usable = category_transforms(src, dst, min_fraction)
    lab = skcolor.rgb2lab(style)
    out_lab = lab * scale[src.labels] + offset[src.labels]
    rgb = skcolor.lab2rgb(out_lab)
    clipped = np.abs(skcolor.rgb2lab(rgb) - out_lab).max(-1) > 1e-3
    out = np.clip(rgb, 0.0, 1.0)
    if return_info:
        return out, {"source": src, "target": dst, "scale": scale, "offset": offset,
                     "matched": usable, "clipped": clipped}
    return out


class ColorTransfer(TransformerMixin, BaseEstimator):
    """``fit(background)`` learns the target palette; ``transform(style)``
    recolours an image toward it."""

    def __init__(self, min_fraction=MIN_FRACTION):
        self.min_fraction = min_fraction

    def fit(self, X, y=None):
        if not 0 <= self.min_fraction < 1:
            raise ValueError("min_fraction must be in [0, 1)")
        self.background_ = check_image(X, "background")
        self.stats_ = categorize(self.background_)
        return self

    def transform(self, X):
        check_is_fitted(self, "background_")
        return transfer_colors(X, self.background_, self.min_fraction)
