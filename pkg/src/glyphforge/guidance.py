"""Guidance-map extraction: turn a colour style photograph into a binary
foreground/background abstraction.

The pipeline is texture-removing smoothing, fine superpixels, a 2-means
split of superpixel colours, and a saliency vote that decides which cluster
is the foreground.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import factorized
from skimage.segmentation import slic
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_is_fitted

from . import raster
from ._validation import check_field, check_image, check_mask, check_same_shape
from .exceptions import DegenerateFeatures

SALIENCY_WIDTH = 64


def _forward_diff(u, axis):
    d = np.diff(u, axis=axis)
    pad = [(0, 0)] * u.ndim
    pad[axis] = (0, 1)
    return np.pad(d, pad)


def _laplacian(wx, wy):
    """Weighted 5-point Laplacian D_x^T W_x D_x + D_y^T W_y D_y (row-major)."""
    h, w = wx.shape
    n = h * w
    idx = np.arange(n).reshape(h, w)
    # horizontal edges (r, c) -- (r, c+1) carry weight wx[r, c]
    a, b, ew = idx[:, :-1].ravel(), idx[:, 1:].ravel(), wx[:, :-1].ravel()
    c, d, ev = idx[:-1, :].ravel(), idx[1:, :].ravel(), wy[:-1, :].ravel()
    rows = np.concatenate([a, b, c, d])
    cols = np.concatenate([b, a, d, c])
    vals = -np.concatenate([ew, ew, ev, ev])
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return off + sp.diags(diag, format="csc")


def smooth_structure(style, strength=0.015, sigma=3.0, iterations=4,
                     sharpness=0.02, eps=1e-3):
    """Edge-preserving texture removal by iteratively reweighted least squares.

    Each pass solves ``(I + strength * L_w) u = style`` where the weights of
    ``L_w`` are large inside textured areas (where gradients cancel under a
    Gaussian window) and small across coherent structure edges.  The scheme
    follows relative-total-variation smoothing; ``sigma`` halves every pass.
    """
    style = check_image(style)
    if strength <= 0:
        return style.copy()
    h, w = style.shape[:2]
    b = style.reshape(-1, 3)
    u = style.copy()
    sig = float(sigma)
    for _ in range(iterations):
        gray = u.mean(axis=2)
        gx, gy = _forward_diff(gray, 1), _forward_diff(gray, 0)
        ux = ndimage.gaussian_filter(1.0 / (np.abs(ndimage.gaussian_filter(gx, sig)) + eps), sig)
        uy = ndimage.gaussian_filter(1.0 / (np.abs(ndimage.gaussian_filter(gy, sig)) + eps), sig)
        wx = ux / (np.abs(gx) + sharpness)
        wy = uy / (np.abs(gy) + sharpness)
        A = sp.identity(h * w, format="csc") + strength * _laplacian(wx, wy)
        solve = factorized(A)
        u = np.stack([solve(b[:, k]) for k in range(3)], axis=1).reshape(h, w, 3)
        sig = max(sig / 2.0, 0.5)
    return np.clip(u, 0.0, 1.0)


@dataclass
class SuperpixelMap:
    labels: np.ndarray
    count: int
    features: np.ndarray


def superpixels(smoothed, cell=16, compactness=10.0):
    """SLIC superpixels over ``smoothed``; features are mean scaled-Lab colours."""
    smoothed = check_image(smoothed)
    if cell < 4:
        raise ValueError("superpixel cell must be >= 4 px")
    h, w = smoothed.shape[:2]
    n_segments = max(1, int(round(h * w / float(cell * cell))))
    labels = slic(smoothed, n_segments=n_segments, compactness=compactness,
                  start_label=0, enforce_connectivity=True, channel_axis=-1)
    # relabel to a dense 0..count-1 range
    _, labels = np.unique(labels, return_inverse=True)
    labels = labels.reshape(h, w)
    count = int(labels.max()) + 1
    lab = raster.rgb_to_lab(smoothed).reshape(-1, 3)
    sizes = np.bincount(labels.ravel(), minlength=count).astype(np.float64)
    feats = np.stack([np.bincount(labels.ravel(), lab[:, k], minlength=count)
                      for k in range(3)], axis=1) / sizes[:, None]
    return SuperpixelMap(labels=labels, count=count, features=feats)


def cluster_two(spmap, seed=7):
    """2-means split of the superpixel features, painted back onto pixels."""
    feats = np.asarray(spmap.features, dtype=np.float64)
    if spmap.count < 2:
        raise DegenerateFeatures("need at least two superpixels")
    if np.ptp(feats, axis=0).max() <= 1e-12:
        raise DegenerateFeatures("all superpixel features are identical")
    km = KMeans(n_clusters=2, init="k-means++", n_init=8, max_iter=50,
                random_state=seed).fit(feats)
    return km.labels_.astype(bool)[spmap.labels]


def saliency(image, working_width=SALIENCY_WIDTH, sigma=2.5):
    """Spectral-residual saliency, min-max normalized to [0, 1].

    Computed on a downscaled grey image of width ``working_width`` and brought
    back to full size with bicubic interpolation plus Gaussian smoothing.
    """
    image = check_image(image)
    h, w = image.shape[:2]
    gray = raster.luminance(image)
    scale = min(1.0, working_width / float(w))
    small = raster.resample(gray, shape=(max(1, round(h * scale)), max(1, round(w * scale))))
    if np.ptp(small) < 1e-8:
        return np.zeros((h, w))
    spec = np.fft.fft2(small - small.mean())
    amp = np.abs(spec)
    # floor keeps spectral zeros from turning into spurious residual spikes
    log_amp = np.log(amp + 0.01 * amp.mean() + 1e-12)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * np.angle(spec)))) ** 2
    sal = ndimage.gaussian_filter(sal, sigma)
    sal = raster.resample(sal, shape=(h, w))
    sal = ndimage.gaussian_filter(sal, sigma / scale / 2.0)
    lo, hi = sal.min(), sal.max()
    if hi - lo < 1e-12:
        return np.zeros((h, w))
    return (sal - lo) / (hi - lo)


def pick_foreground(mask, sal):
    """Orient ``mask`` so its 1-side has the higher mean saliency.

    Exact ties keep the input orientation.
    """
    mask = check_mask(mask)
    sal = check_field(sal)
    check_same_shape(mask, sal, ("mask", "saliency"))
    on = sal[mask].mean() if mask.any() else -np.inf
    off = sal[~mask].mean() if (~mask).any() else -np.inf
    return mask.copy() if on >= off else ~mask


def extract_guidance(style, smoothing_strength=0.015, superpixel_cell=16, seed=7,
                     return_details=False):
    """Binary guidance map of ``style`` (True = texture foreground)."""
    style = check_image(style)
    smoothed = smooth_structure(style, smoothing_strength)
    spmap = superpixels(smoothed, superpixel_cell)
    clusters = cluster_two(spmap, seed)
    sal = saliency(style)
    mask = pick_foreground(clusters, sal)
    if return_details:
        return mask, {"smoothed": smoothed, "superpixels": spmap, "saliency": sal}
    return mask


class GuidanceExtractor(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`extract_guidance`.

    ``fit`` runs the extraction on a style image and keeps the intermediate
    products; ``transform`` returns the guidance mask for a (new) style image.
    """

    K = 2

    def __init__(self, smoothing_strength=0.015, superpixel_cell=16, seed=7):
        self.smoothing_strength = smoothing_strength
        self.superpixel_cell = superpixel_cell
        self.seed = seed

    def _check_params(self):
        if self.smoothing_strength < 0:
            raise ValueError("smoothing_strength must be >= 0")
        if self.superpixel_cell < 4:
            raise ValueError("superpixel_cell must be >= 4")

    def fit(self, X, y=None):
        self._check_params()
        self.mask_, details = extract_guidance(
            X, self.smoothing_strength, self.superpixel_cell, self.seed,
            return_details=True)
        self.smoothed_ = details["smoothed"]
        self.superpixels_ = details["superpixels"]
        self.saliency_ = details["saliency"]
        return self

    def transform(self, X):
        check_is_fitted(self, "mask_")
        return extract_guidance(X, self.smoothing_strength, self.superpixel_cell, self.seed)

    def fit_transform(self, X, y=None):
        return self.fit(X).mask_.copy()
