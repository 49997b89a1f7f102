"""Raster primitives: binarization, exact distance transforms, integral-image
window sums, pyramids, resampling, colour conversion and file I/O.

Images are float64 ``H x W x 3`` arrays in [0, 1]; masks are boolean ``H x W``
arrays; scalar fields are float64 ``H x W`` arrays.  CIELab images are stored
affinely rescaled to [0, 1] (see :func:`rgb_to_lab`).
"""
import cv2
import numpy as np
from numba import njit
from PIL import Image
from skimage import color as skcolor

from ._validation import check_field, check_image, check_mask
from .exceptions import DegenerateOutput, RectTooLarge, TooManyLevels, UniformMask

MIN_LEVEL_SIZE = 8

_LAB_OFFSET = np.array([0.0, 128.0, 128.0])
_LAB_SCALE = np.array([100.0, 255.0, 255.0])


def binarize(field, threshold=0.5):
    """Return the boolean mask ``field >= threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return np.asarray(field, dtype=np.float64) >= threshold


# ---------------------------------------------------------------------------
# Exact Euclidean distance transform (lower envelope of parabolas)
# ---------------------------------------------------------------------------

_FAR = 1e30


@njit(cache=True)
def _edt_1d(f, out, v, z):
    n = f.shape[0]
    k = -1
    for q in range(n):
        if f[q] >= _FAR:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        k += 1
        v[k] = q
        z[k] = s if k > 0 else -np.inf
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = _FAR
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        d = q - v[j]
        out[q] = d * d + f[v[j]]


@njit(cache=True)
def _squared_edt(sites):
    """Squared distance from every pixel to the nearest True pixel of ``sites``."""
    h, w = sites.shape
    g = np.empty((h, w))
    n = max(h, w)
    f = np.empty(n)
    out = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for c in range(w):
        for r in range(h):
            f[r] = 0.0 if sites[r, c] else _FAR
        _edt_1d(f[:h], out[:h], v, z)
        for r in range(h):
            g[r, c] = out[r]
    res = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            f[c] = g[r, c]
        _edt_1d(f[:w], out[:w], v, z)
        for c in range(w):
            res[r, c] = out[c]
    return res


def distance_transform(mask):
    """Exact Euclidean distance from each pixel to the nearest pixel of the
    opposite class.

    Pixels touching the boundary get the minimum value (1 for 4-adjacent
    neighbours); consumers rescale as needed.
    """
    mask = check_mask(mask)
    if mask.all() or not mask.any():
        raise UniformMask("distance transform needs both 0 and 1 pixels")
    to_bg = _squared_edt(~mask)
    to_fg = _squared_edt(mask)
    return np.sqrt(np.where(mask, to_bg, to_fg))


def boundary_distance(mask):
    """Unsigned distance to the shape boundary, 0 on boundary pixels."""
    return distance_transform(mask) - 1.0


# ---------------------------------------------------------------------------
# Window sums
# ---------------------------------------------------------------------------

def integral_image(field):
    ii = np.zeros((field.shape[0] + 1, field.shape[1] + 1))
    np.cumsum(np.cumsum(field, axis=0), axis=1, out=ii[1:, 1:])
    return ii


def box_sum(field, rect_w, rect_h):
    """Sum of ``field`` over every ``rect_h x rect_w`` window.

    Windows are anchored at their top-left pixel.  Only anchors whose window
    lies fully inside the field are returned, so the result has shape
    ``(H - rect_h + 1, W - rect_w + 1)``.
    """
    field = check_field(field)
    h, w = field.shape
    rect_w, rect_h = int(rect_w), int(rect_h)
    if rect_w < 1 or rect_h < 1:
        raise ValueError("window dimensions must be positive")
    if rect_w > w or rect_h > h:
        raise RectTooLarge(f"window {rect_w}x{rect_h} exceeds field {w}x{h}")
    ii = integral_image(field)
    return (ii[rect_h:, rect_w:] - ii[:-rect_h, rect_w:]
            - ii[rect_h:, :-rect_w] + ii[:-rect_h, :-rect_w])


# ---------------------------------------------------------------------------
# Pyramids and resampling
# ---------------------------------------------------------------------------

def downsample2(x):
    """Halve resolution by 2x2 box averaging; odd edges average what exists."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[:2]
    hh, ww = -(-h // 2), -(-w // 2)
    pad = [(0, 2 * hh - h), (0, 2 * ww - w)] + [(0, 0)] * (x.ndim - 2)
    ones = np.pad(np.ones((h, w)), pad[:2])
    xs = np.pad(x, pad)
    shape = (hh, 2, ww, 2) + x.shape[2:]
    total = xs.reshape(shape).sum(axis=(1, 3))
    count = ones.reshape(hh, 2, ww, 2).sum(axis=(1, 3))
    if x.ndim == 3:
        count = count[..., None]
    return total / count


def build_pyramid(x, levels):
    """Factor-2 pyramid; ``result[0]`` is ``x`` and ``result[levels]`` the top.

    Boolean masks are re-binarized at 0.5 after each box-average step.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    is_mask = np.asarray(x).dtype == bool
    h, w = np.asarray(x).shape[:2]
    for _ in range(levels):
        h, w = -(-h // 2), -(-w // 2)
    if levels > 0 and (h < MIN_LEVEL_SIZE or w < MIN_LEVEL_SIZE):
        raise TooManyLevels(f"level {levels} would be {w}x{h}, below 8x8")
    pyr = [np.array(x, copy=True)]
    for _ in range(levels):
        nxt = downsample2(pyr[-1])
        pyr.append(nxt >= 0.5 if is_mask else nxt)
    return pyr


def _resize(x, shape, method):
    h, w = shape
    if method == "nearest":
        interp = cv2.INTER_NEAREST
    elif method == "bicubic":
        interp = cv2.INTER_CUBIC
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if method == "bicubic":
        sy, sx = h / x.shape[0], w / x.shape[1]
        if sy < 1 or sx < 1:
            # anti-alias before decimation
            sig = (max(0.0, (1 / sy - 1) / 2), max(0.0, (1 / sx - 1) / 2))
            x = cv2.GaussianBlur(x, (0, 0), sigmaX=max(sig[1], 1e-3),
                                 sigmaY=max(sig[0], 1e-3),
                                 borderType=cv2.BORDER_REFLECT)
    out = cv2.resize(x, (w, h), interpolation=interp)
    if out.ndim == 2 and x.ndim == 3:
        out = out[..., None]
    return out


def resample(x, factor=None, method="bicubic", shape=None):
    """Resize an image, mask or field by ``factor`` (or to an explicit ``shape``).

    Masks come back boolean: bicubic results are re-binarized at 0.5.
    Images are clipped back to [0, 1] after bicubic overshoot.
    """
    arr = np.asarray(x)
    is_mask = arr.dtype == bool
    h, w = arr.shape[:2]
    if shape is None:
        if factor is None or factor <= 0:
            raise ValueError("factor must be > 0")
        if factor == 1.0:
            return arr.copy()
        shape = (int(round(h * factor)), int(round(w * factor)))
    shape = (int(shape[0]), int(shape[1]))
    if shape[0] < 1 or shape[1] < 1:
        raise DegenerateOutput(f"resampling {w}x{h} by {factor} is empty")
    if shape == (h, w):
        return arr.copy()
    out = _resize(arr.astype(np.float64), shape, method)
    if is_mask:
        return out >= 0.5
    if arr.ndim == 3:
        out = np.clip(out, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# Colour
# ---------------------------------------------------------------------------

def rgb_to_lab(image, scaled=True):
    """sRGB in [0, 1] -> CIELab.  ``scaled`` maps L, a, b affinely onto [0, 1]."""
    lab = skcolor.rgb2lab(check_image(image))
    if scaled:
        return (lab + _LAB_OFFSET) / _LAB_SCALE
    return lab


def lab_to_rgb(lab, scaled=True):
    lab = np.asarray(lab, dtype=np.float64)
    if scaled:
        lab = lab * _LAB_SCALE - _LAB_OFFSET
    return np.clip(skcolor.lab2rgb(lab), 0.0, 1.0)


def luminance(image):
    image = np.asarray(image, dtype=np.float64)
    return image @ np.array([0.299, 0.587, 0.114])


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def read_image(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def read_mask(path):
    """8-bit grayscale mask: values >= 128 are foreground."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def to_uint8(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, image):
    Image.fromarray(to_uint8(image), mode="RGB").save(path)


def write_mask(path, mask):
    Image.fromarray(np.where(check_mask(mask), 255, 0).astype(np.uint8), mode="L").save(path)


def write_pfm(path, field):
    """Greyscale PFM, little-endian, rows stored bottom-to-top."""
    field = np.asarray(field, dtype="<f4")
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(field[::-1]).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind != b"Pf":
            raise ValueError(f"{path}: only greyscale PFM is supported")
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(w * h * 4), dtype=dtype).reshape(h, w)
    return data[::-1].astype(np.float64)

