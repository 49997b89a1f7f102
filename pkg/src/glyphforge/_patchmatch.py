"""Numba kernels for randomized patch matching and voting.

Per-patch energy for target centre p and source centre q:

    base(p, q) = Ea + lam1 * (dt[p] - ds[q])**2 + lam3 * Es
    full(p, q) = base(p, q) + lam2 * usage[q] / n_patches

where Ea is the mean squared colour difference over patch pixels and
channels plus ``mu`` times the mean squared guidance-mask difference.
``usage`` counts how many target patches currently map to each source
centre; it is kept exact after every accepted move.
"""
import numpy as np
from numba import njit

SAMPLES = 2


@njit(cache=True)
def appearance(tgt, src, tm, sm, py, px, qy, qx, r, mu, cutoff):
    """Ea(p, q); returns early (with a value >= cutoff) once cutoff is exceeded."""
    size = 2 * r + 1
    inv_c = 1.0 / (3.0 * size * size)
    inv_m = mu / (size * size)
    acc = 0.0
    for dy in range(-r, r + 1):
        ty = py + dy
        sy = qy + dy
        for dx in range(-r, r + 1):
            tx = px + dx
            sx = qx + dx
            d0 = tgt[ty, tx, 0] - src[sy, sx, 0]
            d1 = tgt[ty, tx, 1] - src[sy, sx, 1]
            d2 = tgt[ty, tx, 2] - src[sy, sx, 2]
            dm = tm[ty, tx] - sm[sy, sx]
            acc += (d0 * d0 + d1 * d1 + d2 * d2) * inv_c + dm * dm * inv_m
        if acc >= cutoff:
            return acc
    return acc


@njit(cache=True)
def saliency_term(wgt, tind, sal, py, px, qy, qx):
    if tind[py, px] > 0.5:
        return wgt[py, px] * (1.0 - sal[qy, qx])
    return wgt[py, px] * sal[qy, qx]


@njit(cache=True)
def _side_terms(dt, ds, wgt, tind, sal, py, px, qy, qx, lam1, lam3):
    e = 0.0
    if lam1 != 0.0:
        d = dt[py, px] - ds[qy, qx]
        e += lam1 * d * d
    if lam3 != 0.0:
        e += lam3 * saliency_term(wgt, tind, sal, py, px, qy, qx)
    return e


@njit(cache=True)
def refresh_energy(tgt, src, tm, sm, dt, ds, wgt, tind, sal, nnf, base, r,
                   mu, lam1, lam3):
    h, w = tgt.shape[0], tgt.shape[1]
    for py in range(r, h - r):
        for px in range(r, w - r):
            qy, qx = nnf[py, px, 0], nnf[py, px, 1]
            base[py, px] = appearance(tgt, src, tm, sm, py, px, qy, qx, r, mu, np.inf) + \
                _side_terms(dt, ds, wgt, tind, sal, py, px, qy, qx, lam1, lam3)


@njit(cache=True)
def _try(tgt, src, tm, sm, dt, ds, wgt, tind, sal, valid, nnf, base, usage,
         py, px, qy, qx, r, mu, lam1, lam2, lam3, inv_n):
    """Attempt to move p to q; returns 1 if accepted.

    A move is accepted only when both the patch's own energy and the global
    objective strictly decrease, so neither can go up.
    """
    cy, cx = nnf[py, px, 0], nnf[py, px, 1]
    if qy == cy and qx == cx:
        return 0
    if not valid[qy, qx]:
        return 0
    k = lam2 * (usage[qy, qx] + 1 - usage[cy, cx]) * inv_n
    # total objective changes by dbase + 2k, the patch energy by dbase + k
    margin = 2.0 * k if k >= 0.0 else k
    side = _side_terms(dt, ds, wgt, tind, sal, py, px, qy, qx, lam1, lam3)
    cutoff = base[py, px] - margin - side
    if cutoff <= 0.0:
        return 0
    ea = appearance(tgt, src, tm, sm, py, px, qy, qx, r, mu, cutoff)
    if ea >= cutoff:
        return 0
    base[py, px] = ea + side
    usage[cy, cx] -= 1
    usage[qy, qx] += 1
    nnf[py, px, 0] = qy
    nnf[py, px, 1] = qx
    return 1


@njit(cache=True)
def patchmatch(tgt, src, tm, sm, dt, ds, wgt, tind, sal, valid, nnf, base, usage,
               r, mu, lam1, lam2, lam3, iters, seed):
    """Alternating-scan propagation plus shrinking-radius random search."""
    np.random.seed(seed)
    h, w = tgt.shape[0], tgt.shape[1]
    hs, ws = src.shape[0], src.shape[1]
    n = (h - 2 * r) * (w - 2 * r)
    inv_n = 1.0 / n
    accepted = 0
    for it in range(iters):
        if it % 2 == 0:
            y0, y1, step = r, h - r, 1
            x0, x1 = r, w - r
        else:
            y0, y1, step = h - r - 1, r - 1, -1
            x0, x1 = w - r - 1, r - 1
        py = y0
        while py != y1:
            px = x0
            while px != x1:
                # propagation from the already-visited neighbours
                # (shifted candidates that leave the source are clamped back)
                nx = px - step
                if r <= nx < w - r:
                    qy = nnf[py, nx, 0]
                    qx = min(max(nnf[py, nx, 1] + step, r), ws - r - 1)
                    accepted += _try(tgt, src, tm, sm, dt, ds, wgt, tind, sal, valid,
                                     nnf, base, usage, py, px, qy, qx, r, mu,
                                     lam1, lam2, lam3, inv_n)
                ny = py - step
                if r <= ny < h - r:
                    qy = min(max(nnf[ny, px, 0] + step, r), hs - r - 1)
                    qx = nnf[ny, px, 1]
                    accepted += _try(tgt, src, tm, sm, dt, ds, wgt, tind, sal, valid,
                                     nnf, base, usage, py, px, qy, qx, r, mu,
                                     lam1, lam2, lam3, inv_n)
                # random search with exponentially shrinking window
                rad = max(hs, ws)
                while rad >= 1:
                    for _ in range(SAMPLES):
                        cy, cx = nnf[py, px, 0], nnf[py, px, 1]
                        lo_y, hi_y = max(r, cy - rad), min(hs - r - 1, cy + rad)
                        lo_x, hi_x = max(r, cx - rad), min(ws - r - 1, cx + rad)
                        qy = np.random.randint(lo_y, hi_y + 1)
                        qx = np.random.randint(lo_x, hi_x + 1)
                        accepted += _try(tgt, src, tm, sm, dt, ds, wgt, tind, sal, valid,
                                         nnf, base, usage, py, px, qy, qx, r, mu,
                                         lam1, lam2, lam3, inv_n)
                    rad //= 2
                px += step
            py += step
    return accepted


@njit(cache=True)
def vote(src, nnf, r, out_shape_h, out_shape_w, prev):
    """Uniform average of every source pixel mapped onto each target pixel."""
    h, w = out_shape_h, out_shape_w
    c = src.shape[2]
    acc = np.zeros((h, w, c))
    cnt = np.zeros((h, w))
    for py in range(r, h - r):
        for px in range(r, w - r):
            qy, qx = nnf[py, px, 0], nnf[py, px, 1]
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    for k in range(c):
                        acc[py + dy, px + dx, k] += src[qy + dy, qx + dx, k]
                    cnt[py + dy, px + dx] += 1.0
    out = prev.copy()
    for y in range(h):
        for x in range(w):
            if cnt[y, x] > 0:
                for k in range(c):
                    out[y, x, k] = acc[y, x, k] / cnt[y, x]
    return out


@njit(cache=True)
def energy_terms(tgt, src, tm, sm, dt, ds, wgt, tind, sal, nnf, usage, r, mu):
    """Unweighted sums of (Ea, Ed, Ep, Es) over all target patches."""
    h, w = tgt.shape[0], tgt.shape[1]
    n = (h - 2 * r) * (w - 2 * r)
    ea = 0.0
    ed = 0.0
    ep = 0.0
    es = 0.0
    for py in range(r, h - r):
        for px in range(r, w - r):
            qy, qx = nnf[py, px, 0], nnf[py, px, 1]
            ea += appearance(tgt, src, tm, sm, py, px, qy, qx, r, mu, np.inf)
            d = dt[py, px] - ds[qy, qx]
            ed += d * d
            ep += usage[qy, qx] / n
            es += saliency_term(wgt, tind, sal, py, px, qy, qx)
    return ea, ed, ep, es


@njit(cache=True)
def ssd_match(tgt, src, nnf, dist, r, iters, seed):
    """Plain colour-SSD patch matching (no guidance terms).

    ``tgt`` must already be padded so that every pixel of interest is a
    valid centre; ``dist`` receives the mean squared difference per patch.
    """
    h, w = tgt.shape[0], tgt.shape[1]
    hs, ws = src.shape[0], src.shape[1]
    c = tgt.shape[2]
    size = 2 * r + 1
    norm = 1.0 / (c * size * size)
    np.random.seed(seed)

    def cost(py, px, qy, qx, cutoff):
        acc = 0.0
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                for k in range(c):
                    d = tgt[py + dy, px + dx, k] - src[qy + dy, qx + dx, k]
                    acc += d * d
            if acc * norm >= cutoff:
                return acc * norm
        return acc * norm

    for py in range(r, h - r):
        for px in range(r, w - r):
            dist[py, px] = cost(py, px, nnf[py, px, 0], nnf[py, px, 1], np.inf)
    for it in range(iters):
        if it % 2 == 0:
            y0, y1, step, x0, x1 = r, h - r, 1, r, w - r
        else:
            y0, y1, step, x0, x1 = h - r - 1, r - 1, -1, w - r - 1, r - 1
        py = y0
        while py != y1:
            px = x0
            while px != x1:
                for k in range(2):
                    if k == 0:
                        ny, nx = py, px - step
                    else:
                        ny, nx = py - step, px
                    if not (r <= ny < h - r and r <= nx < w - r):
                        continue
                    qy = min(max(nnf[ny, nx, 0] + (py - ny), r), hs - r - 1)
                    qx = min(max(nnf[ny, nx, 1] + (px - nx), r), ws - r - 1)
                    d = cost(py, px, qy, qx, dist[py, px])
                    if d < dist[py, px]:
                        dist[py, px] = d
                        nnf[py, px, 0] = qy
                        nnf[py, px, 1] = qx
                rad = max(hs, ws)
                while rad >= 1:
                    cy, cx = nnf[py, px, 0], nnf[py, px, 1]
                    qy = np.random.randint(max(r, cy - rad), min(hs - r - 1, cy + rad) + 1)
                    qx = np.random.randint(max(r, cx - rad), min(ws - r - 1, cx + rad) + 1)
                    d = cost(py, px, qy, qx, dist[py, px])
                    if d < dist[py, px]:
                        dist[py, px] = d
                        nnf[py, px, 0] = qy
                        nnf[py, px, 1] = qx
                    rad //= 2
                px += step
            py += step
