import math

import numpy as np
import pytest
from skimage import color as skcolor

from glyphforge import fixtures
from glyphforge import layout as lay
from glyphforge.exceptions import NoValidPlacement


def naive_variance(g, size):
    r = size // 2
    p = np.pad(g, r, mode="symmetric")
    out = np.empty_like(g)
    for y in range(g.shape[0]):
        for x in range(g.shape[1]):
            out[y, x] = p[y:y + size, x:x + size].var()
    return out


def exhaustive_argmin(U, h, w):
    best = None
    for y in range(U.shape[0] - h + 1):
        for x in range(U.shape[1] - w + 1):
            c = math.fsum(U[y:y + h, x:x + w].ravel().tolist()) / (h * w)
            if best is None or c < best[0]:
                best = (c, y, x)
    return best


def direct_rotated_cost(U, p):
    """Mean of U over pixel centres that fall inside the placed rectangle."""
    H, W = U.shape
    cy, cx = p.centre
    yy, xx = np.mgrid[:H, :W].astype(float)
    c, s = math.cos(p.rotation), math.sin(p.rotation)
    dy, dx = yy - cy, xx - cx
    u = c * dx + s * dy
    v = -s * dx + c * dy
    inside = (np.abs(u) <= p.w / 2) & (np.abs(v) <= p.h / 2)
    return U[inside].mean()


def exhaustive_coherence(image, style, patch):
    r = patch // 2
    a = np.pad(skcolor.rgb2lab(image) / [100, 255, 255] + [0, 0.5, 0.5], ((r, r), (r, r), (0, 0)),
               mode="reflect")
    b = skcolor.rgb2lab(style) / [100, 255, 255] + [0, 0.5, 0.5]
    src = np.lib.stride_tricks.sliding_window_view(b, (patch, patch), axis=(0, 1))
    src = src.reshape(-1, 3 * patch * patch)
    out = np.empty(image.shape[:2])
    for y in range(image.shape[0]):
        for x in range(image.shape[1]):
            q = a[y:y + patch, x:x + patch].transpose(2, 0, 1).ravel()
            out[y, x] = ((src - q) ** 2).mean(1).min()
    return out


@pytest.fixture(scope="module")
def scene():
    bg = fixtures.gradient_background(seed=3, flat_quadrant=3)
    style, _ = fixtures.blob_texture(64)
    return bg, style


class TestCostMaps:
    def test_variance_constant(self):
        assert not lay.cost_variance(np.full((20, 20, 3), 0.4)).any()

    def test_variance_naive(self):
        g = np.random.default_rng(0).random((16, 16))
        np.testing.assert_allclose(lay.local_variance(g, 5), naive_variance(g, 5), atol=1e-12)

    def test_variance_ridge(self):
        img = np.zeros((32, 32, 3))
        img[:, 16:] = 1
        u = lay.cost_variance(img, 7)
        assert np.all(np.argmax(u, axis=1) >= 15) and np.all(np.argmax(u, axis=1) <= 16)

    def test_saliency_blob(self):
        img = np.full((64, 64, 3), 0.2)
        img[24:40, 24:40] = 0.95
        u = lay.cost_saliency(img)
        assert u.min() >= 0 and u.max() <= 1
        assert u[26:38, 26:38].mean() > 2 * u[:8, :8].mean()

    def test_aesthetics(self):
        u = lay.cost_aesthetics((41, 61))
        assert u[20, 30] == 0
        sigma = 41
        yy, xx = np.mgrid[:41, :61]
        np.testing.assert_allclose(u, 1 - np.exp(-((yy - 20) ** 2 + (xx - 30) ** 2) / (2 * sigma ** 2)))
        wide = lay.cost_aesthetics((101, 401))  # sigma = 101, centre (50, 200)
        assert wide[50, 301] == pytest.approx(1 - math.exp(-0.5), abs=1e-12)

    def test_coherence_self(self):
        img = fixtures.smooth_texture((40, 40), 2, sigma=3)
        # border patches are reflected, so only interior ones have exact copies
        assert lay.coherence_distance(img, img)[3:-3, 3:-3].max() < 1e-3

    def test_coherence_bound(self, scene):
        bg, style = scene
        img, sty = bg[40:72, 40:72], style[:32, :32]
        got = lay.coherence_distance(img, sty, patch=7)
        want = exhaustive_coherence(img, sty, 7)
        assert np.all(got >= want - 1e-12)
        assert got.mean() <= 1.10 * want.mean()

    def test_coherence_disjoint_plateau(self):
        rng = np.random.default_rng(1)
        sty = np.clip(0.1 + 0.05 * rng.random((32, 32, 3)), 0, 1)
        img = np.clip(0.9 - 0.05 * rng.random((32, 32, 3)), 0, 1)
        raw = lay.coherence_distance(img, sty)
        assert raw.min() > 0.5 * raw.max()

    def test_normalized(self, scene):
        bg, style = scene
        for name, u in lay.cost_maps(bg, style).items():
            assert u.min() >= 0 and u.max() <= 1 + 1e-12, name


class TestSearch:
    def test_constant_tie_break(self):
        p = lay.search_placement(np.ones((20, 30)), (5, 7))
        assert (p.y, p.x) == (0, 0)

    @pytest.mark.parametrize("seed", range(4))
    def test_exhaustive(self, seed):
        U = np.random.default_rng(seed).random((40, 48))
        p = lay.search_placement(U, (9, 13))
        c, y, x = exhaustive_argmin(U, 9, 13)
        assert (p.y, p.x) == (y, x)
        assert abs(p.total_cost - c) < 1e-12

    def test_plateau_ties(self):
        U = np.ones((30, 30))
        U[10:20, 5:25] = 0.0
        p = lay.search_placement(U, (4, 4))
        assert (p.y, p.x) == (10, 5)

    def test_flat_quadrant(self, scene):
        bg, style = scene
        maps = lay.cost_maps(bg, style)
        p0 = lay.estimate_position(bg, style, (30, 36), lay.LayoutConfig(lambda4=0), maps=maps)
        assert p0.y >= 64 and p0.x >= 64
        U = lay.combine(maps, 0.0)
        c, y, x = exhaustive_argmin(U, 30, 36)
        assert (p0.y, p0.x) == (y, x)
        p1 = lay.estimate_position(bg, style, (30, 36), lay.LayoutConfig(lambda4=0.5), maps=maps)

        def off(p):
            cy, cx = p.centre
            return math.hypot(cy - 63.5, cx - 63.5)
        assert off(p1) < off(p0)

    @pytest.mark.parametrize("seed", range(3))
    def test_rotation_direct(self, seed):
        rng = np.random.default_rng(seed)
        U = lay._normalize(fixtures.smooth_texture((96, 96), seed, sigma=4)[..., 0]) + 0.5
        cfg = lay.LayoutConfig(enable_rotation=True, enable_scale=True)
        p = lay.search_placement(U, (int(rng.integers(18, 30)), int(rng.integers(24, 40))), cfg)
        assert abs(p.total_cost - direct_rotated_cost(U, p)) <= 0.01 * direct_rotated_cost(U, p)

    def test_rotation_inside(self):
        U = np.random.default_rng(4).random((64, 64))
        cfg = lay.LayoutConfig(enable_rotation=True)
        p = lay.search_placement(U, (20, 30), cfg)
        corners = p.corners()
        assert corners.min() >= -0.5 - 1e-6 and corners.max() <= 63.5 + 1e-6

    def test_rotation_preference(self):
        # a low-cost diagonal band is best covered by a tilted rectangle
        yy, xx = np.mgrid[:96, :96]
        ang = math.pi / 10
        d = np.abs(-(xx - 47.5) * math.sin(ang) + (yy - 47.5) * math.cos(ang))
        U = (d > 5).astype(float)
        cfg = lay.LayoutConfig(enable_rotation=True)
        p = lay.search_placement(U, (8, 50), cfg)
        assert abs(p.rotation - ang) <= math.pi / 60 + 1e-9

    def test_scale_grid(self):
        cfg = lay.LayoutConfig(enable_scale=True)
        np.testing.assert_allclose(cfg.scales(), [0.8, 0.9, 1.0, 1.1, 1.2])
        assert len(lay.LayoutConfig(enable_rotation=True).rotations()) == 21

    def test_too_big(self):
        with pytest.raises(NoValidPlacement):
            lay.search_placement(np.ones((10, 10)), (11, 4))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            lay.LayoutConfig(lambda4=-1)
        with pytest.raises(ValueError):
            lay.LayoutConfig(scale_range=(1.2, 0.8, 0.1))


def two_shapes(gap=6, size=10):
    t = np.zeros((size + 4, 2 * size + gap + 4), bool)
    t[2:2 + size, 2:2 + size] = True
    t[2:2 + size, 2 + size + gap:2 + 2 * size + gap] = True
    return t


class TestMultishape:
    def test_split_order(self):
        shapes = lay.split_shapes(two_shapes())
        assert [s.id for s in shapes] == [0, 1]
        assert shapes[0].box[1] < shapes[1].box[1]

    def test_uniform_no_move(self):
        U = np.ones((60, 80))
        p = lay.search_placement(U, two_shapes().shape)
        out = lay.refine_multishape(p, lay.split_shapes(two_shapes()), U)
        assert all(dx == 0 and dy == 0 for _, dx, dy in out.per_shape)
        assert len(out.trace) == 2

    def test_single_shape_descends(self):
        rng = np.random.default_rng(0)
        U = rng.random((50, 50))
        t = np.zeros((12, 12), bool)
        t[2:10, 2:10] = True
        p = lay.LayoutPlacement(x=20, y=20, w=12, h=12, anchor=(20, 20))
        out = lay.refine_multishape(p, lay.split_shapes(t), U)
        assert all(b <= a for a, b in zip(out.trace, out.trace[1:]))
        # the final box is the exhaustive best in its +-8 neighbourhood
        best = min(U[22 + dy:30 + dy, 22 + dx:30 + dx].sum()
                   for dy in range(-8, 9) for dx in range(-8, 9))
        assert out.total_cost == pytest.approx(best, abs=1e-9)

    def test_v_valley(self):
        H, W = 80, 120
        yy, xx = np.mgrid[:H, :W].astype(float)
        valley = 38 + 0.3 * np.abs(xx - 60)
        U = np.abs(yy - valley) / 40
        text = two_shapes(gap=8, size=8)
        p = lay.LayoutPlacement(x=30, y=33, w=text.shape[1], h=text.shape[0], anchor=(33, 30))
        shapes = lay.split_shapes(text)
        out = lay.refine_multishape(p, shapes, U)
        d = {i: (dx, dy) for i, dx, dy in out.per_shape}
        assert d[0][1] != d[1][1]
        c0 = np.add(shapes[0].centroid, (33, 30))
        c1 = np.add(shapes[1].centroid, (33, 30))
        start = np.linalg.norm(c0 - c1)
        end = np.linalg.norm((c0 + d[0][::-1]) - (c1 + d[1][::-1]))
        assert end >= start - 1e-9
        # each shape sits at a constrained optimum of its own neighbourhood
        for i, s in enumerate(shapes):
            by, bx, bh, bw = s.box
            j = 1 - i
            cj = (c1 if j else c0) + d[j][::-1]
            ci = c1 if i else c0
            own = U[33 + by + d[i][1]:33 + by + d[i][1] + bh, 30 + bx + d[i][0]:30 + bx + d[i][0] + bw].sum()
            for dy in range(-8, 9):
                for dx in range(-8, 9):
                    if np.linalg.norm(ci + (dy, dx) - cj) < start - 1e-9:
                        continue
                    alt = U[33 + by + dy:33 + by + dy + bh, 30 + bx + dx:30 + bx + dx + bw].sum()
                    assert alt >= own - 1e-9

    def test_json_roundtrip(self):
        p = lay.LayoutPlacement(x=3.0, y=4.0, w=10, h=5, scale=1.1, rotation=0.1,
                                total_cost=0.5, per_shape=[(0, 1, -2)])
        q = lay.LayoutPlacement.from_json(p.to_json())
        assert q.to_json() == p.to_json()
        assert set(p.to_json()) == {"x", "y", "w", "h", "scale", "rotation_rad", "per_shape",
                                    "total_cost"}


class TestEstimator:
    def test_fit_predict(self, scene):
        bg, style = scene
        est = lay.LayoutEstimator(lambda4=0.0, enable_multishape=True).fit(bg, style)
        p = est.predict(two_shapes())
        assert p.w == two_shapes().shape[1]
        assert len(p.per_shape) == 2
        assert est.cost_.shape == bg.shape[:2]
