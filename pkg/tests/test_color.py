import numpy as np
import pytest
from skimage import color as skcolor
from sklearn.exceptions import NotFittedError

from glyphforge import color, fixtures


def rel_err(got, want):
    return np.abs(got - want) / np.maximum(np.abs(want), 1.0)


class TestCategorize:
    def test_prototypes_self_assign(self):
        for i, name in enumerate(color.NAMES):
            img = np.full((4, 4, 3), np.array(color.BASIC_COLOURS[name]) / 255.0)
            st = color.categorize(img)
            assert np.all(st.labels == i)

    def test_pure_red(self):
        rgb = np.array(color.BASIC_COLOURS["red"]) / 255.0
        st = color.categorize(np.full((8, 8, 3), rgb))
        red = color.NAMES.index("red")
        assert st.counts[red] == 64
        np.testing.assert_allclose(st.mean[red], skcolor.rgb2lab(rgb[None, None])[0, 0])

    def test_black_white(self):
        img = np.zeros((8, 8, 3))
        img[:, 4:] = 1.0
        st = color.categorize(img)
        assert st.counts[color.NAMES.index("black")] == 32
        assert st.counts[color.NAMES.index("white")] == 32
        assert st.counts.sum() == 64

    @pytest.mark.parametrize("seed", range(3))
    def test_recount(self, seed):
        img = np.random.default_rng(seed).random((10, 12, 3))
        st = color.categorize(img)
        lab = skcolor.rgb2lab(img).reshape(-1, 3)
        groups = {}
        for px in lab:
            d = [((px - p) ** 2).sum() for p in color.PROTOTYPES]
            groups.setdefault(int(np.argmin(d)), []).append(px)
        assert sum(len(v) for v in groups.values()) == 120
        for c, pts in groups.items():
            pts = np.array(pts)
            assert st.counts[c] == len(pts)
            np.testing.assert_allclose(st.mean[c], pts.mean(0), atol=1e-9)
            np.testing.assert_allclose(st.std[c], pts.std(0), atol=1e-9)


class TestTransfer:
    def test_identity(self):
        style, _ = fixtures.colour_pair(0)
        np.testing.assert_allclose(color.transfer_colors(style, style), style, atol=1e-6)

    def test_single_category_mean(self):
        rng = np.random.default_rng(0)
        style = np.clip(np.array([0.2, 0.55, 0.25]) + rng.normal(0, 0.01, (16, 16, 3)), 0, 1)
        bg = np.clip(np.array([0.15, 0.6, 0.22]) + rng.normal(0, 0.02, (16, 16, 3)), 0, 1)
        out, info = color.transfer_colors(style, bg, return_info=True)
        green = color.NAMES.index("green")
        assert info["matched"][green]
        lab = skcolor.rgb2lab(out)
        np.testing.assert_allclose(lab.reshape(-1, 3).mean(0), info["target"].mean[green], atol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_two_category_stats(self, seed):
        style, bg = fixtures.colour_pair(seed)
        out, info = color.transfer_colors(style, bg, return_info=True)
        lab = skcolor.rgb2lab(out)
        src, dst = info["source"], info["target"]
        checked = 0
        for c in np.nonzero(info["matched"])[0]:
            m = src.labels == c
            if info["clipped"][m].any():
                continue
            checked += 1
            assert rel_err(lab[m].mean(0), dst.mean[c]).max() <= 0.02
            assert rel_err(lab[m].std(0), dst.std[c]).max() <= 0.02
        assert checked >= 2

    def test_idempotent(self):
        style, bg = fixtures.colour_pair(1)
        once = color.transfer_colors(style, bg)
        twice = color.transfer_colors(once, bg)
        assert np.sqrt(np.mean((twice - once) ** 2)) < 1e-4

    def test_affine_within_category(self):
        style, bg = fixtures.colour_pair(2)
        out, info = color.transfer_colors(style, bg, return_info=True)
        lab_in, lab_out = skcolor.rgb2lab(style), skcolor.rgb2lab(out)
        red = info["source"].labels == color.NAMES.index("red")
        x, y, z = lab_in[red][:3]
        fx, fy, fz = lab_out[red][:3]
        # midpoints map to midpoints under an affine map
        scale = info["scale"][color.NAMES.index("red")]
        np.testing.assert_allclose(fx - fy, scale * (x - y), atol=1e-6)
        np.testing.assert_allclose(fx - fz, scale * (x - z), atol=1e-6)

    def test_rare_category_uses_global(self):
        style, bg = fixtures.colour_pair(0)
        style = style.copy()
        style[0, 0] = np.array(color.BASIC_COLOURS["blue"]) / 255.0
        bg = bg.copy()
        bg[0, 0] = style[0, 0]
        _, info = color.transfer_colors(style, bg, return_info=True)
        blue = color.NAMES.index("blue")
        assert not info["matched"][blue]
        g_scale, g_off = color._affine(info["source"].global_mean, info["source"].global_std,
                                       info["target"].global_mean, info["target"].global_std)
        np.testing.assert_allclose(info["scale"][blue], g_scale)
        np.testing.assert_allclose(info["offset"][blue], g_off)

    def test_gamut(self):
        rng = np.random.default_rng(5)
        out = color.transfer_colors(rng.random((16, 16, 3)) * 0.2, rng.random((16, 16, 3)))
        assert out.min() >= 0 and out.max() <= 1


class TestEstimator:
    def test_fit_transform(self):
        style, bg = fixtures.colour_pair(3)
        est = color.ColorTransfer().fit(bg)
        np.testing.assert_array_equal(est.transform(style), color.transfer_colors(style, bg))

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            color.ColorTransfer().transform(np.zeros((4, 4, 3)))

    def test_bad_param(self):
        with pytest.raises(ValueError):
            color.ColorTransfer(min_fraction=2).fit(np.zeros((4, 4, 3)))
