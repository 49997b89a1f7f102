import csv
import hashlib
import json

import numpy as np
import pytest

from glyphforge import cli, fixtures, raster


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    fixtures.make_fixtures(d)
    small = d / "text_small.png"
    raster.write_mask(small, fixtures.letter_t(32, 5))
    return d


FAST = ["-L", "2", "--em-iters", "2", "--pm-iters", "2"]


class TestFixtures:
    def test_manifest_and_determinism(self, tmp_path):
        assert cli.run(["fixtures", "--out-dir", str(tmp_path / "a")]) == 0
        assert cli.run(["fixtures", "--out-dir", str(tmp_path / "b")]) == 0
        man = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
        pngs = sorted(p.name for p in (tmp_path / "a").glob("*.png"))
        assert man["count"] == len(pngs) == len(man["files"])
        for p in pngs:
            assert sha(tmp_path / "a" / p) == sha(tmp_path / "b" / p)
        for entry in man["files"]:
            assert sha(tmp_path / "a" / entry["file"]) == entry["sha256"]


class TestSubcommands:
    def test_guidance_deterministic(self, corpus, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"S{k}.png"
            assert cli.run(["guidance", "--style", str(corpus / "blob_texture.png"),
                            "--out", str(out), "--seed", "7"]) == 0
            outs.append(sha(out))
        assert outs[0] == outs[1]

    def test_guidance_debug(self, corpus, tmp_path):
        assert cli.run(["guidance", "--style", str(corpus / "two_tone_0.png"), "--out",
                        str(tmp_path / "S.png"), "--debug-dir", str(tmp_path / "dbg")]) == 0
        sal = raster.read_pfm(tmp_path / "dbg" / "saliency.pfm")
        assert sal.shape == (128, 128) and 0 <= sal.min() and sal.max() <= 1 + 1e-6

    def test_structure_levels(self, corpus, tmp_path):
        rc = cli.run(["structure", "--text", str(corpus / "text_small.png"), "--guidance",
                      str(corpus / "wavy_silhouettes.png"), "-L", "2", "--out",
                      str(tmp_path / "Th.png"), str(tmp_path / "Sh.png"),
                      "--debug-dir", str(tmp_path / "dbg")])
        assert rc == 0
        assert raster.read_mask(tmp_path / "Sh.png").shape == (96, 96)
        assert len(list((tmp_path / "dbg").glob("stroke_mask_*.pfm"))) == 3

    def test_stylize_energy_csv(self, corpus, tmp_path):
        rc = cli.run(["stylize", "--text", str(corpus / "text_small.png"), "--style",
                      str(corpus / "blob_texture.png"), "--out", str(tmp_path / "o.png"),
                      "--dump-energy", str(tmp_path / "e.csv"), *FAST])
        assert rc == 0
        rows = list(csv.DictReader(open(tmp_path / "e.csv", encoding="utf-8")))
        assert rows and {"appearance", "distribution", "repetition", "saliency", "total"} <= set(rows[0])
        assert raster.read_image(tmp_path / "o.png").shape == (32, 32, 3)

    def test_recolor(self, corpus, tmp_path):
        assert cli.run(["recolor", "--style", str(corpus / "colour_style.png"), "--background",
                        str(corpus / "colour_background.png"), "--out", str(tmp_path / "r.png")]) == 0

    def test_layout_and_compose(self, corpus, tmp_path):
        lj = tmp_path / "layout.json"
        rc = cli.run(["layout", "--text", str(corpus / "text_small.png"), "--style",
                      str(corpus / "blob_texture.png"), "--background",
                      str(corpus / "background_0.png"), "--out", str(lj),
                      "--debug-dir", str(tmp_path / "maps")])
        assert rc == 0
        data = json.loads(lj.read_text(encoding="utf-8"))
        assert set(data) == {"x", "y", "w", "h", "scale", "rotation_rad", "per_shape", "total_cost"}
        assert (tmp_path / "maps" / "cost_total.pfm").exists()
        tj = tmp_path / "t.json"
        rc = cli.run(["compose", "--text", str(corpus / "text_small.png"), "--style",
                      str(corpus / "blob_texture.png"), "--background",
                      str(corpus / "background_0.png"), "--out", str(tmp_path / "p.png"),
                      "--layout", str(lj), "--timings", str(tj), *FAST])
        assert rc == 0
        report = json.loads(tj.read_text(encoding="utf-8"))
        assert set(report["stages"]) == {"guidance", "position", "color", "structure", "texture"}
        assert report["total"] >= report["stage_sum"]
        out = raster.read_image(tmp_path / "p.png")
        bg = raster.read_image(corpus / "background_0.png")
        x, y, w, h = int(data["x"]), int(data["y"]), data["w"], data["h"]
        keep = np.ones(bg.shape[:2], bool)
        keep[y:y + h, x:x + w] = False
        assert np.array_equal(out[keep], bg[keep])

    def test_inpaint(self, corpus, tmp_path):
        m = np.zeros((128, 128), bool)
        m[50:60, 50:60] = True
        raster.write_mask(tmp_path / "m.png", m)
        assert cli.run(["inpaint", "--image", str(corpus / "two_tone_1.png"), "--mask",
                        str(tmp_path / "m.png"), "--out", str(tmp_path / "f.png"),
                        "--em-iters", "2"]) == 0


class TestErrors:
    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.png"
        rc = cli.run(["recolor", "--style", str(missing), "--background", str(missing),
                      "--out", str(tmp_path / "o.png")])
        assert rc == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_value(self, corpus, tmp_path):
        rc = cli.run(["layout", "--text", str(corpus / "text_small.png"), "--style",
                      str(corpus / "blob_texture.png"), "--background",
                      str(corpus / "background_0.png"), "--out", str(tmp_path / "l.json"),
                      "--lambda4", "-1"])
        assert rc == 2

    def test_bad_usage(self):
        assert cli.run(["frobnicate"]) == 2
        assert cli.run(["layout"]) == 2

    def test_runtime_error(self, corpus, tmp_path):
        big = tmp_path / "big.png"
        raster.write_mask(big, np.ones((200, 200), bool))
        rc = cli.run(["layout", "--text", str(big), "--style", str(corpus / "blob_texture.png"),
                      "--background", str(corpus / "background_0.png"),
                      "--out", str(tmp_path / "l.json")])
        assert rc == 3


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# defaults for this run\nlambda4 = 0.25\nseed = 3\nscale = true\n",
                       encoding="utf-8")
        base = ["layout", "--text", "t", "--style", "s", "--background", "b", "--out", "o",
                "--config", str(cfg)]
        args = cli.parse_args(base)
        assert args.lambda4 == 0.25 and args.seed == 3 and args.scale is True
        args = cli.parse_args(base + ["--lambda4", "0.75"])
        assert args.lambda4 == 0.75 and args.seed == 3

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nonsense = 1\n", encoding="utf-8")
        with pytest.raises(cli.UsageError):
            cli.parse_args(["fixtures", "--out-dir", "x", "--config", str(cfg)])

    def test_threads_env(self, monkeypatch):
        args = cli.parse_args(["fixtures", "--out-dir", "x"])
        monkeypatch.setenv("GLYPHFORGE_THREADS", "2")
        assert cli.resolve_threads(args) == 2
        args = cli.parse_args(["fixtures", "--out-dir", "x", "--threads", "1"])
        assert cli.resolve_threads(args) == 1
        monkeypatch.setenv("GLYPHFORGE_THREADS", "many")
        with pytest.raises(cli.UsageError):
            cli.resolve_threads(cli.parse_args(["fixtures", "--out-dir", "x"]))

    def test_threads_same_output(self, corpus, tmp_path):
        outs = []
        for n in ("1", "2"):
            out = tmp_path / f"l{n}.json"
            assert cli.run(["layout", "--text", str(corpus / "text_small.png"), "--style",
                            str(corpus / "blob_texture.png"), "--background",
                            str(corpus / "background_1.png"), "--out", str(out),
                            "--threads", n]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
