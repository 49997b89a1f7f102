"""Command-line front-end: ``glyphforge <subcommand> ...``.

Exit status is 0 on success, 2 when inputs or options are invalid (nothing
has been computed yet) and 3 when the computation itself fails.
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import embedding, fixtures, guidance, layout, raster, structure, texture
from .color import transfer_colors

log = logging.getLogger("glyphforge")

STAGES = ("guidance", "position", "color", "structure", "texture")


class UsageError(Exception):
    """Bad options or inputs, detected before any compute."""


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (falls back to $GLYPHFORGE_THREADS)")
    p.add_argument("--config", type=Path, default=None,
                   help="plain key=value file; command-line flags take precedence")
    p.add_argument("--timings", type=Path, default=None, help="write a timing report (JSON)")
    p.add_argument("--debug-dir", type=Path, default=None, help="dump intermediate maps here")
    p.add_argument("-v", "--verbose", action="store_true")


def _structure_opts(p):
    p.add_argument("-L", "--levels", dest="L", type=int, default=7)
    p.add_argument("--top-resolution", type=int, default=64)
    p.add_argument("--boundary-patch", type=int, default=9)
    p.add_argument("--lss-iterations", type=int, default=5)


def _texture_opts(p):
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=0.5)
    p.add_argument("--lambda3", type=float, default=0.01)
    p.add_argument("--patch", type=int, default=9)
    p.add_argument("--em-iters", type=int, default=6)
    p.add_argument("--pm-iters", type=int, default=5)


def _layout_opts(p):
    p.add_argument("--lambda4", type=float, default=0.5)
    p.add_argument("--scale", action="store_true", help="search over text scale")
    p.add_argument("--rotate", action="store_true", help="search over text rotation")
    p.add_argument("--multishape", action="store_true", help="refine each shape separately")


def build_parser():
    parser = argparse.ArgumentParser(prog="glyphforge",
                                     description="Text stylization and seamless embedding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("guidance", help="binary guidance map of a style image")
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--cell", type=int, default=16)
    p.add_argument("--smoothing", type=float, default=0.015)
    _common(p)

    p = sub.add_parser("structure", help="bidirectional structure transfer")
    p.add_argument("--text", type=Path, required=True)
    p.add_argument("--guidance", type=Path, required=True)
    p.add_argument("--out", type=Path, nargs=2, required=True, metavar=("T_HAT", "S_HAT"))
    _structure_opts(p)
    _common(p)

    p = sub.add_parser("stylize", help="stylize a text image with a style image")
    p.add_argument("--text", type=Path, required=True)
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--guidance", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--dump-energy", type=Path, default=None, help="per-iteration energy CSV")
    _structure_opts(p)
    _texture_opts(p)
    _common(p)

    p = sub.add_parser("recolor", help="match style colours to a background")
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--background", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _common(p)

    p = sub.add_parser("layout", help="find where the text should go")
    p.add_argument("--text", type=Path, required=True)
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--background", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _layout_opts(p)
    _common(p)

    p = sub.add_parser("compose", help="full pipeline into a background")
    p.add_argument("--text", type=Path, required=True)
    p.add_argument("--style", type=Path, required=True)
    p.add_argument("--background", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--layout", type=Path, default=None, help="reuse a layout.json")
    p.add_argument("--margin", type=int, default=embedding.MARGIN)
    _layout_opts(p)
    _structure_opts(p)
    _texture_opts(p)
    _common(p)

    p = sub.add_parser("inpaint", help="structure-guided hole filling")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--sketch", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--margin", type=int, default=embedding.MARGIN)
    _structure_opts(p)
    _texture_opts(p)
    _common(p)

    p = sub.add_parser("fixtures", help="write the synthetic test corpus")
    p.add_argument("--out-dir", type=Path, required=True)
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def read_config(path):
    """Parse a ``key = value`` file (``#`` comments, blank lines allowed)."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(action, value):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        v = value.lower()
        if v not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise UsageError(f"{action.dest}: expected a boolean, got {value!r}")
        return v in ("1", "true", "yes", "on")
    if action.nargs not in (None, "?"):
        return [action.type(v) if action.type else v for v in value.split()]
    try:
        return action.type(value) if action.type else value
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{action.dest}: {exc}") from None


def parse_args(argv):
    """Parse with precedence flags > config file > defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    if not args.config.is_file():
        raise UsageError(f"config file not found: {args.config}")
    values = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    unknown = sorted(set(values) - set(actions) - {"config", "help"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    subparser.set_defaults(**{k: _coerce(actions[k], v) for k, v in values.items()})
    return parser.parse_args(argv)


def resolve_threads(args):
    n = args.threads
    if n is None:
        env = os.environ.get("GLYPHFORGE_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise UsageError(f"GLYPHFORGE_THREADS must be an integer, got {env!r}") from None
    if n is not None and n < 1:
        raise UsageError("threads must be >= 1")
    return n


def apply_threads(n):
    """Bound OpenCV's worker pool.  The compiled kernels are single-threaded
    and every stage is deterministic, so outputs do not depend on ``n``."""
    if n is None:
        return
    import cv2

    cv2.setNumThreads(n)


def _need(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def structure_config(args):
    return structure.StructureConfig(L=args.L, top_resolution=args.top_resolution,
                                     boundary_patch=args.boundary_patch,
                                     lss_iterations=args.lss_iterations)


def texture_config(args):
    return texture.TextureConfig(lambda1=args.lambda1, lambda2=args.lambda2,
                                 lambda3=args.lambda3, patch=args.patch,
                                 em_iters_per_level=args.em_iters, pm_iters=args.pm_iters,
                                 rng_seed=args.seed)


def layout_config(args):
    return layout.LayoutConfig(lambda4=args.lambda4, enable_scale=args.scale,
                               enable_rotation=args.rotate, enable_multishape=args.multishape,
                               seed=args.seed)


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _debug(args, name):
    args.debug_dir.mkdir(parents=True, exist_ok=True)
    return args.debug_dir / name


# ---------------------------------------------------------------------------
# Subcommands.  Each has a ``prepare`` half (validation only) and returns a
# callable that performs the work and fills ``timings``.
# ---------------------------------------------------------------------------

def cmd_guidance(args, timings):
    _need(args.style)
    if args.cell < 4:
        raise UsageError("--cell must be >= 4")
    if args.smoothing <= 0:
        raise UsageError("--smoothing must be > 0")
    style = raster.read_image(args.style)

    def work():
        t0 = time.perf_counter()
        mask, details = guidance.extract_guidance(style, args.smoothing, args.cell, args.seed,
                                                  return_details=True)
        timings["guidance"] = time.perf_counter() - t0
        raster.write_mask(args.out, mask)
        if args.debug_dir:
            from skimage.segmentation import find_boundaries
            raster.write_image(_debug(args, "smoothed.png"), details["smoothed"])
            raster.write_mask(_debug(args, "superpixel_boundaries.png"),
                              find_boundaries(details["superpixels"].labels))
            raster.write_pfm(_debug(args, "saliency.pfm"), details["saliency"])
        return {"images": {"style": style}}
    return work


def cmd_structure(args, timings):
    _need(args.text, args.guidance)
    cfg = structure_config(args)
    T, S = raster.read_mask(args.text), raster.read_mask(args.guidance)

    def work():
        t0 = time.perf_counter()
        T_hat, levels = structure.forward_transfer(T, S, cfg, return_levels=True)
        S_hat = structure.backward_transfer(S, T_hat, cfg)
        timings["structure"] = time.perf_counter() - t0
        raster.write_mask(args.out[0], T_hat)
        raster.write_mask(args.out[1], S_hat)
        if args.debug_dir:
            for lv in levels:
                raster.write_pfm(_debug(args, f"stroke_mask_{lv['level']:02d}.pfm"),
                                 np.broadcast_to(lv["M"], lv["T"].shape))
        return {"images": {"text": T, "style": S}}
    return work


def _energy_csv(path, trace):
    cols = ["level", "iteration", "appearance", "distribution", "repetition", "saliency", "total"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for row in trace:
            w.writerow(row)


def cmd_stylize(args, timings):
    _need(args.text, args.style, args.guidance)
    s_cfg, t_cfg = structure_config(args), texture_config(args)
    T, style = raster.read_mask(args.text), raster.read_image(args.style)
    S = raster.read_mask(args.guidance) if args.guidance else None
    if S is not None and S.shape != style.shape[:2]:
        raise UsageError("--guidance and --style differ in size")

    def work():
        nonlocal S
        if S is None:
            t0 = time.perf_counter()
            S = guidance.extract_guidance(style, seed=args.seed)
            timings["guidance"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        T_hat, S_hat = structure.structure_transfer(T, S, s_cfg)
        timings["structure"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        out, info = texture.stylize(T_hat, S_hat, style, text=T, config=t_cfg, return_trace=True)
        timings["texture"] = time.perf_counter() - t0
        raster.write_image(args.out, out)
        if args.dump_energy:
            _energy_csv(args.dump_energy, info["trace"])
        if args.debug_dir:
            raster.write_mask(_debug(args, "text_hat.png"), T_hat)
            raster.write_mask(_debug(args, "style_hat.png"), S_hat)
        return {"images": {"text": T, "style": style}}
    return work


def cmd_recolor(args, timings):
    _need(args.style, args.background)
    style, bg = raster.read_image(args.style), raster.read_image(args.background)

    def work():
        t0 = time.perf_counter()
        out = transfer_colors(style, bg)
        timings["color"] = time.perf_counter() - t0
        raster.write_image(args.out, out)
        return {"images": {"style": style, "background": bg}}
    return work


def cmd_layout(args, timings):
    _need(args.text, args.style, args.background)
    cfg = layout_config(args)
    T = raster.read_mask(args.text)
    style, bg = raster.read_image(args.style), raster.read_image(args.background)

    def work():
        t0 = time.perf_counter()
        maps = layout.cost_maps(bg, style, cfg)
        placement = layout.place(bg, style, T, cfg, maps=maps)
        timings["position"] = time.perf_counter() - t0
        _write_json(args.out, placement.to_json())
        if args.debug_dir:
            for name, u in maps.items():
                raster.write_pfm(_debug(args, f"cost_{name}.pfm"), u)
            raster.write_pfm(_debug(args, "cost_total.pfm"), layout.combine(maps, cfg.lambda4))
        return {"images": {"text": T, "style": style, "background": bg}}
    return work


def cmd_compose(args, timings):
    _need(args.text, args.style, args.background, args.layout)
    l_cfg, s_cfg, t_cfg = layout_config(args), structure_config(args), texture_config(args)
    if args.margin < 0:
        raise UsageError("--margin must be >= 0")
    T = raster.read_mask(args.text)
    style, bg = raster.read_image(args.style), raster.read_image(args.background)
    placement = None
    if args.layout:
        try:
            placement = layout.LayoutPlacement.from_json(args.layout.read_text(encoding="utf-8"))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"{args.layout}: not a layout file ({exc})") from None

    def work():
        out, details = embedding.compose(T, style, bg, placement, l_cfg, s_cfg, t_cfg,
                                         margin=args.margin, seed=args.seed, timings=timings,
                                         return_details=True)
        raster.write_image(args.out, out)
        if args.debug_dir:
            _write_json(_debug(args, "layout.json"), details["placement"].to_json())
            raster.write_image(_debug(args, "style_recolored.png"), details["style_adjusted"])
            raster.write_mask(_debug(args, "text_hat.png"), details["text_hat"])
            raster.write_mask(_debug(args, "style_hat.png"), details["style_hat"])
            raster.write_image(_debug(args, "canvas.png"), details["synth"])
        return {"images": {"text": T, "style": style, "background": bg}}
    return work


def cmd_inpaint(args, timings):
    _need(args.image, args.mask, args.sketch)
    s_cfg, t_cfg = structure_config(args), texture_config(args)
    image, region = raster.read_image(args.image), raster.read_mask(args.mask)
    sketch = raster.read_mask(args.sketch) if args.sketch else None
    if region.shape != image.shape[:2] or (sketch is not None and sketch.shape != region.shape):
        raise UsageError("--image, --mask and --sketch must have the same size")

    def work():
        t0 = time.perf_counter()
        out = embedding.inpaint(image, region, sketch, s_cfg, t_cfg, margin=args.margin,
                                seed=args.seed)
        timings["texture"] = time.perf_counter() - t0
        raster.write_image(args.out, out)
        return {"images": {"image": image}}
    return work


def cmd_fixtures(args, timings):
    def work():
        manifest = fixtures.make_fixtures(args.out_dir, seed=args.seed)
        log.info("wrote %d fixtures to %s", manifest["count"], args.out_dir)
        return {"images": {}}
    return work


COMMANDS = {
    "guidance": cmd_guidance, "structure": cmd_structure, "stylize": cmd_stylize,
    "recolor": cmd_recolor, "layout": cmd_layout, "compose": cmd_compose,
    "inpaint": cmd_inpaint, "fixtures": cmd_fixtures,
}


def timing_report(timings, total, images):
    stages = {s: round(float(timings.get(s, 0.0)), 6) for s in STAGES}
    return {
        "stages": stages,
        "stage_sum": round(sum(stages.values()), 6),
        "total": round(max(total, sum(stages.values())), 6),
        "megapixels": {k: round(v.shape[0] * v.shape[1] / 1e6, 6) for k, v in images.items()},
    }


def run(argv=None):
    """Run one subcommand; returns the process exit status."""
    t_start = time.perf_counter()
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems itself
        return 0 if exc.code in (0, None) else 2
    except UsageError as exc:
        print(f"glyphforge: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    timings = {}
    try:
        apply_threads(resolve_threads(args))
        work = COMMANDS[args.command](args, timings)
    except (UsageError, ValueError, OSError) as exc:
        print(f"glyphforge: error: {exc}", file=sys.stderr)
        return 2
    try:
        info = work()
    except Exception as exc:  # report, do not dump a traceback at users
        log.debug("failure", exc_info=True)
        print(f"glyphforge: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if args.timings:
        _write_json(args.timings, timing_report(timings, time.perf_counter() - t_start,
                                                info.get("images", {})))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
