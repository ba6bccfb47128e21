"""Command-line surface.

Subcommands:

    gen-features  write a seeded synthetic backbone pyramid as tensor files
    forward       run the decoder over a pyramid, write per-pixel logits
    masks         dump the four canonical attention masks (binary + text)
    flops         analytic MAC/param report, variant comparison, affine fit
    gradcheck     finite-difference verification of every parameter group
    selftest      built-in oracle suites

stdout carries human-readable reports; files are the data channel. Any
failure prints exactly one machine-readable JSON line on stderr and exits
nonzero. MUSTER_THREADS, when set, must be a positive integer; kernels
currently execute single-threaded either way, and outputs never depend on
the value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analyzer, io, windowing
from .autodiff import finite_difference_check
from .decoder import decoder_forward, forward_loss, init_params, synth_backbone
from .errors import ConfigError, MusterError, TensorFileError
from .selftest import run_selftest

GRADCHECK_TOL = 1e-3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> _Parser:
    p = _Parser(prog="muster", description=__doc__, add_help=True)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-features", help="write a synthetic backbone pyramid")
    g.add_argument("--config", required=True, help="JSON run config")
    g.add_argument("--out", required=True, help="output directory for F*.mtsr")
    g.set_defaults(func=_cmd_gen_features)

    f = sub.add_parser("forward", help="run the decoder over a feature pyramid")
    f.add_argument("--config", required=True)
    f.add_argument("--features", required=True, help="directory holding F*.mtsr")
    f.add_argument("--out", required=True, help="logits tensor file to write")
    f.add_argument("--dump-stages", default=None, help="directory for per-stage outputs")
    f.set_defaults(func=_cmd_forward)

    m = sub.add_parser("masks", help="dump the four canonical attention masks")
    m.add_argument("--window", type=int, required=True)
    m.add_argument("--variant", choices=("standard", "light"), default="standard")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=_cmd_masks)

    fl = sub.add_parser("flops", help="analytic complexity report")
    fl.add_argument("--config", required=True)
    fl.add_argument(
        "--sizes",
        default=None,
        help="comma list of patch grids HxW for the affine fit, e.g. 24x24,48x24,48x48",
    )
    fl.add_argument("--json", dest="json_out", default=None, help="also write JSON report")
    fl.set_defaults(func=_cmd_flops)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gc.add_argument("--config", required=True)
    gc.add_argument("--eps", type=float, default=1e-4)
    gc.add_argument(
        "--max-coords",
        type=int,
        default=4,
        help="coordinates probed per parameter array",
    )
    gc.set_defaults(func=_cmd_gradcheck)

    st = sub.add_parser("selftest", help="run the built-in oracle suites")
    st.set_defaults(func=_cmd_selftest)
    return p


def _check_thread_env() -> None:
    raw = os.environ.get("MUSTER_THREADS")
    if raw is None:
        return
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"MUSTER_THREADS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ConfigError(f"MUSTER_THREADS must be >= 1, got {cap}")


def _feature_paths(directory: Path, n: int):
    return [directory / f"F{i}.mtsr" for i in range(n)]


def _cmd_gen_features(args) -> int:
    cfg, h_img, w_img = io.load_run_config(args.config)
    feats = synth_backbone(h_img, w_img, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(feats):
        io.write_tensor(out / f"F{i}.mtsr", f)
        print(f"F{i}: {f.shape[0]}x{f.shape[1]}x{f.shape[2]} -> {out / f'F{i}.mtsr'}")
    return 0


def _cmd_forward(args) -> int:
    cfg, _, _ = io.load_run_config(args.config)
    feat_dir = Path(args.features)
    feats = [io.read_tensor(p) for p in _feature_paths(feat_dir, cfg.num_stages)]
    params = init_params(cfg)
    if args.dump_stages:
        logits, stages = decoder_forward(feats, cfg, params, collect_stages=True)
        dump = Path(args.dump_stages)
        dump.mkdir(parents=True, exist_ok=True)
        for name, tensor in stages.items():
            io.write_tensor(dump / f"{name}.mtsr", tensor)
            print(f"{name}: {'x'.join(map(str, tensor.shape))} -> {dump / f'{name}.mtsr'}")
    else:
        logits = decoder_forward(feats, cfg, params)
    io.write_tensor(args.out, logits)
    print(f"logits: {'x'.join(map(str, logits.shape))} -> {args.out}")
    return 0


def _cmd_masks(args) -> int:
    m = args.window
    if args.variant == "standard":
        masks = windowing.canonical_masks(m)
    else:
        masks = windowing.canonical_light_masks(m)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in windowing.MASK_NAMES:
        mask = masks[name]
        io.write_tensor(out / f"{name}.mtsr", mask)
        (out / f"{name}.txt").write_text(windowing.render_mask(mask) + "\n")
        blocked = int(np.isneginf(mask).sum())
        print(f"{name}: {mask.shape[0]}x{mask.shape[1]}, {blocked} blocked pairs")
    return 0


def _parse_sizes(raw: str):
    sizes = []
    for part in raw.split(","):
        h, sep, w = part.strip().partition("x")
        if not sep or not h.isdigit() or not w.isdigit():
            raise ConfigError(f"bad --sizes entry {part!r}, want HxW")
        sizes.append((int(h), int(w)))
    return sizes


def _cmd_flops(args) -> int:
    cfg, h_img, w_img = io.load_run_config(args.config)
    hp, wp = h_img // 4, w_img // 4
    if args.sizes:
        sizes = _parse_sizes(args.sizes)
    else:
        sizes = [(hp, wp), (2 * hp, wp), (2 * hp, 2 * wp)]
    full, light, reduction = analyzer.compare_variants(cfg, hp, wp)
    fit = analyzer.verify_complexity_law(cfg, sizes)
    print(full.render())
    print()
    print(light.render())
    print()
    print(f"light vs standard total flops: {reduction * 100.0:.2f}% lower")
    print(fit)
    if args.json_out:
        doc = {
            "muster": full.to_dict(),
            "light": light.to_dict(),
            "light_reduction": reduction,
            "fit": {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "rel_residual": fit.rel_residual,
                "points": [{"h": h, "w": w, "flops": f} for h, w, f in fit.points],
            },
        }
        with open(args.json_out, "w", encoding="utf-8") as fobj:
            json.dump(doc, fobj, indent=2)
        print(f"json report -> {args.json_out}")
    return 0


def _cmd_gradcheck(args) -> int:
    if not (1e-6 <= args.eps <= 1e-3):
        raise ConfigError(f"--eps must lie in [1e-6, 1e-3], got {args.eps}")
    if args.max_coords < 1:
        raise ConfigError(f"--max-coords must be >= 1, got {args.max_coords}")
    cfg, h_img, w_img = io.load_run_config(args.config)
    feats = [
        f.astype(np.float64) for f in synth_backbone(h_img, w_img, cfg)
    ]
    params = init_params(cfg)
    report = finite_difference_check(
        lambda p: forward_loss(feats, cfg, p),
        params,
        eps=args.eps,
        max_coords=args.max_coords,
        seed=cfg.seed,
    )
    print(report)
    if not report.passed(GRADCHECK_TOL):
        print(f"FAILED: max relative error {report.max_rel_err:.3e} >= {GRADCHECK_TOL}")
        return 2
    print(f"passed: max relative error {report.max_rel_err:.3e} < {GRADCHECK_TOL}")
    return 0


def _cmd_selftest(args) -> int:
    results = run_selftest()
    worst = 0
    for name, passed, detail in results:
        print(f"{'ok  ' if passed else 'FAIL'} {name}: {detail}")
        if not passed:
            worst = 2
    return worst


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _check_thread_env()
        return args.func(args)
    except TensorFileError as e:
        return _fail(e.code, str(e))
    except MusterError as e:
        return _fail(type(e).__name__.removesuffix("Error").lower(), str(e))
    except OSError as e:
        return _fail("io", str(e))


if __name__ == "__main__":
    raise SystemExit(main())
