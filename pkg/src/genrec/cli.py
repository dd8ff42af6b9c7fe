"""Command line entry point: ``genrec {synth,recover,interpolate,gradcheck,metrics}``.

Frame numbers on the command line (``--holdout``, ``--from``, ``--to``) are
1-based, matching how sequences are usually described; everything inside the
library is 0-based.
"""

from __future__ import annotations

import argparse
import io as _io
import logging
import os
import sys
import zipfile
from pathlib import Path

import numpy as np

from . import __version__, io
from .generator import preset, random_weights
from .gradcheck import gradcheck, make_instance
from .latent_space import write_basis_csv
from .measurement import GaussianDense, Identity, MeasurementSet, PixelMask, make_operators, measure_sequence
from .metrics import report
from .recovery import Constraint, DivergedError, SolverConfig, interpolate_frames, interpolate_holdout, prefit, run
from .synthdata import SequenceSpec, make_sequence
from .tensor_core import SeededRng

log = logging.getLogger("genrec")


def resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("GENREC_SEED")
    return int(env) if env else 0


def parse_frames(text: str) -> list[int]:
    """``"11-15"`` or ``"3,5,7-9"`` -> 0-based sorted indices."""
    out = set()
    for part in filter(None, (p.strip() for p in text.split(","))):
        a, _, b = part.partition("-")
        lo, hi = int(a), int(b or a)
        if lo < 1 or hi < lo:
            raise ValueError(f"bad frame range {part!r}")
        out.update(range(lo - 1, hi))
    return sorted(out)


# --------------------------------------------------------------------------- measurement bundle


def save_bundle(path, meas: MeasurementSet, image_shape) -> None:
    """Deterministic zip of .npy arrays (fixed timestamps, so reruns are byte-identical)."""
    arrays = {"image_shape": np.array(image_shape), "noise_std": np.array(meas.noise_std)}
    for t, (op, y) in enumerate(zip(meas.operators, meas.measurements)):
        arrays[f"y_{t}"] = y
        if isinstance(op, GaussianDense):
            arrays[f"gaussian_{t}"] = op.matrix
        elif isinstance(op, PixelMask):
            arrays[f"mask_{t}"] = np.concatenate([[op.n], op.kept])
        else:
            arrays[f"identity_{t}"] = np.array([op.n])
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = _io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def load_bundle(path) -> tuple[MeasurementSet, tuple]:
    data = np.load(path, allow_pickle=False)
    t_count = sum(1 for k in data.files if k.startswith("y_"))
    ops, ys = [], []
    for t in range(t_count):
        ys.append(data[f"y_{t}"])
        if f"gaussian_{t}" in data.files:
            ops.append(GaussianDense(data[f"gaussian_{t}"]))
        elif f"mask_{t}" in data.files:
            m = data[f"mask_{t}"]
            ops.append(PixelMask(int(m[0]), m[1:]))
        else:
            ops.append(Identity(int(data[f"identity_{t}"][0])))
    return MeasurementSet(ops, ys, float(data["noise_std"])), tuple(int(v) for v in data["image_shape"])


# --------------------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    velocities = None
    if args.velocity:
        nums = [int(v) for v in args.velocity.split(",")]
        velocities = tuple(zip(nums[0::2], nums[1::2]))
    spec = SequenceSpec(
        kind=args.kind,
        frames=args.frames,
        size=args.size,
        deg_per_frame=args.deg_per_frame if args.deg_per_frame is not None else (1.0 if args.kind == "color_wheel" else 2.0),
        slices=args.slices,
        glyphs=args.glyphs,
        velocities=velocities,
        seed=seed,
    )
    seq = make_sequence(spec)
    out = Path(args.out)
    try:
        io.write_frames(out, seq.frames)
        manifest = {"genrec_version": __version__, "command": "synth", **{k: v for k, v in vars(spec).items()}}
        (out / "manifest.txt").write_text(io.format_config(manifest))
    except OSError as exc:
        print(f"error: cannot write to {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    print(f"wrote {len(seq)} frames to {out}")
    return 0


RECOVER_DEFAULTS = {
    "arch": "grayscale",
    "weights": None,
    "init": "random",
    "prefit_epochs": 200,
    "measure": "identity",
    "noise": 0.0,
    "shared_mask": False,
    "mode": "joint",
    "rank": None,
    "affine": None,
    "grouped": None,
    "similarity": False,
    "lam": None,
    "lr_z": 1.0,
    "lr_gamma": 0.01,
    "step_control": "fixed",
    "epochs": 2000,
    "tol": 1e-6,
    "restarts": 1,
    "holdout": "",
    "workers": 1,
    "seed": None,
}


def _bool(v) -> bool:
    return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")


def resolve_recover_options(args) -> dict:
    """Defaults < config file < explicit flags."""
    opts = dict(RECOVER_DEFAULTS)
    if args.config:
        cfg = io.parse_config(Path(args.config).read_text())
        unknown = set(cfg) - set(opts) - {"input", "bundle", "out"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        opts.update(cfg)
        for key in ("input", "bundle", "out"):
            if getattr(args, key) is None and key in cfg:
                setattr(args, key, cfg[key])
    for key in RECOVER_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            opts[key] = val
    opts["seed"] = resolve_seed(opts["seed"])
    for key in ("prefit_epochs", "epochs", "restarts", "workers"):
        opts[key] = int(opts[key])
    for key in ("noise", "lr_z", "lr_gamma", "tol"):
        opts[key] = float(opts[key])
    opts["shared_mask"] = _bool(opts["shared_mask"])
    opts["similarity"] = _bool(opts["similarity"])
    return opts


def solver_config(opts: dict) -> SolverConfig:
    if opts["grouped"]:
        constraint = Constraint.parse("grouped:" + str(opts["grouped"]))
    elif opts["rank"] is not None:
        constraint = Constraint("rank", rank=int(opts["rank"]))
    elif opts["affine"] is not None:
        constraint = Constraint("affine", dim=int(opts["affine"]))
    else:
        constraint = Constraint()
    lam = 1.0
    if opts["lam"] is not None:
        lam = float(opts["lam"])
    elif opts["similarity"]:
        lam = 0.6
    mode = {"latent": "latent_only", "latent_only": "latent_only", "joint": "joint"}[opts["mode"]]
    return SolverConfig(
        mode=mode,
        constraint=constraint,
        similarity_lambda=lam,
        lr_z=opts["lr_z"],
        lr_gamma=opts["lr_gamma"],
        step_control=opts["step_control"],
        epochs=opts["epochs"],
        tol=opts["tol"],
        seed=opts["seed"],
        holdout=frozenset(parse_frames(opts["holdout"])) if opts["holdout"] else frozenset(),
        restarts=opts["restarts"],
        workers=opts["workers"],
    )


def cmd_recover(args) -> int:
    try:
        opts = resolve_recover_options(args)
        config = solver_config(opts)
    except (ValueError, KeyError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    if args.input is None and args.bundle is None:
        print("usage error: need --input DIR or --bundle FILE", file=sys.stderr)
        return 2
    if args.out is None:
        print("usage error: need --out DIR", file=sys.stderr)
        return 2

    rng = SeededRng(opts["seed"])
    truth = None
    if args.input is not None:
        try:
            truth = io.read_frames(args.input)
        except (FileNotFoundError, io.FormatError) as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return 2

    if opts["weights"]:
        init = io.load_weights(opts["weights"])
    else:
        arch = preset(opts["arch"])
        init = random_weights(arch, rng.spawn(10))
    arch = init.arch

    if args.bundle is not None:
        meas, image_shape = load_bundle(args.bundle)
        if tuple(image_shape) != arch.image_shape:
            print(f"usage error: bundle frames are {image_shape}, generator makes {arch.image_shape}", file=sys.stderr)
            return 2
    else:
        if truth.shape[1:] != arch.image_shape:
            print(f"usage error: frames are {truth.shape[1:]}, generator makes {arch.image_shape}", file=sys.stderr)
            return 2
        ops = make_operators(opts["measure"], arch.n_pixels, len(truth), rng.spawn(11), shared_mask=opts["shared_mask"])
        meas = measure_sequence(truth, ops, opts["noise"], rng.spawn(12))

    if opts["init"] == "prefit" and not opts["weights"]:
        if truth is None:
            print("usage error: --init prefit needs --input frames", file=sys.stderr)
            return 2
        train_spec = SequenceSpec("rotating_sprite", frames=8, size=arch.out_size, glyphs="8", seed=opts["seed"])
        train = make_sequence(train_spec).frames
        if train.shape[1] != arch.out_channels:
            train = np.repeat(train[:, :1], arch.out_channels, axis=1)
        init = prefit(train, init, SolverConfig(lr_z=opts["lr_z"], lr_gamma=opts["lr_gamma"],
                                                epochs=opts["prefit_epochs"], step_control=opts["step_control"],
                                                seed=opts["seed"] + 1))

    try:
        result = run(config, meas, init, rng.spawn(13), truth=truth)
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_frames(out / "recon", result.frames)
    io.write_residuals(out / "residuals.csv", result.residual_history)
    io.save_weights(out / "weights.genrec", result.weights)
    write_basis_csv(result.basis, out / "latent_basis.csv")
    io.write_latents(out / "latents.csv", result.z)
    save_bundle(out / "measurements.npz", meas, arch.image_shape)
    if result.metrics is not None:
        result.metrics.write_csv(out / "metrics.csv")
    if config.holdout:
        try:
            idx, _, frames = interpolate_holdout(result, config.holdout)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        io.write_frames(out / "interpolated", frames, indices=idx)
        if truth is not None:
            rep = report(truth[idx], frames)
            rep.write_csv(out / "holdout_metrics.csv", frame_indices=idx)
    manifest = {"genrec_version": __version__, "command": "recover", "input": args.input, "bundle": args.bundle}
    manifest.update({k: v for k, v in opts.items()})
    manifest.update({"constraint": str(config.constraint), "lambda": config.similarity_lambda,
                     "final_loss": repr(result.final_loss), "restart": result.restart})
    (out / "manifest.txt").write_text(io.format_config(manifest))
    summary = f"final data loss {result.final_loss:.6g} after {len(result.residual_history)} epochs"
    if result.metrics is not None:
        summary += f"; mean PSNR {result.mean_psnr:.2f} dB"
    print(summary)
    return 0


def cmd_interpolate(args) -> int:
    run_dir = Path(args.run)
    weights = io.load_weights(run_dir / "weights.genrec")
    z = io.read_latents(run_dir / "latents.csv")
    a, b = args.start - 1, args.stop - 1
    if not (0 <= a < z.shape[1] and 0 <= b < z.shape[1]):
        print(f"usage error: frames must lie in 1..{z.shape[1]}", file=sys.stderr)
        return 2
    codes, frames = interpolate_frames(weights, z[:, a], z[:, b], args.steps)
    out = Path(args.out)
    io.write_frames(out, frames)
    io.write_latents(out / "codes.csv", codes)
    print(f"wrote {len(frames)} interpolated frames to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    weights, z, meas = make_instance(resolve_seed(args.seed), args.arch)
    rep = gradcheck(weights, z, meas, probes=args.probes, h=args.h, threshold=args.threshold)
    for line in rep.lines():
        print(line)
    return 0 if rep.passed else 1


def cmd_metrics(args) -> int:
    ref = io.read_frames(args.reference)
    est = io.read_frames(args.estimate)
    if ref.shape != est.shape:
        print(f"usage error: {ref.shape} vs {est.shape}", file=sys.stderr)
        return 2
    rep = report(ref, est)
    if args.out:
        rep.write_csv(args.out)
    print("frame_index,mse,psnr")
    for i, (e, p) in enumerate(zip(rep.mse, rep.psnr)):
        print(f"{i},{e!r},{p!r}")
    print(f"# mean PSNR {rep.mean_psnr:.4f} dB")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genrec", description="Recover video sequences with a generator prior and latent constraints.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a procedural video sequence as PGM/PPM frames")
    s.add_argument("--kind", required=True, choices=("rotating_sprite", "color_wheel", "translating_sprites"))
    s.add_argument("--frames", type=int, default=32)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--deg-per-frame", type=float, default=None)
    s.add_argument("--slices", type=int, default=12)
    s.add_argument("--glyphs", default="3")
    s.add_argument("--velocity", default=None, help="vr1,vc1[,vr2,vc2] integer pixels per frame")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("recover", help="reconstruct a sequence from measurements")
    r.add_argument("--config", default=None, help="flat 'key = value' file; flags override it")
    r.add_argument("--input", default=None, help="directory of ground-truth frames")
    r.add_argument("--bundle", default=None, help="measurements.npz from an earlier run")
    r.add_argument("--out", default=None)
    r.add_argument("--arch", default=None)
    r.add_argument("--weights", default=None, help="initial GENREC1 weights file")
    r.add_argument("--init", default=None, choices=("random", "prefit"))
    r.add_argument("--prefit-epochs", type=int, default=None)
    r.add_argument("--measure", default=None, help="identity | gaussian:M | mask:P")
    r.add_argument("--noise", type=float, default=None)
    r.add_argument("--shared-mask", action="store_true", default=None)
    r.add_argument("--mode", default=None, choices=("latent", "latent_only", "joint"))
    r.add_argument("--rank", type=int, default=None)
    r.add_argument("--affine", type=int, default=None)
    r.add_argument("--grouped", default=None, help="R:D[:start,start,...] (0-based group starts)")
    r.add_argument("--similarity", action="store_true", default=None)
    r.add_argument("--lambda", dest="lam", type=float, default=None)
    r.add_argument("--lr-z", type=float, default=None)
    r.add_argument("--lr-gamma", type=float, default=None)
    r.add_argument("--step-control", default=None, choices=("fixed", "backtrack"))
    r.add_argument("--epochs", type=int, default=None)
    r.add_argument("--tol", type=float, default=None)
    r.add_argument("--restarts", type=int, default=None)
    r.add_argument("--holdout", default=None, help="1-based frames, e.g. 11-15")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(func=cmd_recover)

    i = sub.add_parser("interpolate", help="decode codes interpolated between two frames of a run")
    i.add_argument("--run", required=True, help="output directory of a recover run")
    i.add_argument("--from", dest="start", type=int, required=True, help="1-based frame")
    i.add_argument("--to", dest="stop", type=int, required=True, help="1-based frame")
    i.add_argument("--steps", type=int, default=1000)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interpolate)

    g = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    g.add_argument("--arch", default="tiny16")
    g.add_argument("--probes", type=int, default=50)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--threshold", type=float, default=1e-6)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(func=cmd_gradcheck)

    m = sub.add_parser("metrics", help="per-frame MSE/PSNR between two frame directories")
    m.add_argument("--reference", required=True)
    m.add_argument("--estimate", required=True)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
