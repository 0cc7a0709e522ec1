"""Command-line pipeline: simulate -> subsample -> reconstruct -> evaluate.

Every subcommand writes ``manifest.json`` into its ``--out`` directory
holding the full resolved argument set; ``apirnet --manifest FILE`` replays
it. Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ComputeError, ValidationError
from .grappa import calibrate, merge, predict, save_kernel
from .io import (
    read_grid,
    read_json,
    read_mask,
    read_masks,
    read_real,
    write_grid,
    write_json,
    write_mask,
    write_masks,
    write_pgm,
    write_real,
)
from .kspace import apply_mask, make_masks, mse, normalize, reconstruct_image, rms_combine
from .model import ArchitectureSpec, LevelSchedule, apirnet_reconstruct, desk_schedule, save_checkpoint
from .noise import Dataset, Method, ReplicaConfig, compare_methods, run_replicas
from .phantom import PhantomSpec, add_noise, benchmark_spec, make_coils, make_phantom, simulate_kspace

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_COMPUTE = 3
EXIT_IO = 4
THREADS_ENV = "APIRNET_THREADS"

log = logging.getLogger("apirnet")

# flags that never change results and are left out of manifests
_RUNTIME_ONLY = ("func", "manifest", "replay_out", "threads", "verbose")


class InputPathError(OSError):
    pass


def _pair(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers in {text!r}") from None


def _triple(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected AxBxC, got {text!r}")
    return tuple(int(p) for p in parts)


def _window(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected min:max, got {text!r}")
    return float(lo), float(hi)


def _widths(text: str) -> tuple[int, ...]:
    return tuple(int(w) for w in text.split(","))


def _require(*paths) -> None:
    """Fail before any compute if an input is missing."""
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        candidates = [p, p.parent / (p.name + ".json")]
        if not any(c.exists() for c in candidates):
            raise InputPathError(f"input not found: {p}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _record(args, out: Path, results: dict) -> None:
    params = {k: v for k, v in vars(args).items() if k not in _RUNTIME_ONLY}
    write_json(out / "manifest.json", {"version": __version__, "command": args.command, "args": params,
                                       "results": results})


def _method_from_args(args) -> Method:
    schedule = None
    if args.method == "apirnet":
        if args.schedule:
            sched = LevelSchedule.from_list(read_json(args.schedule))
        else:
            sched = desk_schedule(read_grid(args.kspace).pe_shape)
        if args.epoch_scale != 1.0:
            sched = sched.scaled_epochs(args.epoch_scale)
        schedule = tuple(sched.to_list())
    return Method(args.method, lam=args.lam, geometry=tuple(args.kernel), widths=tuple(args.widths),
                  schedule=schedule, seed=args.seed, hard_dc=args.hard_dc, reset_optimizer=args.reset_optimizer,
                  residual=args.residual)


# ---- subcommands -------------------------------------------------------------------------------


def cmd_simulate(args) -> dict:
    if args.spec:
        _require(args.spec)
        spec = PhantomSpec.from_dict(read_json(args.spec))
    else:
        spec = benchmark_spec(tuple(args.shape))
    out = _out_dir(args)
    image, support = make_phantom(spec)
    coils = make_coils(spec.shape, args.coils, args.seed)
    kspace = simulate_kspace(image, coils)
    write_grid(out / "kspace", kspace)
    write_real(out / "truth", image)
    write_mask(out / "support", support)
    return {"phantom": spec.to_dict(), "support_pixels": int(support.sum())}


def cmd_subsample(args) -> dict:
    _require(args.kspace)
    out = _out_dir(args)
    full = read_grid(args.kspace)
    masks = make_masks(full.pe_shape, args.accel, args.acs, args.offsets)
    full, record = normalize(full, masks.m_sampled)
    # round to on-disk precision so the reference matches anything rebuilt from the files
    full = full.with_data(full.data.astype(np.complex64))
    acquired = apply_mask(add_noise(full, masks.m_sampled, args.sigma, args.seed), masks.m_sampled)
    write_grid(out / "kspace", acquired)
    write_grid(out / "full", full)
    write_real(out / "reference", reconstruct_image(full))
    write_masks(out / "masks", masks)
    return {
        "normalization_scale": record.scale,
        "sampled": int(masks.m_sampled.sum()),
        "pattern": int(masks.m_pattern.sum()),
        "acs": int(masks.m_acs.sum()),
    }


def cmd_reconstruct(args) -> dict:
    _require(args.kspace, args.masks, args.schedule)
    out = _out_dir(args)
    kspace = read_grid(args.kspace)
    masks = read_masks(args.masks)
    results: dict = {"method": args.method}
    if args.method == "zero":
        final = apply_mask(kspace, masks.m_sampled)
    elif args.method == "grappa":
        kernel = calibrate(kspace, masks, tuple(args.kernel), args.lam)
        final = merge(kspace, predict(kspace, masks, kernel), masks)
        save_kernel(out / "kernel", kernel)
        results["weight_norm"] = kernel.weight_norm()
        results["residuals"] = {f"{o[0]},{o[1]}": r for o, r in kernel.residuals.items()}
    else:
        method = _method_from_args(args)
        arch = ArchitectureSpec(kspace.n_coils, method.widths, residual=method.residual)
        schedule = method.level_schedule(kspace.pe_shape)
        final, _, run = apirnet_reconstruct(kspace, masks, arch, schedule, args.seed, args.hard_dc,
                                            args.reset_optimizer, log=log.info)
        for i, params in enumerate(run.checkpoints, start=1):
            save_checkpoint(out / "checkpoints" / f"level{i}", params, level=i,
                            normalization_scale=run.normalization.scale)
        save_checkpoint(out / "checkpoints" / "final", run.params, normalization_scale=run.normalization.scale)
        results["training"] = run.manifest()
    image = reconstruct_image(final)
    write_grid(out / "kspace", final)
    write_real(out / "image", image)
    return results


def cmd_evaluate(args) -> dict:
    _require(args.image, args.reference, args.region)
    image = read_real(args.image)
    reference = read_real(args.reference)
    region = read_mask(args.region) if args.region else None
    metrics = {"mse": mse(image, reference, region), "mse_full": mse(image, reference)}
    if args.out:
        out = _out_dir(args)
        write_json(out / "metrics.json", metrics)
        write_real(out / "error", np.abs(image - reference))
    print(json.dumps(metrics))
    return metrics


def cmd_noisemap(args) -> dict:
    _require(args.kspace, args.masks, args.support, args.schedule)
    out = _out_dir(args)
    kspace = read_grid(args.kspace)
    masks = read_masks(args.masks)
    cfg = ReplicaConfig(_method_from_args(args), args.sigma, args.replicas, args.base_seed)
    nmap = run_replicas(kspace, masks, cfg, log=log.info)
    region = read_mask(args.support) if args.support else None
    write_real(out / "std", nmap.std)
    write_real(out / "amplification", nmap.amplification)
    write_real(out / "mean", nmap.mean)
    write_pgm(out / "amplification.pgm", nmap.amplification, (0.0, float(nmap.amplification.max())))
    summary = {
        "method": cfg.method.to_dict(),
        "seeds": nmap.seeds,
        "amplification_mean": nmap.spatial_mean(region),
        "amplification_max": float(nmap.amplification.max() if region is None else nmap.amplification[region].max()),
        "amplification_window": [0.0, float(nmap.amplification.max())],
    }
    print(json.dumps({k: summary[k] for k in ("amplification_mean", "amplification_max")}))
    return summary


def cmd_compare(args) -> dict:
    _require(args.kspace, args.masks, args.support)
    full = read_grid(args.kspace)
    masks = read_masks(args.masks)
    support = read_mask(args.support) if args.support else np.ones(masks.shape, bool)
    methods = []
    for token in args.methods.split(","):
        kind, _, lam = token.partition(":")
        schedule = desk_schedule(full.pe_shape).scaled_epochs(args.epoch_scale).to_list() if kind == "apirnet" else None
        methods.append(Method(kind, lam=float(lam or 0.0), geometry=tuple(args.kernel), widths=tuple(args.widths),
                              schedule=schedule, seed=args.seed))
    dataset = Dataset(full, masks, support, args.sigma, args.noise_seed)
    report = compare_methods(dataset, methods, args.replicas, args.base_seed, _out_dir(args), log.info)
    return {"methods": report["methods"]}


def cmd_emit_image(args) -> dict:
    _require(args.grid)
    grid = read_grid(args.grid)
    if grid.domain == "kspace":
        image = reconstruct_image(grid)
    elif grid.n_coils == 1 and not grid.data.imag.any():
        image = grid.data[0].real
    else:
        image = rms_combine(grid)
    if image.ndim == 3:
        image = image[image.shape[0] // 2]
    path = write_pgm(args.output, image, args.window)
    return {"output": str(path), "window": list(args.window) if args.window else [float(image.min()), float(image.max())]}


# ---- parser ------------------------------------------------------------------------------------


def _add_method_flags(p: argparse.ArgumentParser, default_method: str = "grappa") -> None:
    p.add_argument("--method", choices=("zero", "grappa", "apirnet"), default=default_method,
                   help="reconstruction method (default: %(default)s)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="GRAPPA Tikhonov weight (default: %(default)s)")
    p.add_argument("--kernel", type=_triple, default=(1, 5, 5),
                   help="GRAPPA kernel extents FExPE1xPE2 in lattice points (default: 1x5x5)")
    p.add_argument("--widths", type=_widths, default=(64, 48, 32, 24),
                   help="APIR-Net hidden feature widths, comma separated (default: 64,48,32,24)")
    p.add_argument("--schedule", help="JSON list of {region, lr, epochs} levels (default: desk schedule)")
    p.add_argument("--epoch-scale", type=float, default=1.0, help="multiply every level's epochs (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="network initialization seed (default: %(default)s)")
    p.add_argument("--hard-dc", action="store_true", help="APIR-Net: keep measured values at sampled positions")
    p.add_argument("--reset-optimizer", action="store_true", help="APIR-Net: clear Adam moments at each level")
    p.add_argument("--residual", action="store_true", help="APIR-Net: add the network input to its output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apirnet", description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", help="replay the run recorded in this manifest.json")
    parser.add_argument("--out", dest="replay_out", help="with --manifest: write the replay here instead")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"BLAS thread cap (default: ${THREADS_ENV} or library default)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="phantom + coil k-space")
    p.add_argument("--spec", help="phantom spec JSON (default: built-in benchmark phantom)")
    p.add_argument("--shape", type=_pair, default=(64, 64), help="grid for the built-in phantom (default: 64x64)")
    p.add_argument("--coils", type=int, default=8, help="number of receive coils (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="coil-map seed (default: %(default)s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("subsample", help="normalize, add noise at acquired positions, mask")
    p.add_argument("--kspace", required=True, help="fully sampled k-space grid")
    p.add_argument("--accel", type=_pair, default=(2, 2), help="pattern acceleration R1xR2 (default: 2x2)")
    p.add_argument("--acs", type=_pair, default=(24, 24), help="ACS block a1xa2 (default: 24x24)")
    p.add_argument("--offsets", type=_pair, default=None, help="lattice offsets o1xo2 (default: centered)")
    p.add_argument("--sigma", type=float, default=0.05, help="noise std per component after normalization "
                                                             "(default: %(default)s)")
    p.add_argument("--seed", type=int, default=1, help="noise seed (default: %(default)s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("reconstruct", help="complete subsampled k-space")
    p.add_argument("--kspace", required=True)
    p.add_argument("--masks", required=True, help="masks directory written by subsample")
    _add_method_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="MSE of an image against a reference")
    p.add_argument("--image", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--region", help="mask restricting the MSE (default: whole grid)")
    p.add_argument("--out", help="also write metrics.json and the error image here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("noisemap", help="pseudo multiple replica amplification map")
    p.add_argument("--kspace", required=True, help="noiseless fully sampled (normalized) k-space")
    p.add_argument("--masks", required=True)
    p.add_argument("--support", help="mask for the spatial-mean summary (default: whole grid)")
    _add_method_flags(p)
    p.add_argument("--sigma", type=float, default=0.05, help="replica noise std (default: %(default)s)")
    p.add_argument("--replicas", type=int, default=50, help="number of replicas (default: %(default)s)")
    p.add_argument("--base-seed", type=int, default=100, help="replica r uses seed base+r (default: %(default)s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noisemap)

    p = sub.add_parser("compare", help="MSE/error/noise report over several methods")
    p.add_argument("--kspace", required=True, help="noiseless fully sampled (normalized) k-space")
    p.add_argument("--masks", required=True)
    p.add_argument("--support", help="evaluation region mask (default: whole grid)")
    p.add_argument("--methods", default="zero,grappa:0,grappa:1,apirnet",
                   help="comma list of kind[:lambda] (default: %(default)s)")
    p.add_argument("--kernel", type=_triple, default=(1, 5, 5), help="GRAPPA kernel extents (default: 1x5x5)")
    p.add_argument("--widths", type=_widths, default=(64, 48, 32, 24), help="APIR-Net widths (default: 64,48,32,24)")
    p.add_argument("--epoch-scale", type=float, default=1.0, help="APIR-Net epoch multiplier (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="network seed (default: %(default)s)")
    p.add_argument("--sigma", type=float, default=0.05, help="noise std (default: %(default)s)")
    p.add_argument("--noise-seed", type=int, default=1, help="seed of the compared acquisition (default: %(default)s)")
    p.add_argument("--replicas", type=int, default=0, help="noise-map replicas per method, 0 = skip (default: 0)")
    p.add_argument("--base-seed", type=int, default=100, help="replica base seed (default: %(default)s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("emit-image", help="16-bit PGM from a grid")
    p.add_argument("--grid", required=True, help="image or k-space grid (k-space is reconstructed first)")
    p.add_argument("--window", type=_window, default=None, help="min:max display window (default: data range)")
    p.add_argument("--output", required=True, help="destination .pgm")
    p.set_defaults(func=cmd_emit_image)
    return parser


_PATH_ARGS = ("spec", "kspace", "masks", "schedule", "image", "reference", "region", "support", "grid", "out", "output")


def _absolutize(args) -> None:
    for key in _PATH_ARGS:
        value = getattr(args, key, None)
        if value:
            setattr(args, key, str(Path(value).resolve()))


def _replay_args(parser: argparse.ArgumentParser, manifest_path: str, out_override: str | None):
    manifest = read_json(manifest_path)
    command = manifest.get("command")
    sub = parser._subparsers._group_actions[0].choices.get(command) if parser._subparsers else None
    if sub is None:
        raise ValidationError(f"{manifest_path}: unknown command {command!r}")
    args = sub.parse_args([a for a in _required_placeholders(sub)])
    for key, value in manifest["args"].items():
        if isinstance(value, list):
            value = tuple(value)
        setattr(args, key, value)
    args.command = command
    if out_override:
        setattr(args, "out" if command != "emit-image" else "output", out_override)
    return args


def _required_placeholders(sub: argparse.ArgumentParser) -> list[str]:
    argv = []
    for action in sub._actions:
        if action.required and action.option_strings:
            argv += [action.option_strings[0], "_"]
    return argv


def _limit_threads(n: int | None):
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else None
    if n is None:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.manifest:
            args = _replay_args(parser, args.manifest, args.replay_out)
        elif args.command is None:
            parser.print_help()
            return EXIT_VALIDATION
        _absolutize(args)
        limiter = _limit_threads(args.threads if hasattr(args, "threads") else None)
        try:
            results = args.func(args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
        out = getattr(args, "out", None)
        if out:
            _record(args, Path(out), results)
        return EXIT_OK
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ComputeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
