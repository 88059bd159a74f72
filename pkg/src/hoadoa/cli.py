"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical-contract
failure. Progress goes to stderr; results go to files and stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .baseline import beamwidth
from .dataset import DESK_ROOMS, SplitConfig, synth_split
from .metrics import write_evaluation
from .nn import ELU, BatchNorm, Conv2D, Dense, NNConfig, Normalize, build_crnn, grad_check, mse_loss
from .pipeline import ESTIMATORS, DataError, estimator_name, evaluate_manifest, extract_features
from .room import RoomSpec, SrirRequest, image_source_srir

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRAD_TOLERANCE = 1e-4
NN_CONFIGS = ((1, 256), (2, 256), (3, 512), (4, 512), (None, 512))

log = logging.getLogger("hoadoa")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    config: Path | None
    seed: int | None
    out: Path | None
    order: int | None
    feature: str | None
    workers: int

    def __post_init__(self):
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if self.order is not None and not 1 <= self.order <= 4:
            raise UsageError("--order must be in [1, 4]")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")


def _run_config(args) -> RunConfig:
    return RunConfig(
        args.command,
        Path(args.config) if args.config else None,
        args.seed,
        Path(args.out) if args.out else None,
        args.order,
        args.feature,
        args.workers,
    )


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def cmd_synth(args, run: RunConfig) -> int:
    d = _load_json(run.config)
    if args.split:
        d["split"] = args.split
        d.setdefault("room_count", DESK_ROOMS[args.split])
    if run.seed is not None:
        d["master_seed"] = run.seed
    if run.order is not None:
        d["ambisonics_order"] = run.order
    if run.feature:
        d["features"] = [run.feature]
    try:
        cfg = SplitConfig.from_dict(d)
        cfg.bounds.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid split config: {exc}") from exc
    out = run.out or Path("data") / cfg.split
    log.info("synthesizing %d scenes into %s with %d worker(s)", cfg.scene_count, out, run.workers)
    t0 = time.perf_counter()
    try:
        result = synth_split(cfg, out, run.workers)
    except OSError as exc:
        log.error("cannot write to %s: %s", out, exc)
        return EXIT_DATA
    log.info("done in %.1f s", time.perf_counter() - t0)
    print(f"manifest: {result.manifest_path}")
    print(f"scenes: {len(result.manifest['scenes'])}")
    if not result.changed:
        print("no changes")
    if result.errors:
        for err in result.errors:
            print(f"scene error: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_features(args, run: RunConfig) -> int:
    kind = run.feature or "magphase"
    changed, missing = extract_features(args.manifest, kind, run.order, run.workers)
    print(f"manifest: {args.manifest}")
    if not changed:
        print("no changes")
    if missing:
        for path in missing:
            print(f"missing sequence: {path}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_eval(args, run: RunConfig) -> int:
    order = run.order or 1
    if args.estimator == "pseudo-intensity" and run.order not in (None, 1):
        raise UsageError("pseudo-intensity uses first-order channels only; drop --order")
    records = evaluate_manifest(args.manifest, args.estimator, order, run.workers)
    name = estimator_name(args.estimator, order)
    out = run.out or Path(args.manifest).parent / "eval"
    summary = write_evaluation(out, name, records)
    overall = summary["estimators"][name]["overall"]
    print(f"{name}: {overall['count']} scenes, median error {overall['median']:.4f} deg -> {out}")
    return EXIT_OK


def expected_shapes(cfg: NNConfig, pool_sizes=(8, 8, 4)) -> list[tuple]:
    """Per-layer output shapes of the reference architecture table."""
    t, nf = cfg.frames, cfg.n_filter
    shapes, bins = [], cfg.bins
    for pool in pool_sizes:
        shapes += [(t, bins, nf)] * 3
        bins //= pool
        shapes += [(t, bins, nf)] * 2
    return shapes + [(t, 2 * nf)] * 5 + [(t, 3), (t, 3)]


def _grad_cases(rng):
    yield "conv2d", Conv2D("conv", 3, 4, rng), rng.standard_normal((2, 4, 8, 3))
    yield "batchnorm", BatchNorm("bn", 4), 1.0 + 2.0 * rng.standard_normal((2, 4, 8, 4))
    yield "elu", ELU("elu"), rng.standard_normal((2, 5, 6))
    yield "dense-elu", Dense("dense1", 6, 5, rng, activation="elu"), rng.standard_normal((2, 5, 6))
    yield "dense", Dense("dense2", 5, 3, rng), rng.standard_normal((2, 5, 5))
    x = rng.standard_normal((2, 5, 3))
    yield "normalize", Normalize("normalize"), 2.0 * x / np.linalg.norm(x, axis=-1, keepdims=True)


def cmd_nn_check(args, run: RunConfig) -> int:
    seed = run.seed or 0
    pools = (8, 8, 2) if args.inject_fault == "wrong-pooling" else (8, 8, 4)
    failures = 0
    print(f"{'config':<10} {'n_filter':>8} {'dim_in':>6}  shapes  output")
    for order, nf in NN_CONFIGS:
        cfg = NNConfig(order, nf)
        log.info("building %s (n_filter=%d)", cfg.label, nf)
        stack = build_crnn(cfg, seed, pool_sizes=pools)
        trace: list = []
        try:
            y = stack.forward(np.zeros((1,) + cfg.input_shape), trace=trace)[0]
            actual = [shape for _, shape in trace]
            shapes_ok = actual == expected_shapes(cfg) and [s for _, s in stack.shapes()] == actual
            unit_ok = bool(np.all(np.abs(np.linalg.norm(y, axis=-1) - 1.0) <= 1e-6)) and y.shape == (50, 3)
        except ValueError as exc:
            log.error("%s: %s", cfg.label, exc)
            shapes_ok = unit_ok = False
        ok = shapes_ok and unit_ok
        failures += not ok
        print(f"{cfg.label:<10} {nf:>8} {cfg.dim_in:>6}  {'pass' if shapes_ok else 'FAIL':<6}  {'pass' if unit_ok else 'FAIL'}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    print(f"{'layer':<10} {'max rel err':>12}")
    for name, layer, x in _grad_cases(rng):
        err = grad_check(layer, x)
        worst = max(worst, err)
        print(f"{name:<10} {err:>12.3e}")
    pred, target = rng.standard_normal((50, 3)), rng.standard_normal(3)
    _, g = mse_loss(pred, target)
    eps = 1e-5
    num = np.empty_like(pred)
    for idx in np.ndindex(pred.shape):
        p = pred.copy()
        p[idx] += eps
        up = mse_loss(p, target)[0]
        p[idx] -= 2 * eps
        num[idx] = (up - mse_loss(p, target)[0]) / (2 * eps)
    mse_err = float(np.max(np.abs(num - g) / np.maximum(np.abs(g), 1e-6)))
    worst = max(worst, mse_err)
    print(f"{'mse':<10} {mse_err:>12.3e}")
    grad_ok = worst < GRAD_TOLERANCE
    print(f"shape contract: {len(NN_CONFIGS) - failures}/{len(NN_CONFIGS)} pass")
    print(f"gradient check: max relative error {worst:.3e} ({'pass' if grad_ok else 'FAIL'})")
    return EXIT_OK if failures == 0 and grad_ok else EXIT_NUMERIC


def cmd_simulate_srir(args, run: RunConfig) -> int:
    d = _load_json(run.config)
    room = d.get("room", {})
    try:
        absorption = tuple(args.absorption or room.get("absorption", (0.5,)))
        if len(absorption) == 1:
            absorption *= 6
        spec = RoomSpec(tuple(args.room or room.get("dims", (6.0, 5.0, 3.0))), absorption)
        req = SrirRequest(
            spec,
            tuple(args.source or d.get("source", (4.0, 3.0, 1.5))),
            tuple(args.receiver or d.get("receiver", (2.0, 2.0, 1.5))),
            run.order or d.get("order", 4),
            d.get("sample_rate", 48000),
            d.get("max_reflection_order", 20),
            int(round(d.get("seconds", 0.5) * d.get("sample_rate", 48000))),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    srir = image_source_srir(req)
    out = run.out or Path("srir.wav")
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_wav(out, srir.hoa.data, req.sample_rate)
    print(json.dumps({
        "wav": str(out),
        "azimuth_deg": round(srir.doa_label.azimuth_deg, 4),
        "elevation_deg": round(srir.doa_label.elevation_deg, 4),
        "distance_m": round(srir.distance, 4),
        "arrivals": int(len(srir.arrivals.delays)),
        "rt60_s": round(spec.sabine_rt60(), 4),
    }))
    return EXIT_OK


def cmd_beamwidth(args, run: RunConfig) -> int:
    orders = [run.order] if run.order else [1, 2, 3, 4]
    for n in orders:
        print(f"{n},{beamwidth(n):.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file; flags override its values")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--order", type=int, help="ambisonics order, 1..4")
    common.add_argument("--feature", choices=("magphase", "intensity"))
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")

    p = _Parser(prog="hoadoa", description="HOA direction-of-arrival toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a dataset split")
    s.add_argument("--split", choices=sorted(DESK_ROOMS), help="split name; sets the desk-scale room count")

    f = sub.add_parser("features", parents=[common], help="write feature tensors for a split")
    f.add_argument("manifest")

    e = sub.add_parser("eval", parents=[common], help="evaluate a baseline estimator")
    e.add_argument("manifest")
    e.add_argument("--estimator", choices=ESTIMATORS, default="pseudo-intensity")

    n = sub.add_parser("nn-check", parents=[common], help="verify the network shape and gradient contracts")
    n.add_argument("--inject-fault", choices=("wrong-pooling",), help=argparse.SUPPRESS)

    r = sub.add_parser("simulate-srir", parents=[common], help="simulate one HOA room impulse response")
    r.add_argument("--room", type=float, nargs=3, metavar=("LX", "LY", "LZ"))
    r.add_argument("--absorption", type=float, nargs="+", help="one value or six (x0 x1 y0 y1 z0 z1)")
    r.add_argument("--source", type=float, nargs=3, metavar=("X", "Y", "Z"))
    r.add_argument("--receiver", type=float, nargs=3, metavar=("X", "Y", "Z"))

    sub.add_parser("beamwidth", parents=[common], help="print -3 dB beamwidths per order")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "eval": cmd_eval,
    "nn-check": cmd_nn_check,
    "simulate-srir": cmd_simulate_srir,
    "beamwidth": cmd_beamwidth,
}


def _setup_logging() -> None:
    level = os.environ.get("HOADOA_LOG", "info").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        run = _run_config(args)
        return COMMANDS[args.command](args, run)
    except UsageError as exc:
        print(f"hoadoa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, io.FormatError, FileNotFoundError) as exc:
        print(f"hoadoa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"hoadoa: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
