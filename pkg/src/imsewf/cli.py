"""Command-line interface: ``imsewf {partition,allocate,sweep,fit-bep,render}``.

Every command writes its artifacts under ``--out`` and prints their paths.
On failure it prints one ``error: <kind>: <message>`` line to stderr and
exits with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .imageio import read_mask, read_planes, read_profile, write_planes
from .imagemodel import ImportanceProfile, partition
from .links import StreamLink
from .optimizer import allocate, kkt_residual
from .phy.bep import fit_bep
from .phy.chain import measure_ber
from .phy.channel import rayleigh_gain
from .sim import db_to_linear, load_source, run_trial, snr_to_budget, sweep

log = logging.getLogger("imsewf")


def _fmt(x) -> str:
    return f"{x:.9g}"


def _num(x):
    """9-significant-digit float for JSON; non-finite values become null."""
    return float(_fmt(x)) if np.isfinite(x) else None


def _config(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    return load_config(args.config, overrides)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_partition(args) -> list[Path]:
    cfg = _config(args)
    if args.image:
        if not args.mask:
            raise ConfigError("--image requires --mask")
        planes = read_planes(args.image)
        segmap = read_mask(args.mask)
    else:
        src = load_source(cfg)
        planes, segmap = list(src.planes), src.segmap
    if args.profile:
        profile = read_profile(args.profile)
    elif cfg.profile:
        profile = read_profile(cfg.profile)
    else:
        profile = ImportanceProfile.build(cfg.segment_weights, planes[0].depth)
    streams = partition(planes[0], segmap, profile)
    path = _out(args) / "manifest.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stream", "b", "s", "length", "weight"])
        for k, st in enumerate(streams):
            w.writerow([k, st.bit_index, st.segment_index, st.length, _fmt(st.weight_product)])
    return [path]


def _read_manifest(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty manifest")
    try:
        return [(int(r["b"]), int(r["s"]), float(r["length"]), float(r["weight"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: bad manifest row ({exc})") from None


def _read_gains(path, count):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        gains = [float(r["gain"]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: expected a 'gain' column of |h|^2 values ({exc})") from None
    if len(gains) != count:
        raise ValueError(f"{path}: {len(gains)} gains for {count} streams")
    return gains


def cmd_allocate(args) -> list[Path]:
    cfg = _config(args)
    rows = _read_manifest(args.manifest)
    if args.gains:
        gains = _read_gains(args.gains, len(rows))
    elif cfg.channel == "rayleigh":
        gains = np.abs(rayleigh_gain(np.random.SeedSequence(cfg.seed), len(rows))) ** 2
    else:
        gains = np.ones(len(rows))
    links = [StreamLink(length, weight, float(g), cfg.noise_var) for (_, _, length, weight), g in zip(rows, gains)]
    budget = snr_to_budget(db_to_linear(args.snr_db), links, cfg.link)
    result = allocate(args.strategy, links, cfg.link, budget, cfg.tolerance)
    out = _out(args)
    csv_path, json_path = out / "allocation.csv", out / "allocation.json"
    csv_path.write_text(result.to_csv(links, [(b, s) for b, s, _, _ in rows]))
    summary = result.summary()
    summary["snr_db"] = args.snr_db
    summary["budget_ratio"] = float(_fmt(result.consumed_power / budget)) if budget > 0 else None
    if args.strategy != "equal" and result.active.any():
        weights = None if args.strategy == "proposed" else 1.0
        summary["kkt_residual"] = float(_fmt(kkt_residual(result, links, cfg.link, weights)))
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return [csv_path, json_path]


def cmd_sweep(args) -> list[Path]:
    cfg = _config(args)
    t0 = time.perf_counter()
    result, images = sweep(cfg, jobs=args.jobs)
    log.info("sweep of %d trials took %.1f s", len(result.records), time.perf_counter() - t0)
    return result.write(_out(args), images)


def _read_samples(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = "ber" if rows and "ber" in rows[0] else "measured_ber"
    try:
        return [(float(r["snr_db"]), float(r[col])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: expected columns snr_db and ber ({exc})") from None


def cmd_fit_bep(args) -> list[Path]:
    cfg = _config(args)
    if args.samples:
        points = _read_samples(args.samples)
    else:
        grid = np.arange(args.snr_min, args.snr_max + 1e-9, args.snr_step)
        points = []
        for i, snr_db in enumerate(grid):
            ber = measure_ber(db_to_linear(snr_db), args.bits, cfg.link, cfg.codec, seed=(cfg.seed, i))
            log.info("snr %.2f dB: ber %.3g", snr_db, ber)
            points.append((float(snr_db), ber))
    used = [(db_to_linear(s), b) for s, b in points if 0 < b <= args.max_ber]
    bep = fit_bep(used)
    out = _out(args)
    ber_path, json_path = out / "ber.csv", out / "bep.json"
    with ber_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "measured_ber", "model_ber"])
        for s, b in points:
            w.writerow([_fmt(s), _fmt(b), _fmt(float(bep.probability(db_to_linear(s), clamp=False)))])
    fitted = [s for s, b in points if 0 < b <= args.max_ber]
    json_path.write_text(json.dumps({
        "alpha": float(_fmt(bep.alpha)),
        "beta": float(_fmt(bep.beta)),
        "snr_scale": "linear",
        "fitted_snr_db": [min(fitted), max(fitted)],
        "points_used": len(used),
        "codec": cfg.codec.describe(),
        "modulation_order": cfg.link.modulation_order,
        "source": str(args.samples) if args.samples else "simulated awgn",
    }, indent=2, sort_keys=True) + "\n")
    return [ber_path, json_path]


def cmd_render(args) -> list[Path]:
    cfg = _config(args)
    src = load_source(cfg)
    rec = run_trial(src, cfg, args.strategy, args.snr_db, args.realization, keep_reconstruction=True)
    out = _out(args)
    ext = "pgm" if len(rec.reconstruction) == 1 else "ppm"
    img = out / f"render_{args.strategy}_{_fmt(args.snr_db)}dB_r{args.realization}.{ext}"
    write_planes(img, rec.reconstruction)
    meta = out / img.with_suffix(".json").name
    meta.write_text(json.dumps({
        "strategy": rec.strategy,
        "snr_db": rec.snr_db,
        "realization": rec.realization,
        "imse": _num(rec.imse),
        "normalized_imse_db": _num(rec.normalized_imse_db),
        "assumption1_violation_rate": _num(rec.assumption1_violation_rate),
        "recon_sha256": rec.recon_hash,
    }, indent=2, sort_keys=True) + "\n")
    return [img, meta]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides sim.seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="imsewf", description="Importance-aware power allocation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", parents=[common], help="write the sub-stream manifest")
    p.add_argument("--image")
    p.add_argument("--mask")
    p.add_argument("--profile")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("allocate", parents=[common], help="allocate power for one channel draw")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gains", help="CSV with a 'gain' column (|h|^2 per stream)")
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--strategy", choices=["proposed", "ma", "equal"], default="proposed")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("sweep", parents=[common], help="run the SNR sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-bep", parents=[common], help="fit the exponential BER model")
    p.add_argument("--samples", help="CSV with snr_db and ber columns; simulate if omitted")
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=14.0)
    p.add_argument("--snr-step", type=float, default=1.0)
    p.add_argument("--bits", type=int, default=200_000)
    p.add_argument("--max-ber", type=float, default=0.2, help="ignore points above this BER")
    p.set_defaults(func=cmd_fit_bep)

    p = sub.add_parser("render", parents=[common], help="reconstruct the image for one trial")
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--strategy", choices=["proposed", "ma", "equal"], default="proposed")
    p.add_argument("--realization", type=int, default=0)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        paths = args.func(args)
    except Exception as exc:  # noqa: BLE001 - report every failure as one line
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
