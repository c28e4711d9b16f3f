"""End-to-end experiments: allocate power per channel realization, push the
sub-streams through the link, and aggregate normalised IMSE over SNR."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .imageio import read_mask, read_planes, read_profile, write_planes
from .imagemodel import (
    ImagePlane,
    ImportanceProfile,
    SegmentMap,
    SubStream,
    partition,
    reassemble,
)
from .links import BepParams, LinkConfig, DEFAULT_BEP, StreamLink
from .metric import ImseReport, imse, mean_square
from .optimizer import DEFAULT_TOLERANCE, AllocationResult, allocate
from .phy.channel import analytic_bitflip_channel, rayleigh_gain
from .phy.chain import send_streams
from .phy.conv import CodecConfig

__all__ = [
    "DEFAULT_SEGMENT_WEIGHTS",
    "ExperimentConfig",
    "Source",
    "TrialRecord",
    "SweepResult",
    "TargetOutOfRange",
    "synthetic_scene",
    "load_source",
    "snr_to_budget",
    "stream_links",
    "run_trial",
    "sweep",
    "gain_at",
    "snr_required",
    "db_to_linear",
]

# stag, base, background
DEFAULT_SEGMENT_WEIGHTS = (0.4975, 0.4975, 0.0050)
IMSE_TARGET_DB = -26.0


class TargetOutOfRange(ValueError):
    pass


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    image: str | None = None
    mask: str | None = None
    profile: str | None = None
    synthetic_height: int = 64
    synthetic_width: int = 64
    segment_weights: tuple[float, ...] = DEFAULT_SEGMENT_WEIGHTS
    bit_weights: tuple[float, ...] | None = None
    link: LinkConfig = LinkConfig()
    codec: CodecConfig = CodecConfig()
    noise_var: float = 1.0
    channel: Literal["rayleigh", "awgn"] = "rayleigh"
    phy: Literal["analytic", "full"] = "analytic"
    snr_db: tuple[float, ...] = tuple(float(x) for x in range(0, 17, 2))
    realizations: int = 100
    strategies: tuple[str, ...] = ("proposed", "ma", "equal")
    seed: int = 0
    interleaver: bool = True
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if not self.snr_db:
            raise ValueError("snr grid must not be empty")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.channel not in ("rayleigh", "awgn"):
            raise ValueError(f"channel must be 'rayleigh' or 'awgn', got {self.channel!r}")
        if self.phy not in ("analytic", "full"):
            raise ValueError(f"phy must be 'analytic' or 'full', got {self.phy!r}")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        unknown = set(self.strategies) - {"proposed", "ma", "equal"}
        if unknown or not self.strategies:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        if (self.image is None) != (self.mask is None):
            raise ValueError("image and mask must be given together")
        if self.phy == "full" and abs(self.codec.rate - self.link.coding_rate) > 1e-12:
            raise ValueError(
                f"codec rate {self.codec.rate} differs from link coding rate {self.link.coding_rate}"
            )

    def metadata(self) -> dict:
        return {
            "image": self.image or f"synthetic {self.synthetic_height}x{self.synthetic_width}",
            "mask": self.mask,
            "channel": self.channel,
            "phy": self.phy,
            "interleaver": self.interleaver,
            "realizations": self.realizations,
            "seed": self.seed,
            "snr_db": list(self.snr_db),
            "strategies": list(self.strategies),
            "coding_rate": self.link.coding_rate,
            "modulation_order": self.link.modulation_order,
            "bep": {"alpha": self.link.bep.alpha, "beta": self.link.bep.beta},
            "codec": self.codec.describe(),
            "noise_var": self.noise_var,
            "tolerance": self.tolerance,
        }


def synthetic_scene(height: int = 64, width: int = 64, seed: int = 7) -> tuple[ImagePlane, SegmentMap]:
    """Deterministic 8-bit test scene with three segments:
    0 = animal-like foreground object, 1 = ground, 2 = sky background."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width] / np.array([height, width])[:, None, None]
    sky = 150 + 70 * y + 6 * np.sin(9 * x)
    ground = 95 + 20 * np.sin(23 * x + 7 * y) * np.cos(11 * y)
    img = np.where(y >= 0.72, ground, sky)
    labels = np.where(y >= 0.72, 1, 2)

    body = ((x - 0.5) / 0.2) ** 2 + ((y - 0.5) / 0.12) ** 2 <= 1
    head = ((x - 0.73) / 0.07) ** 2 + ((y - 0.33) / 0.07) ** 2 <= 1
    legs = (y > 0.55) & (y < 0.8) & np.isin((x * 40).astype(int), [13, 14, 18, 19, 26, 27])
    antlers = (y > 0.12) & (y < 0.3) & (np.abs(x - 0.74 - 0.4 * (0.3 - y)) < 0.02)
    antlers |= (y > 0.15) & (y < 0.3) & (np.abs(x - 0.72 + 0.3 * (0.3 - y)) < 0.02)
    animal = body | head | legs | antlers
    fur = 120 + 60 * np.sin(40 * x) * np.sin(25 * y) + 40 * (y - 0.5)
    img = np.where(animal, fur, img)
    labels = np.where(animal, 0, labels)

    img = img + rng.normal(0, 4, img.shape)
    px = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return ImagePlane(px, 8), SegmentMap(labels, 3)


@dataclass(frozen=True)
class Source:
    planes: tuple[ImagePlane, ...]
    segmap: SegmentMap
    profile: ImportanceProfile
    streams: tuple[tuple[SubStream, ...], ...]

    @property
    def shape(self):
        return self.segmap.shape

    @property
    def depth(self):
        return self.planes[0].depth


def load_source(cfg: ExperimentConfig) -> Source:
    if cfg.image is None:
        plane, segmap = synthetic_scene(cfg.synthetic_height, cfg.synthetic_width)
        planes = [plane]
    else:
        planes = read_planes(cfg.image)
        segmap = read_mask(cfg.mask)
    depth = planes[0].depth
    if cfg.profile is not None:
        profile = read_profile(cfg.profile)
    elif cfg.bit_weights is not None:
        profile = ImportanceProfile(tuple(cfg.segment_weights), tuple(cfg.bit_weights))
    else:
        profile = ImportanceProfile.build(cfg.segment_weights, depth)
    streams = tuple(tuple(partition(p, segmap, profile)) for p in planes)
    return Source(tuple(planes), segmap, profile, streams)


def stream_links(streams: Sequence[SubStream], gains, noise_var: float) -> list[StreamLink]:
    return [StreamLink(st.length, st.weight_product, float(g), noise_var) for st, g in zip(streams, gains)]


def snr_to_budget(snr_linear: float, links: Sequence[StreamLink], cfg: LinkConfig) -> float:
    """Total power giving every modulated symbol ``snr * sigma^2`` on average."""
    if snr_linear < 0:
        raise ValueError("snr must be >= 0")
    return float(sum(snr_linear * ln.noise * cfg.symbols(ln.length) for ln in links))


@dataclass
class TrialRecord:
    strategy: str
    snr_db: float
    realization: int
    allocations: list[AllocationResult]
    reports: list[ImseReport]
    imse: float
    normalized_imse_db: float
    budget: float
    consumed: float
    recon_hash: str
    reconstruction: list[ImagePlane] | None = field(default=None, repr=False)

    @property
    def key(self):
        return (self.strategy, self.snr_db, self.realization)

    @property
    def assumption1_violation_rate(self) -> float:
        return float(np.mean([r.assumption1_violation_rate for r in self.reports]))


def _seq(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) for p in parts])


def trial_seed(master_seed: int, realization: int) -> int:
    return int(master_seed) ^ int(realization)


def run_trial(source: Source, cfg: ExperimentConfig, strategy: str, snr_db: float,
              realization: int, keep_reconstruction: bool = False) -> TrialRecord:
    """One channel realization for one strategy at one SNR.

    Random draws depend only on the master seed, the realization index, the
    plane and the stream, so every strategy and SNR sees the same channels.
    """
    ts = trial_seed(cfg.seed, realization)
    snr = db_to_linear(snr_db)
    allocations, reports, recon = [], [], []
    budget = consumed = 0.0
    for c, (plane, streams) in enumerate(zip(source.planes, source.streams)):
        K = len(streams)
        if cfg.channel == "rayleigh":
            h = rayleigh_gain(_seq(ts, c, 0), K)
        else:
            h = np.ones(K, dtype=complex)
        g = np.abs(h) ** 2
        links = stream_links(streams, g, cfg.noise_var)
        P = snr_to_budget(snr, links, cfg.link)
        try:
            alloc = allocate(strategy, links, cfg.link, P, cfg.tolerance)
        except Exception as exc:
            raise RuntimeError(
                f"allocation failed (strategy={strategy}, snr_db={snr_db}, realization={realization}, "
                f"plane={c}): {exc}"
            ) from exc
        bits = [st.bits for st in streams]
        if cfg.phy == "analytic":
            snrs = alloc.powers * g / cfg.noise_var
            rx = [
                analytic_bitflip_channel(b, float(s), cfg.link.bep, _seq(ts, c, 1, k))
                for k, (b, s) in enumerate(zip(bits, snrs))
            ]
        else:
            il = [_seq(ts, c, 2, k) for k in range(K)] if cfg.interleaver else None
            noise = [_seq(ts, c, 1, k) for k in range(K)]
            try:
                rx = send_streams(bits, alloc.powers, h, cfg.noise_var, cfg.link, cfg.codec, il, noise)
            except Exception as exc:
                raise RuntimeError(
                    f"link simulation failed (strategy={strategy}, snr_db={snr_db}, "
                    f"realization={realization}, plane={c}): {exc}"
                ) from exc
        rx_streams = [SubStream(st.bit_index, st.segment_index, r, st.weight_product) for st, r in zip(streams, rx)]
        rplane = reassemble(rx_streams, source.segmap, source.shape, source.depth)
        recon.append(rplane)
        reports.append(imse(rplane, plane, source.segmap, source.profile))
        allocations.append(alloc)
        budget += P
        consumed += alloc.consumed_power

    value = float(np.mean([r.imse for r in reports]))
    power = float(np.mean([mean_square(p) for p in source.planes]))
    norm = 10 * math.log10(value / power) if value > 0 else -math.inf
    digest = hashlib.sha256(b"".join(p.pixels.tobytes() for p in recon)).hexdigest()
    return TrialRecord(
        strategy=strategy,
        snr_db=float(snr_db),
        realization=int(realization),
        allocations=allocations,
        reports=reports,
        imse=value,
        normalized_imse_db=norm,
        budget=budget,
        consumed=consumed,
        recon_hash=digest,
        reconstruction=recon if keep_reconstruction else None,
    )


def _fmt(x: float) -> str:
    return f"{x:.9g}"


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    signal_power: float

    def __post_init__(self):
        self.records.sort(key=lambda r: (self.config.strategies.index(r.strategy), r.snr_db, r.realization))
        expected = len(self.config.strategies) * len(self.config.snr_db) * self.config.realizations
        if len(self.records) != expected:
            raise ValueError(f"sweep has {len(self.records)} records, expected {expected}")

    def _group(self, strategy, snr_db) -> list[TrialRecord]:
        return [r for r in self.records if r.strategy == strategy and r.snr_db == snr_db]

    def point(self, strategy: str, snr_db: float) -> dict:
        """Aggregate over realizations. The curve value is the mean IMSE
        (linear) expressed in dB relative to the source's mean square."""
        recs = self._group(strategy, float(snr_db))
        if not recs:
            raise KeyError((strategy, snr_db))
        vals = np.array([r.imse for r in recs])
        mean = float(vals.mean())
        sem = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        dbs = np.array([r.normalized_imse_db for r in recs])
        finite = dbs[np.isfinite(dbs)]
        return {
            "mean_imse": mean,
            "sem_imse": sem,
            "mean_norm_imse_db": 10 * math.log10(mean / self.signal_power) if mean > 0 else -math.inf,
            "std_db": float(finite.std()) if finite.size else 0.0,
        }

    def curve(self, strategy: str) -> tuple[np.ndarray, np.ndarray]:
        snrs = np.array(sorted(self.config.snr_db), dtype=float)
        return snrs, np.array([self.point(strategy, s)["mean_norm_imse_db"] for s in snrs])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "snr_db", "mean_norm_imse_db", "std"])
        for st in self.config.strategies:
            for snr in sorted(self.config.snr_db):
                pt = self.point(st, snr)
                w.writerow([st, _fmt(snr), _fmt(pt["mean_norm_imse_db"]), _fmt(pt["std_db"])])
        return buf.getvalue()

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([
            "strategy", "snr_db", "realization", "imse", "norm_imse_db", "budget", "consumed",
            "assumption1_violation_rate", "recon_sha256",
        ])
        for r in self.records:
            w.writerow([
                r.strategy, _fmt(r.snr_db), r.realization, _fmt(r.imse), _fmt(r.normalized_imse_db),
                _fmt(r.budget), _fmt(r.consumed), _fmt(r.assumption1_violation_rate), r.recon_hash,
            ])
        return buf.getvalue()

    def summary(self, target_db: float = IMSE_TARGET_DB) -> dict:
        strategies = self.config.strategies
        snrs = sorted(self.config.snr_db)
        gains = {}
        for a in strategies:
            for b in strategies:
                if a != b:
                    gains[f"{a}_vs_{b}"] = {_fmt(s): float(_fmt(gain_at(self, a, b, s))) for s in snrs}
        required = {}
        for st in strategies:
            try:
                required[st] = float(_fmt(snr_required(self, st, target_db)))
            except TargetOutOfRange:
                required[st] = None
        return {
            "config": self.config.metadata(),
            "signal_power": float(_fmt(self.signal_power)),
            "gains_db": gains,
            "target_db": target_db,
            "required_snr_db": required,
        }

    def write(self, out_dir, images: dict | None = None) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "sweep.csv", out / "trials.csv", out / "summary.json"]
        paths[0].write_text(self.to_csv())
        paths[1].write_text(self.trials_csv())
        paths[2].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        for (st, snr), planes in (images or {}).items():
            ext = "pgm" if len(planes) == 1 else "ppm"
            p = out / "images" / f"{st}_{_fmt(snr)}dB.{ext}"
            p.parent.mkdir(exist_ok=True)
            write_planes(p, planes)
            paths.append(p)
        return paths


_WORKER: dict = {}


def _init_worker(cfg: ExperimentConfig):
    _WORKER["cfg"] = cfg
    _WORKER["source"] = load_source(cfg)


def _work(key):
    st, snr, r = key
    return run_trial(_WORKER["source"], _WORKER["cfg"], st, snr, r, keep_reconstruction=(r == 0))


def sweep(cfg: ExperimentConfig, jobs: int = 1, source: Source | None = None) -> tuple[SweepResult, dict]:
    """Run every (strategy, snr, realization) trial. Returns the result and
    the realization-0 reconstructions keyed by ``(strategy, snr_db)``.

    Any failed trial aborts the sweep.
    """
    keys = [(st, float(s), r) for st in cfg.strategies for s in sorted(cfg.snr_db) for r in range(cfg.realizations)]
    if jobs <= 1:
        _WORKER["cfg"] = cfg
        _WORKER["source"] = source or load_source(cfg)
        records = [_work(k) for k in keys]
        src = _WORKER["source"]
    else:
        src = source or load_source(cfg)
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(cfg,)) as ex:
            records = list(ex.map(_work, keys, chunksize=max(1, len(keys) // (4 * jobs))))
    images = {}
    for rec in records:
        if rec.reconstruction is not None:
            images[(rec.strategy, rec.snr_db)] = rec.reconstruction
            rec.reconstruction = None
    power = float(np.mean([mean_square(p) for p in src.planes]))
    return SweepResult(cfg, records, power), images


def gain_at(result: SweepResult, strategy_a: str, strategy_b: str, snr_db: float) -> float:
    """How many dB lower ``strategy_a``'s normalised IMSE is than
    ``strategy_b``'s at ``snr_db`` (linear interpolation on the grid)."""
    xa, ya = result.curve(strategy_a)
    _, yb = result.curve(strategy_b)
    if not xa[0] <= snr_db <= xa[-1]:
        raise TargetOutOfRange(f"snr {snr_db} dB outside swept range [{xa[0]}, {xa[-1]}]")
    return float(np.interp(snr_db, xa, yb) - np.interp(snr_db, xa, ya))


def snr_required(result: SweepResult, strategy: str, target_db: float) -> float:
    """Lowest SNR at which the curve reaches ``target_db``, interpolating
    linearly between the first grid point at or below the target and its
    predecessor."""
    x, y = result.curve(strategy)
    hit = np.flatnonzero(y <= target_db)
    if hit.size == 0:
        raise TargetOutOfRange(
            f"{strategy} never reaches {target_db} dB (best {y.min():.3f} dB at {x[np.argmin(y)]} dB)"
        )
    i = int(hit[0])
    if i == 0:
        if y[0] == target_db:
            return float(x[0])
        raise TargetOutOfRange(f"{strategy} is already below {target_db} dB at {x[0]} dB")
    x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
    if not np.isfinite(y1):
        return float(x1)
    return float(x0 + (target_db - y0) * (x1 - x0) / (y1 - y0))
