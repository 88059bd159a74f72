"""Reproducible scene sampling, signal synthesis and dataset writing.

Every random draw of a scene derives from ``(master_seed, split, room,
source)`` through :class:`numpy.random.SeedSequence` spawn keys, so scenes
can be generated in any order or in parallel with identical results.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import next_fast_len

from . import io
from .dsp import FS, FS_SIM, convolve, fit_length, resample_3to1, segment, snr_gain, stft
from .features import compute_features
from .room import RoomSpec, SrirRequest, diffuse_srir, image_source_srir
from .sh import Direction, directions_to_vectors

log = logging.getLogger(__name__)

SPLITS = {"train": 0, "val": 1, "test": 2}
DESK_ROOMS = {"train": 200, "val": 20, "test": 20}
BABBLE_TALKERS = 50
SPEECH_RMS = 0.1
MANIFEST_NAME = "manifest.json"


class InfeasibleBoundsError(ValueError):
    """The sampling bounds cannot satisfy the placement constraints."""


@dataclass(frozen=True)
class SceneBounds:
    room_min: tuple[float, float, float] = (3.0, 3.0, 3.0)
    room_max: tuple[float, float, float] = (20.0, 20.0, 5.0)
    absorption: tuple[float, float] = (0.1, 0.9)
    receiver_margin: float = 1.5
    source_margin: float = 0.49
    min_distance: float = 1.0
    snr_range: tuple[float, float] = (0.0, 20.0)

    def validate(self) -> None:
        if any(lo > hi for lo, hi in zip(self.room_min, self.room_max)):
            raise InfeasibleBoundsError("room_min exceeds room_max")
        if min(self.room_min) < 2.0 * self.receiver_margin:
            raise InfeasibleBoundsError("smallest room cannot hold the receiver margin")
        # worst ray: straight at the nearest wall
        if self.receiver_margin - self.source_margin < self.min_distance:
            raise InfeasibleBoundsError("source cannot reach the minimum distance on every ray")
        lo, hi = self.absorption
        if not 0.0 <= lo <= hi <= 1.0:
            raise InfeasibleBoundsError("absorption range must lie in [0, 1]")
        if self.snr_range[0] > self.snr_range[1]:
            raise InfeasibleBoundsError("invalid SNR range")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneBounds":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


ANECHOIC = dataclasses.replace(SceneBounds(), absorption=(1.0, 1.0))


@dataclass
class SplitConfig:
    room_count: int = DESK_ROOMS["train"]
    sources_per_room: int = 8
    segment_seconds: float = 1.0
    ambisonics_order: int = 4
    master_seed: int = 0
    split: str = "train"
    bounds: SceneBounds = field(default_factory=SceneBounds)
    sentence_seconds: tuple[float, float] = (2.5, 4.0)
    srir_seconds: float = 0.5
    diffuse_seconds: float = 0.5
    max_reflection_order: int = 20
    speech_dir: str | None = None
    features: tuple[str, ...] = ()
    save_srir: bool = False
    debug_components: bool = False

    def __post_init__(self):
        if self.room_count < 1 or self.sources_per_room < 1:
            raise ValueError("room_count and sources_per_room must be >= 1")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {sorted(SPLITS)}")
        if not 1 <= self.ambisonics_order <= 4:
            raise ValueError("ambisonics_order must be in [1, 4]")
        if self.segment_seconds * FS < 1:
            raise ValueError("segment too short")

    @property
    def scene_count(self) -> int:
        return self.room_count * self.sources_per_room

    @property
    def snr_range(self) -> tuple[float, float]:
        return self.bounds.snr_range

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["features"] = list(self.features)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SplitConfig":
        d = dict(d)
        if "bounds" in d and isinstance(d["bounds"], dict):
            d["bounds"] = SceneBounds.from_dict(d["bounds"])
        for key in ("sentence_seconds", "features"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SceneSpec:
    scene_id: str
    room: RoomSpec
    receiver: tuple[float, float, float]
    source: tuple[float, float, float]
    azimuth_deg: float
    elevation_deg: float
    distance: float
    snr_db: float
    seed: int
    split: str
    files: dict = field(default_factory=dict)

    @property
    def doa_label(self) -> Direction:
        return Direction.from_degrees(self.elevation_deg, self.azimuth_deg)

    def to_record(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "room": {
                "dims": list(self.room.dims),
                "absorption": list(self.room.absorption),
                "speed_of_sound": self.room.speed_of_sound,
            },
            "receiver": list(self.receiver),
            "source": list(self.source),
            "doa_label": {"azimuth_deg": self.azimuth_deg, "elevation_deg": self.elevation_deg},
            "distance": self.distance,
            "snr_db": self.snr_db,
            "seed": self.seed,
            "split": self.split,
            "files": self.files,
        }

    @classmethod
    def from_record(cls, r: dict) -> "SceneSpec":
        room = RoomSpec(tuple(r["room"]["dims"]), tuple(r["room"]["absorption"]), r["room"]["speed_of_sound"])
        return cls(
            scene_id=r["scene_id"],
            room=room,
            receiver=tuple(r["receiver"]),
            source=tuple(r["source"]),
            azimuth_deg=r["doa_label"]["azimuth_deg"],
            elevation_deg=r["doa_label"]["elevation_deg"],
            distance=r["distance"],
            snr_db=r["snr_db"],
            seed=r["seed"],
            split=r["split"],
            files=r.get("files", {}),
        )


def _seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def _sample_room(rng: np.random.Generator, bounds: SceneBounds):
    dims = rng.uniform(bounds.room_min, bounds.room_max)
    absorption = rng.uniform(bounds.absorption[0], bounds.absorption[1], 6)
    m = bounds.receiver_margin
    receiver = rng.uniform(np.full(3, m), dims - m)
    return RoomSpec(tuple(dims), tuple(absorption)), tuple(float(x) for x in receiver)


def _max_distance(receiver: np.ndarray, u: np.ndarray, dims, margin: float) -> float:
    """Largest t with receiver + t*u inside the room shrunk by ``margin``."""
    t = math.inf
    for r, d, c in zip(receiver, dims, u):
        if c > 0.0:
            t = min(t, (d - margin - r) / c)
        elif c < 0.0:
            t = min(t, (margin - r) / c)
    return t


def scene_id(split: str, index: int) -> str:
    return f"{split}-{index:06d}"


def sample_scene(
    master_seed: int,
    scene_index: int,
    bounds: SceneBounds = SceneBounds(),
    sources_per_room: int = 1,
    split: str = "train",
) -> SceneSpec:
    """Draw one scene; scenes sharing ``scene_index // sources_per_room``
    share their room and receiver."""
    bounds.validate()
    split_code = SPLITS[split]
    room_index, source_index = divmod(scene_index, sources_per_room)
    room, receiver = _sample_room(np.random.default_rng(_seed_sequence(master_seed, split_code, room_index)), bounds)
    src_seq = _seed_sequence(master_seed, split_code, room_index, source_index + 1)
    rng = np.random.default_rng(src_seq)
    rcv = np.asarray(receiver)
    for _ in range(1000):
        z = rng.uniform(-1.0, 1.0)
        az = rng.uniform(-math.pi, math.pi)
        # labels are stored with 6 decimals; place the source on the stored ray
        el_deg = round(math.degrees(math.asin(z)), 6)
        az_deg = round(math.degrees(az), 6)
        if az_deg == -180.0:
            az_deg = 180.0
        label = Direction.from_degrees(el_deg, az_deg)
        u = directions_to_vectors(label.elevation, label.azimuth)
        t_max = _max_distance(rcv, u, room.dims, bounds.source_margin)
        if t_max < bounds.min_distance:
            continue
        dist = rng.uniform(bounds.min_distance, t_max)
        src = rcv + dist * u
        if room.wall_distance(src) >= bounds.source_margin and np.linalg.norm(src - rcv) >= bounds.min_distance:
            break
    else:  # pragma: no cover - guarded by bounds.validate
        raise InfeasibleBoundsError("could not place a source")
    snr = float(rng.uniform(*bounds.snr_range))
    seed = int(src_seq.spawn(1)[0].generate_state(1, dtype=np.uint64)[0])
    return SceneSpec(
        scene_id=scene_id(split, scene_index),
        room=room,
        receiver=receiver,
        source=tuple(float(x) for x in src),
        azimuth_deg=az_deg,
        elevation_deg=el_deg,
        distance=float(np.linalg.norm(src - rcv)),
        snr_db=snr,
        seed=seed,
        split=split,
    )


def check_scene(spec: SceneSpec, bounds: SceneBounds = SceneBounds()) -> list[str]:
    """Constraint violations of one scene (empty when valid)."""
    problems = []
    rcv = np.asarray(spec.receiver)
    src = np.asarray(spec.source)
    if spec.room.wall_distance(rcv) < bounds.receiver_margin:
        problems.append("receiver closer than the receiver margin to a wall")
    if spec.room.wall_distance(src) < bounds.source_margin:
        problems.append("source closer than the source margin to a wall")
    if np.linalg.norm(src - rcv) < bounds.min_distance:
        problems.append("source and receiver closer than the minimum distance")
    if not bounds.snr_range[0] <= spec.snr_db <= bounds.snr_range[1]:
        problems.append("SNR outside its range")
    u = (src - rcv) / np.linalg.norm(src - rcv)
    if np.linalg.norm(u - spec.doa_label.to_vector()) > 1e-9:
        problems.append("DOA label does not point at the source")
    return problems


def speech_surrogate(seed, duration: float, rate: int = FS) -> np.ndarray:
    """Speech-like noise: pink spectrum shaped by a 2-8 Hz syllabic envelope
    with pauses, RMS 0.1."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = max(1, int(round(duration * rate)))
    n_fft = next_fast_len(n, real=True)
    spectrum = np.fft.rfft(rng.standard_normal(n_fft))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / rate)
    # -3 dB/octave above 100 Hz, rolled off below 80 Hz and above 7 kHz
    shape = 1.0 / np.sqrt(np.maximum(freqs, 100.0))
    shape *= 1.0 / (1.0 + (80.0 / np.maximum(freqs, 1.0)) ** 4)
    shape *= 1.0 / (1.0 + (freqs / 7000.0) ** 8)
    pink = np.fft.irfft(spectrum * shape, n_fft)[:n]
    env = np.zeros(n)
    pos = 0
    first = True
    while pos < n:
        if not first and rng.random() < 0.15:
            pos += int(rng.uniform(0.1, 0.35) * rate)
            continue
        first = False
        width = max(2, int(rate / rng.uniform(2.0, 8.0)))
        bump = np.hanning(width) * rng.uniform(0.3, 1.0)
        end = min(n, pos + width)
        env[pos:end] = bump[: end - pos]
        pos += width
    x = pink * env
    rms = math.sqrt(np.mean(x * x))
    if rms == 0.0:
        x = pink
        rms = math.sqrt(np.mean(x * x))
    return x * (SPEECH_RMS / rms)


def babble_noise(seeds, duration: float, rate: int = FS) -> np.ndarray:
    """Overlay of 50 speech surrogates with random circular offsets, RMS 0.1."""
    seeds = [int(s) for s in seeds]
    if len(seeds) != BABBLE_TALKERS:
        raise ValueError(f"babble needs exactly {BABBLE_TALKERS} seeds, got {len(seeds)}")
    rng = np.random.default_rng(seeds)
    n = max(1, int(round(duration * rate)))
    total = np.zeros(n)
    for s in seeds:
        total += np.roll(speech_surrogate(s, duration, rate), int(rng.integers(n)))
    return total * (SPEECH_RMS / math.sqrt(np.mean(total * total)))


def load_speech(path, rate: int = FS) -> np.ndarray:
    data, fs = io.read_wav(path)
    mono = data.astype(float).mean(axis=0)
    if fs == 3 * rate:
        mono = resample_3to1(mono)
    elif fs != rate:
        raise ValueError(f"{path}: unsupported sample rate {fs}")
    return mono


@dataclass
class SceneSignals:
    sequences: list[np.ndarray]
    label: Direction
    speech: np.ndarray  # reverberant speech, (channels, samples)
    noise: np.ndarray  # scaled ambient noise, same shape
    srir: np.ndarray  # 48 kHz response


def _room_sampler(bounds: SceneBounds):
    def sample(rng):
        return _sample_room(rng, bounds)[0]

    return sample


def synth_scene(spec: SceneSpec, cfg: SplitConfig) -> SceneSignals:
    """Image-source SRIR -> 16 kHz -> speech convolution -> diffuse babble at
    the scene SNR -> 1 s sequences."""
    rng = np.random.default_rng(spec.seed)
    order = cfg.ambisonics_order
    req = SrirRequest(
        spec.room,
        spec.source,
        spec.receiver,
        order,
        FS_SIM,
        cfg.max_reflection_order,
        int(round(cfg.srir_seconds * FS_SIM)),
    )
    srir = image_source_srir(req)
    ir = resample_3to1(srir.hoa.data)
    if cfg.speech_dir:
        files = sorted(Path(cfg.speech_dir).glob("*.wav"))
        if not files:
            raise FileNotFoundError(f"no WAV files in {cfg.speech_dir}")
        dry = load_speech(files[int(rng.integers(len(files)))])
    else:
        dry = speech_surrogate(int(rng.integers(2**63)), rng.uniform(*cfg.sentence_seconds))
    speech = convolve(dry, ir)
    n = speech.shape[-1]
    babble = babble_noise(rng.integers(0, 2**63, BABBLE_TALKERS), n / FS)
    diffuse = diffuse_srir(
        int(rng.integers(2**63)),
        _room_sampler(cfg.bounds),
        order,
        int(round(cfg.diffuse_seconds * FS_SIM)),
        FS_SIM,
    )
    noise = fit_length(convolve(babble, resample_3to1(diffuse.data)), n, rng)
    noise = snr_gain(speech, noise, spec.snr_db) * noise
    mixture = speech + noise
    sequences = segment(mixture, cfg.segment_seconds)
    return SceneSignals(sequences, spec.doa_label, speech, noise, srir.hoa.data)


def scene_specs(cfg: SplitConfig) -> list[SceneSpec]:
    return [
        sample_scene(cfg.master_seed, i, cfg.bounds, cfg.sources_per_room, cfg.split) for i in range(cfg.scene_count)
    ]


def _file_entry(root: Path, path: Path) -> dict:
    return {"path": path.relative_to(root).as_posix(), "sha256": io.sha256_file(path)}


def feature_path(root: Path, seq_path: str, kind: str, order: int) -> Path:
    stem = Path(seq_path).stem
    tag = "intensity" if kind == "intensity" else f"magphase{order}"
    return root / "features" / f"{stem}.{tag}.hoat"


def write_sequence_features(root: Path, record: dict, kind: str, order: int) -> list[dict]:
    """Compute and write one HOAT tensor per sequence of a scene record."""
    entries = []
    for seq in record["files"]["sequences"]:
        data, _ = io.read_wav(root / seq["path"])
        feats = compute_features(stft(data.astype(float)), kind, order)
        out = feature_path(root, seq["path"], kind, order)
        out.parent.mkdir(parents=True, exist_ok=True)
        io.write_hoat(out, feats.data)
        entries.append(_file_entry(root, out))
    return entries


def feature_key(kind: str, order: int | None) -> str:
    return "intensity" if kind == "intensity" else f"magphase{order}"


def _files_intact(root: Path, record: dict) -> bool:
    entries = list(record["files"].get("sequences", []))
    for key in ("srir", "speech", "noise"):
        if record["files"].get(key):
            entries.append(record["files"][key])
    for group in record["files"].get("features", {}).values():
        entries.extend(group)
    for e in entries:
        p = root / e["path"]
        if not p.exists() or io.sha256_file(p) != e["sha256"]:
            return False
    return True


def _generate(args) -> tuple[int, dict | None, str | None]:
    index, cfg, root = args
    root = Path(root)
    spec = sample_scene(cfg.master_seed, index, cfg.bounds, cfg.sources_per_room, cfg.split)
    done = root / "records" / f"{spec.scene_id}.json"
    try:
        if done.exists():
            record = json.loads(done.read_text())
            if _files_intact(root, record):
                return index, record, None
        signals = synth_scene(spec, cfg)
        audio = root / "audio"
        audio.mkdir(parents=True, exist_ok=True)
        files: dict = {"sequences": []}
        for k, seq in enumerate(signals.sequences):
            p = audio / f"{spec.scene_id}_{k:02d}.wav"
            io.write_wav(p, seq, FS)
            files["sequences"].append(_file_entry(root, p))
        files["srir"] = None
        if cfg.save_srir:
            p = audio / f"{spec.scene_id}_srir.wav"
            io.write_wav(p, signals.srir, FS_SIM)
            files["srir"] = _file_entry(root, p)
        if cfg.debug_components:
            for key, sig in (("speech", signals.speech), ("noise", signals.noise)):
                p = audio / f"{spec.scene_id}_{key}.wav"
                io.write_wav(p, sig, FS)
                files[key] = _file_entry(root, p)
        spec.files = files
        record = spec.to_record()
        if cfg.features:
            record["files"]["features"] = {}
            for kind in cfg.features:
                record["files"]["features"][feature_key(kind, cfg.ambisonics_order)] = write_sequence_features(
                    root, record, kind, cfg.ambisonics_order
                )
        done.parent.mkdir(parents=True, exist_ok=True)
        io.write_text(done, json.dumps(record, indent=2) + "\n")
        return index, record, None
    except (OSError, ValueError) as exc:
        return index, None, f"{spec.scene_id}: {exc}"


def manifest_document(cfg: SplitConfig, records: list[dict]) -> dict:
    return {"format": "hoadoa-manifest", "version": 1, "config": cfg.to_dict(), "scenes": records}


def dump_manifest(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def write_manifest(path, doc: dict) -> bool:
    """Write the manifest; return False when the file already had these bytes."""
    path = Path(path)
    text = dump_manifest(doc)
    if path.exists() and path.read_text() == text:
        return False
    io.write_text(path, text)
    return True


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "hoadoa-manifest":
        raise ValueError(f"{path} is not a dataset manifest")
    return doc


def manifest_scenes(doc: dict) -> list[SceneSpec]:
    return [SceneSpec.from_record(r) for r in doc["scenes"]]


def lint_manifest(doc: dict) -> list[str]:
    """Re-validate every scene of a manifest against the placement constraints."""
    bounds = SplitConfig.from_dict(doc["config"]).bounds
    problems = []
    for spec in manifest_scenes(doc):
        problems.extend(f"{spec.scene_id}: {p}" for p in check_scene(spec, bounds))
    return problems


@dataclass
class SplitResult:
    manifest_path: Path
    manifest: dict
    errors: list[str]
    changed: bool


def synth_split(cfg: SplitConfig, out_dir, workers: int = 1) -> SplitResult:
    """Generate all scenes of a split, skipping scenes whose files are intact.

    Per-scene failures are collected and reported; the batch continues.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(i, cfg, str(root)) for i in range(cfg.scene_count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_generate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_generate(j) for j in jobs]
    records, errors = [], []
    for index, record, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            log.error("scene %d failed: %s", index, err)
            errors.append(err)
        else:
            records.append(record)
    doc = manifest_document(cfg, records)
    path = root / MANIFEST_NAME
    changed = write_manifest(path, doc)
    return SplitResult(path, doc, errors, changed)
