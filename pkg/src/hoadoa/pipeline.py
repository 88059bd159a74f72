"""Manifest-level batch steps shared by the command line: feature extraction
and baseline evaluation over a generated split."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .baseline import SilentInputError, pseudo_intensity_doa, srp_doa, steered_power_map
from .dataset import feature_key, read_manifest, write_manifest, write_sequence_features
from .dsp import ComplexSpectrogram, stft
from .metrics import EvalRecord
from .sh import Direction, n_channels

log = logging.getLogger(__name__)

ESTIMATORS = ("pseudo-intensity", "srp")


class DataError(RuntimeError):
    """Missing or inconsistent dataset files."""


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _missing(root: Path, record: dict) -> list[str]:
    return [s["path"] for s in record["files"]["sequences"] if not (root / s["path"]).exists()]


def _features_job(args):
    root, record, kind, order = args
    missing = _missing(Path(root), record)
    if missing:
        return None, missing
    return write_sequence_features(Path(root), record, kind, order), []


def extract_features(manifest_path, kind: str, order: int | None = None, workers: int = 1):
    """Write one HOAT tensor per sequence and record them in the manifest and
    the per-scene records. Returns (changed, missing files)."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    doc = _read(manifest_path)
    data_order = doc["config"]["ambisonics_order"]
    order = data_order if order is None else order
    if kind not in ("magphase", "intensity"):
        raise ValueError(f"unknown feature kind {kind!r}")
    if order > data_order:
        raise DataError(f"order {order} features need order-{order} data, the split has order {data_order}")
    key = feature_key(kind, order)
    jobs = [(str(root), r, kind, order) for r in doc["scenes"]]
    missing_all = []
    for record, (entries, missing) in zip(doc["scenes"], _map(_features_job, jobs, workers)):
        if missing:
            missing_all.extend(missing)
            log.error("%s: missing sequences %s", record["scene_id"], ", ".join(missing))
            continue
        record["files"].setdefault("features", {})[key] = entries
        rec_path = root / "records" / f"{record['scene_id']}.json"
        if rec_path.exists():
            io.write_text(rec_path, json.dumps(record, indent=2) + "\n")
    return write_manifest(manifest_path, doc), missing_all


def _read(manifest_path) -> dict:
    try:
        return read_manifest(manifest_path)
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {manifest_path}") from exc
    except (json.JSONDecodeError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def scene_spectrogram(root: Path, record: dict, channels: int) -> ComplexSpectrogram:
    """STFTs of all sequences of a scene stacked along the frame axis."""
    parts = []
    for seq in record["files"]["sequences"]:
        path = root / seq["path"]
        if not path.exists():
            raise DataError(f"missing sequence {seq['path']}")
        data, _ = io.read_wav(path)
        if data.shape[0] < channels:
            raise DataError(f"{seq['path']} has {data.shape[0]} channels, need {channels}")
        parts.append(stft(data[:channels].astype(float)).data)
    if not parts:
        raise DataError(f"{record['scene_id']} has no sequences")
    return ComplexSpectrogram(np.concatenate(parts, axis=0))


def estimate(spec: ComplexSpectrogram, estimator: str, order: int = 1) -> Direction:
    if estimator == "pseudo-intensity":
        return pseudo_intensity_doa(spec)
    if estimator == "srp":
        return srp_doa(steered_power_map(spec, order))
    raise ValueError(f"unknown estimator {estimator!r}")


def _eval_job(args):
    root, record, estimator, order = args
    channels = 4 if estimator == "pseudo-intensity" else n_channels(order)
    label = Direction.from_degrees(record["doa_label"]["elevation_deg"], record["doa_label"]["azimuth_deg"])
    try:
        pred = estimate(scene_spectrogram(Path(root), record, channels), estimator, order)
    except SilentInputError:
        log.warning("%s: silent input, predicting +z", record["scene_id"])
        pred = Direction(np.pi / 2, 0.0)
    return EvalRecord.create(record["scene_id"], pred, label, record["snr_db"])


def evaluate_manifest(manifest_path, estimator: str, order: int = 1, workers: int = 1) -> list[EvalRecord]:
    manifest_path = Path(manifest_path)
    doc = _read(manifest_path)
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if not doc["scenes"]:
        raise DataError("manifest lists no scenes")
    data_order = doc["config"]["ambisonics_order"]
    if estimator == "srp" and order > data_order:
        raise DataError(f"srp at order {order} needs order-{order} data, the split has order {data_order}")
    jobs = [(str(manifest_path.parent), r, estimator, order) for r in doc["scenes"]]
    return _map(_eval_job, jobs, workers)


def estimator_name(estimator: str, order: int) -> str:
    return estimator if estimator == "pseudo-intensity" else f"{estimator}-order{order}"
