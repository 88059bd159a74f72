"""Evaluation statistics: angular errors, box statistics, accuracy curves and
SNR-binned summaries, with CSV/JSON writers."""
from __future__ import annotations

import csv
import io as _io
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import io
from .sh import Direction, angular_distance

CSV_HEADER = ("scene_id", "pred_az_deg", "pred_el_deg", "label_az_deg", "label_el_deg", "error_deg", "snr_db")
DEFAULT_SNR_EDGES = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0001)
DEFAULT_TOLERANCES = tuple(float(t) for t in range(0, 31))
ZERO_MEAN_DIRECTION = Direction(math.pi / 2, 0.0)


class ZeroMeanWarning(RuntimeWarning):
    """Per-frame predictions cancel; the aggregate falls back to +z."""


@dataclass(frozen=True)
class EvalRecord:
    scene_id: str
    predicted: Direction
    label: Direction
    angular_error: float  # degrees
    snr_db: float

    @classmethod
    def create(cls, scene_id: str, predicted: Direction, label: Direction, snr_db: float) -> "EvalRecord":
        err = math.degrees(angular_distance(predicted, label))
        return cls(scene_id, predicted, label, err, float(snr_db))


@dataclass(frozen=True)
class BoxStats:
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    count: int = 0

    def rounded(self, digits: int = 4) -> dict:
        d = asdict(self)
        return {k: (v if k == "count" else _round(v, digits)) for k, v in d.items()}


def box_stats(errors) -> BoxStats:
    """Quartiles by linear interpolation between order statistics; whiskers
    are the most extreme samples within 1.5 IQR of the box."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("box_stats needs at least one value")
    q1, med, q3 = np.quantile(e, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo = e[e >= q1 - 1.5 * iqr].min()
    hi = e[e <= q3 + 1.5 * iqr].max()
    # an interpolated quartile can sit beyond every retained sample; clamp to the box
    return BoxStats(float(q1), float(med), float(q3), float(min(lo, q1)), float(max(hi, q3)), int(e.size))


def accuracy_curve(errors, tolerances) -> np.ndarray:
    """Fraction of errors strictly below each tolerance."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise ValueError("accuracy_curve needs at least one error")
    tol = np.asarray(tolerances, dtype=float)
    return np.searchsorted(e, tol, side="left") / e.size


def _check_edges(edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0.0):
        raise ValueError("bin edges must be a strictly increasing list of at least two values")
    return edges


def bin_records(records, bin_edges) -> list[tuple[float, float, list[EvalRecord]]]:
    """Members of every [e_i, e_i+1) bin, empty bins included."""
    edges = _check_edges(bin_edges)
    bins = [(float(a), float(b), []) for a, b in zip(edges[:-1], edges[1:])]
    for r in records:
        i = int(np.searchsorted(edges, r.snr_db, side="right")) - 1
        if 0 <= i < len(bins):
            bins[i][2].append(r)
    return bins


def snr_binned_stats(records, bin_edges) -> dict[tuple[float, float], BoxStats]:
    """BoxStats for each non-empty SNR bin; empty bins are omitted."""
    return {
        (lo, hi): box_stats([r.angular_error for r in members])
        for lo, hi, members in bin_records(records, bin_edges)
        if members
    }


def aggregate_prediction(per_frame) -> Direction:
    """Mean of the per-frame vectors, renormalized; a vanishing mean warns
    and resolves to +z."""
    v = np.asarray(per_frame, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3 or len(v) == 0:
        raise ValueError(f"expected (frames, 3) vectors, got {v.shape}")
    mean = v.mean(axis=0)
    norm = np.linalg.norm(mean)
    # exact cancellation still leaves summation round-off
    if norm <= 1e-12 * np.linalg.norm(v, axis=1).mean():
        warnings.warn("per-frame predictions average to zero; using +z", ZeroMeanWarning, stacklevel=2)
        return ZERO_MEAN_DIRECTION
    return Direction.from_vector(mean / norm)


def _round(x: float, digits: int = 4) -> float:
    r = round(float(x), digits)
    return 0.0 if r == 0.0 else r


def _fmt(x: float) -> str:
    s = f"{float(x):.4f}"
    return "0.0000" if s == "-0.0000" else s


def records_csv(records) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([
            r.scene_id,
            _fmt(r.predicted.azimuth_deg),
            _fmt(r.predicted.elevation_deg),
            _fmt(r.label.azimuth_deg),
            _fmt(r.label.elevation_deg),
            _fmt(r.angular_error),
            _fmt(r.snr_db),
        ])
    return buf.getvalue()


def accuracy_csv(tolerances, accuracy) -> str:
    lines = ["tolerance_deg,accuracy"]
    lines += [f"{_fmt(t)},{a:.6f}" for t, a in zip(tolerances, accuracy)]
    return "\n".join(lines) + "\n"


def summary_document(estimators: dict[str, list[EvalRecord]], bin_edges=DEFAULT_SNR_EDGES) -> dict:
    """Overall and per-SNR-bin BoxStats for each estimator."""
    out = {}
    for name, records in estimators.items():
        errors = [r.angular_error for r in records]
        if not errors:
            raise ValueError(f"estimator {name!r} has no records")
        bins = [
            {"snr_low": _round(lo), "snr_high": _round(hi), **box_stats([r.angular_error for r in m]).rounded()}
            for lo, hi, m in bin_records(records, bin_edges)
            if m
        ]
        out[name] = {"overall": box_stats(errors).rounded(), "snr_bins": bins}
    return {"angles": "degrees", "estimators": out}


def write_evaluation(out_dir, name: str, records: list[EvalRecord], tolerances=DEFAULT_TOLERANCES,
                     bin_edges=DEFAULT_SNR_EDGES) -> dict:
    """Write ``{name}.csv``, ``{name}_summary.json`` and ``{name}_accuracy.csv``;
    returns the summary document."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summary_document({name: records}, bin_edges)
    acc = accuracy_curve([r.angular_error for r in records], tolerances)
    io.write_text(out_dir / f"{name}.csv", records_csv(records))
    io.write_text(out_dir / f"{name}_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    io.write_text(out_dir / f"{name}_accuracy.csv", accuracy_csv(tolerances, acc))
    return summary
