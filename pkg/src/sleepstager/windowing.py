"""Per-epoch feature-vector assembly over the multi-resolution window grid.

Each 30-s epoch gets 131 features evaluated at four placements (the epoch
itself, two 60-s windows with the epoch at either end, and a centered 90-s
window) plus time-shifted copies of the 30-s features from the two
preceding and two following epochs: 131 * 8 = 1048 columns.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .features import FeatureExtractor, FeatureParams, feature_catalog
from .recording import ChannelKind, Recording

EPOCH_S = 30

MATRIX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class WindowPlacement:
    name: str
    span_s: int
    offset_s: int  # of the window start, relative to the epoch start


#: Placement order is part of the column schema; do not reorder.
PLACEMENTS: tuple[WindowPlacement, ...] = (
    WindowPlacement("w30", 30, 0),
    WindowPlacement("w60_left", 60, -30),
    WindowPlacement("w60_right", 60, 0),
    WindowPlacement("w90", 90, -30),
)

#: Shift order is part of the column schema; shifts apply to w30 only.
SHIFTS: tuple[int, ...] = (-2, -1, 1, 2)

#: A window is evaluated on its edge-truncated slice only while at least
#: half of its nominal span lies inside the recording.
MIN_COVERAGE = 0.5


@dataclass(frozen=True)
class ColumnSpec:
    channel: str
    kind: ChannelKind
    feature: str
    placement: str
    shift: int

    @property
    def name(self) -> str:
        return f"{self.channel}__{self.feature}__{self.placement}__s{self.shift}"


@dataclass
class FeatureSchema:
    columns: list[ColumnSpec]

    @classmethod
    def build(cls, channels: list[tuple[str, ChannelKind]]) -> FeatureSchema:
        """Deterministic column order: channels in montage order, features in
        catalog order, then the four placements followed by the four shifts."""
        columns = []
        for channel, kind in channels:
            for fid in feature_catalog(kind):
                for placement in PLACEMENTS:
                    columns.append(ColumnSpec(channel, kind, fid.name, placement.name, 0))
                for shift in SHIFTS:
                    columns.append(ColumnSpec(channel, kind, fid.name, "w30", shift))
        return cls(columns)

    def __len__(self) -> int:
        return len(self.columns)

    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def digest(self) -> str:
        text = "\n".join(
            f"{c.channel}|{c.kind.value}|{c.feature}|{c.placement}|{c.shift}" for c in self.columns
        )
        return hashlib.sha256(text.encode("ascii")).hexdigest()

    def to_json(self) -> list[list]:
        return [[c.channel, c.kind.value, c.feature, c.placement, c.shift] for c in self.columns]

    @classmethod
    def from_json(cls, data: list[list]) -> FeatureSchema:
        return cls([ColumnSpec(ch, ChannelKind(k), f, p, int(s)) for ch, k, f, p, s in data])


@dataclass
class EpochFeatureMatrix:
    subject_id: str
    recording_id: str
    epoch_index: np.ndarray
    values: np.ndarray
    schema: FeatureSchema
    stages: list[str] | None = None
    config_digest: str | None = None

    def __post_init__(self) -> None:
        self.epoch_index = np.asarray(self.epoch_index, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.schema):
            raise ValueError(
                f"matrix shape {self.values.shape} does not match schema of {len(self.schema)} columns"
            )
        if len(self.epoch_index) != len(self.values):
            raise ValueError("epoch_index and values row counts differ")
        if self.stages is not None and len(self.stages) != len(self.values):
            raise ValueError("stages and values row counts differ")
        if not np.isfinite(self.values).all():
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n_epochs(self) -> int:
        return len(self.values)


def segment_epochs(recording: Recording, epoch_s: int = EPOCH_S) -> np.ndarray:
    """Start offsets (seconds) of the whole epochs the recording covers.

    Epoch i is [i*epoch_s, (i+1)*epoch_s); a trailing partial epoch is dropped.
    """
    duration = min(
        (Fraction(len(ch.data)) / ch.rate for ch in recording.channels.values()),
        default=Fraction(0),
    )
    n = int(duration // epoch_s)
    if n < 1:
        raise ValueError(
            f"recording {recording.recording_id!r} is shorter than one {epoch_s}-s epoch"
        )
    return np.arange(n, dtype=np.float64) * epoch_s


def _shift_rows(block: np.ndarray, shift: int) -> np.ndarray:
    """Rows moved by ``shift`` epochs with replicate padding at the edges."""
    idx = np.clip(np.arange(len(block)) + shift, 0, len(block) - 1)
    return block[idx]


def _placement_values(
    data: np.ndarray,
    rate: Fraction,
    placement: WindowPlacement,
    epochs: np.ndarray,
    extractor: FeatureExtractor,
    kind: ChannelKind,
) -> np.ndarray:
    """Evaluate the catalog for one channel and placement across epochs.

    Edge windows are evaluated on their truncated slice while coverage stays
    at or above MIN_COVERAGE; otherwise the nearest covered epoch's values
    are copied in afterwards.
    """
    duration = Fraction(len(data)) / rate
    n_feat = len(extractor.catalog(kind))
    out = np.empty((len(epochs), n_feat))
    pending: list[int] = []
    covered: list[int] = []
    for row, epoch in enumerate(epochs):
        start = Fraction(int(epoch) + placement.offset_s)
        end = start + placement.span_s
        lo = max(start, Fraction(0))
        hi = min(end, duration)
        coverage = float((hi - lo) / placement.span_s)
        if coverage < MIN_COVERAGE:
            pending.append(row)
            continue
        covered.append(row)
        window = data[int(lo * rate) : int(hi * rate)]
        out[row] = extractor.evaluate_window(window, float(rate), kind)
    for row in pending:
        if covered:
            nearest = min(covered, key=lambda c: abs(c - row))
            out[row] = out[nearest]
        else:
            start = Fraction(int(epochs[row]) + placement.offset_s)
            lo = max(start, Fraction(0))
            hi = min(start + placement.span_s, duration)
            window = data[int(lo * rate) : int(hi * rate)]
            out[row] = extractor.evaluate_window(window, float(rate), kind)
    return out


def extract_features(
    recording: Recording,
    channel_kinds: list[tuple[str, ChannelKind]],
    params: FeatureParams | None = None,
    epoch_range: tuple[int, int] | None = None,
) -> EpochFeatureMatrix:
    """Assemble the n_epochs x 1048 matrix for a preprocessed recording.

    ``channel_kinds`` fixes channel order (montage order). ``epoch_range``
    restricts the computed rows to [start, stop) on the recording's epoch
    grid; window slices still address the full signal, so rows near the
    range edges use real neighbouring data.
    """
    extractor = FeatureExtractor(params)
    schema = FeatureSchema.build(channel_kinds)
    starts = segment_epochs(recording)
    n_total = len(starts)
    lo, hi = (0, n_total) if epoch_range is None else epoch_range
    lo, hi = max(0, lo), min(n_total, hi)
    if hi <= lo:
        raise ValueError(f"epoch range [{lo}, {hi}) is empty")
    epochs = np.arange(lo, hi, dtype=np.int64) * EPOCH_S

    blocks = []
    for channel, kind in channel_kinds:
        if channel not in recording.channels:
            raise KeyError(f"channel {channel!r} missing from recording {recording.recording_id!r}")
        ch = recording.channels[channel]
        data = np.ascontiguousarray(ch.data, dtype=np.float64)
        per_placement = [
            _placement_values(data, ch.rate, placement, epochs, extractor, kind)
            for placement in PLACEMENTS
        ]
        n_feat = per_placement[0].shape[1]
        block = np.empty((len(epochs), n_feat, len(PLACEMENTS) + len(SHIFTS)))
        for p, values in enumerate(per_placement):
            block[:, :, p] = values
        w30 = per_placement[0]
        for s, shift in enumerate(SHIFTS):
            block[:, :, len(PLACEMENTS) + s] = _shift_rows(w30, shift)
        blocks.append(block.reshape(len(epochs), n_feat * (len(PLACEMENTS) + len(SHIFTS))))

    return EpochFeatureMatrix(
        subject_id=recording.subject_id,
        recording_id=recording.recording_id,
        epoch_index=np.arange(lo, hi, dtype=np.int64),
        values=np.hstack(blocks),
        schema=schema,
    )


# ---------------------------------------------------------------------------
# Persistence: CSV for interoperability, raw binary + JSON sidecar for speed
# ---------------------------------------------------------------------------


def _sidecar_path(bin_path: Path) -> Path:
    return bin_path.with_suffix(".json")


def save_matrix_binary(matrix: EpochFeatureMatrix, bin_path: str | Path) -> None:
    """Row-major little-endian float64 payload plus a JSON sidecar."""
    bin_path = Path(bin_path)
    payload = np.ascontiguousarray(matrix.values, dtype="<f8")
    bin_path.write_bytes(payload.tobytes())
    sidecar = {
        "format_version": MATRIX_FORMAT_VERSION,
        "n_rows": int(matrix.values.shape[0]),
        "n_cols": int(matrix.values.shape[1]),
        "dtype": "<f8",
        "subject_id": matrix.subject_id,
        "recording_id": matrix.recording_id,
        "epoch_index": matrix.epoch_index.tolist(),
        "stages": matrix.stages,
        "schema_hash": matrix.schema.digest(),
        "schema": matrix.schema.to_json(),
        "config_digest": matrix.config_digest,
    }
    _sidecar_path(bin_path).write_text(json.dumps(sidecar))


def load_matrix_binary(bin_path: str | Path) -> EpochFeatureMatrix:
    bin_path = Path(bin_path)
    sidecar = json.loads(_sidecar_path(bin_path).read_text())
    if sidecar["format_version"] != MATRIX_FORMAT_VERSION:
        raise ValueError(f"unsupported matrix format version {sidecar['format_version']}")
    schema = FeatureSchema.from_json(sidecar["schema"])
    if schema.digest() != sidecar["schema_hash"]:
        raise ValueError(f"schema hash mismatch in {bin_path.name}")
    values = np.frombuffer(bin_path.read_bytes(), dtype="<f8").reshape(
        sidecar["n_rows"], sidecar["n_cols"]
    )
    return EpochFeatureMatrix(
        subject_id=sidecar["subject_id"],
        recording_id=sidecar["recording_id"],
        epoch_index=np.asarray(sidecar["epoch_index"], dtype=np.int64),
        values=values.copy(),
        schema=schema,
        stages=sidecar["stages"],
        config_digest=sidecar.get("config_digest"),
    )


def save_matrix_csv(matrix: EpochFeatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "recording_id", "epoch_index", "stage"] + matrix.schema.names())
        stages = matrix.stages or [""] * matrix.n_epochs
        for i in range(matrix.n_epochs):
            writer.writerow(
                [matrix.subject_id, matrix.recording_id, int(matrix.epoch_index[i]), stages[i]]
                + [repr(float(v)) for v in matrix.values[i]]
            )


def load_matrix_csv(path: str | Path, schema: FeatureSchema) -> EpochFeatureMatrix:
    """Read a matrix CSV written by :func:`save_matrix_csv`.

    The schema is not serialized in the CSV, so the caller supplies it; the
    header is validated against it.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[4:] != schema.names():
            raise ValueError(f"CSV columns do not match the supplied schema in {path}")
        subject_id = recording_id = None
        epoch_index, stages, rows = [], [], []
        for row in reader:
            subject_id, recording_id = row[0], row[1]
            epoch_index.append(int(row[2]))
            stages.append(row[3])
            rows.append(np.asarray(row[4:], dtype=np.float64))
    return EpochFeatureMatrix(
        subject_id=subject_id or "",
        recording_id=recording_id or "",
        epoch_index=np.asarray(epoch_index, dtype=np.int64),
        values=np.vstack(rows) if rows else np.empty((0, len(schema))),
        schema=schema,
        stages=stages if any(stages) else None,
    )
