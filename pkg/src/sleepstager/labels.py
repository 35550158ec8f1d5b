"""Hypnogram construction, stage mapping, exclusion, and wake trimming."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .windowing import EPOCH_S, EpochFeatureMatrix

logger = logging.getLogger(__name__)


class SleepStage(str, Enum):
    W = "W"
    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    REM = "REM"
    # raw-only stages, removed or merged before modeling
    N4 = "N4"
    MOVEMENT = "MOVEMENT"
    UNKNOWN = "UNKNOWN"


#: Fixed class order of the model; everything downstream indexes into this.
MODEL_CLASSES: tuple[SleepStage, ...] = (
    SleepStage.W,
    SleepStage.N1,
    SleepStage.N2,
    SleepStage.N3,
    SleepStage.REM,
)

SLEEP_STAGES = frozenset(
    {SleepStage.N1, SleepStage.N2, SleepStage.N3, SleepStage.N4, SleepStage.REM}
)

INVALID_STAGES = frozenset({SleepStage.MOVEMENT, SleepStage.UNKNOWN})

#: Wake context kept on each side of the sleep period: 30 minutes.
TRIM_WAKE_EPOCHS = 60


def _load_stage_map() -> dict[str, SleepStage]:
    raw = json.loads(resources.files("sleepstager").joinpath("data/stage_map.json").read_text())
    return {text: SleepStage(stage) for text, stage in raw.items()}


STAGE_TEXT_MAP = _load_stage_map()


@dataclass
class Hypnogram:
    stages: list[SleepStage]
    subject_id: str
    recording_id: str
    epoch_s: int = EPOCH_S

    def __len__(self) -> int:
        return len(self.stages)

    def counts(self) -> dict[str, int]:
        out = {stage.value: 0 for stage in SleepStage}
        for s in self.stages:
            out[s.value] += 1
        return {k: v for k, v in out.items() if v}


def annotations_to_hypnogram(
    annotations: list[tuple[float, float | None, str]],
    recording_duration_s: float,
    subject_id: str,
    recording_id: str,
    epoch_s: int = EPOCH_S,
) -> Hypnogram:
    """Fill a 30-s epoch grid from stage annotations.

    Non-stage annotation texts are ignored; epochs no annotation covers stay
    UNKNOWN; two annotations assigning different stages to one epoch is an
    error (the hypnogram would be ambiguous).
    """
    n = int(recording_duration_s // epoch_s)
    stages: list[SleepStage | None] = [None] * n
    origin: list[float] = [math.nan] * n
    for onset, duration, text in annotations:
        stage = STAGE_TEXT_MAP.get(text.strip())
        if stage is None:
            continue
        span = duration if duration is not None else epoch_s
        first = math.ceil(onset / epoch_s)
        last = math.floor((onset + span) / epoch_s)
        for epoch in range(max(first, 0), min(last, n)):
            if stages[epoch] is not None and stages[epoch] != stage:
                raise ValueError(
                    f"contradictory stage annotations for epoch {epoch}: "
                    f"{stages[epoch].value} from onset {origin[epoch]:g}s vs "
                    f"{stage.value} from onset {onset:g}s"
                )
            stages[epoch] = stage
            origin[epoch] = onset
    return Hypnogram(
        stages=[s if s is not None else SleepStage.UNKNOWN for s in stages],
        subject_id=subject_id,
        recording_id=recording_id,
        epoch_s=epoch_s,
    )


def map_rk_to_aasm(h: Hypnogram) -> Hypnogram:
    """Merge the R&K N4 stage into N3; all other stages pass through."""
    mapped = [SleepStage.N3 if s == SleepStage.N4 else s for s in h.stages]
    return replace(h, stages=mapped)


def align_to_epochs(h: Hypnogram, n_epochs: int) -> Hypnogram:
    """Truncate or UNKNOWN-pad the hypnogram onto a recording's epoch grid."""
    stages = h.stages[:n_epochs]
    if len(stages) < n_epochs:
        stages = stages + [SleepStage.UNKNOWN] * (n_epochs - len(stages))
    return replace(h, stages=stages)


def exclude_invalid(
    h: Hypnogram, features: EpochFeatureMatrix
) -> tuple[Hypnogram, EpochFeatureMatrix]:
    """Drop MOVEMENT/UNKNOWN epochs from hypnogram and matrix together.

    Runs after feature extraction so removed epochs still contributed
    temporal context to their neighbours' shifted columns.
    """
    if len(h) != features.n_epochs:
        raise ValueError(
            f"hypnogram has {len(h)} epochs but matrix has {features.n_epochs} rows"
        )
    keep = np.asarray([s not in INVALID_STAGES for s in h.stages], dtype=bool)
    if not keep.any():
        logger.warning(
            "recording %s: every epoch is MOVEMENT/UNKNOWN; nothing left to score",
            h.recording_id,
        )
    kept_stages = [s for s, k in zip(h.stages, keep) if k]
    matrix = EpochFeatureMatrix(
        subject_id=features.subject_id,
        recording_id=features.recording_id,
        epoch_index=features.epoch_index[keep],
        values=features.values[keep],
        schema=features.schema,
        stages=[s.value for s in kept_stages],
        config_digest=features.config_digest,
    )
    return replace(h, stages=kept_stages), matrix


def trim_wake(h: Hypnogram, margin_epochs: int = TRIM_WAKE_EPOCHS) -> tuple[int, int]:
    """Epoch range keeping 30 min of wake before and after the sleep period."""
    sleep_idx = [i for i, s in enumerate(h.stages) if s in SLEEP_STAGES]
    if not sleep_idx:
        raise ValueError(
            f"recording {h.recording_id!r} contains no sleep epochs; cannot trim wake"
        )
    start = max(0, sleep_idx[0] - margin_epochs)
    stop = min(len(h), sleep_idx[-1] + margin_epochs + 1)
    return start, stop


def slice_hypnogram(h: Hypnogram, start: int, stop: int) -> Hypnogram:
    return replace(h, stages=h.stages[start:stop])


# ---------------------------------------------------------------------------
# CSV sidecar (epoch_index,stage) and the per-recording label report
# ---------------------------------------------------------------------------


def load_hypnogram_csv(path: str | Path, subject_id: str, recording_id: str) -> Hypnogram:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["epoch_index", "stage"]:
            raise ValueError(f"{path.name}: expected header 'epoch_index,stage'")
        entries = {}
        for row in reader:
            if not row:
                continue
            idx = int(row[0])
            text = row[1].strip()
            stage = STAGE_TEXT_MAP.get(text)
            if stage is None:
                raise ValueError(f"{path.name}: unknown stage {text!r} at epoch {idx}")
            if idx in entries and entries[idx] != stage:
                raise ValueError(f"{path.name}: contradictory stages for epoch {idx}")
            entries[idx] = stage
    if not entries:
        raise ValueError(f"{path.name}: empty hypnogram")
    n = max(entries) + 1
    stages = [entries.get(i, SleepStage.UNKNOWN) for i in range(n)]
    return Hypnogram(stages=stages, subject_id=subject_id, recording_id=recording_id)


def save_hypnogram_csv(h: Hypnogram, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_index", "stage"])
        for i, stage in enumerate(h.stages):
            writer.writerow([i, stage.value])


def label_report(
    raw: Hypnogram,
    mapped: Hypnogram,
    trim_range: tuple[int, int] | None,
    n_excluded: int,
    n_scored: int,
) -> dict:
    return {
        "recording_id": raw.recording_id,
        "subject_id": raw.subject_id,
        "n_epochs_raw": len(raw),
        "raw_counts": raw.counts(),
        "mapped_counts": mapped.counts(),
        "trim_range": list(trim_range) if trim_range else None,
        "n_excluded": n_excluded,
        "n_scored": n_scored,
    }
