"""Per-recording orchestration: ingest, montage, preprocess, label, extract.

This is the path both the CLI and the evaluation protocols go through; it
owns the ordering decisions (filter at native rate then resample; trim the
hypnogram before extraction but keep a two-epoch margin so shifted features
at the trim edges see real data; exclude invalid epochs only after
extraction).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dsp import BandpassSpec, bandpass_zero_phase, resample_rational
from .edf import EdfParseError, parse_edfplus_annotations, read_edf_signals
from .features import FeatureParams
from .labels import (
    Hypnogram,
    annotations_to_hypnogram,
    align_to_epochs,
    exclude_invalid,
    label_report,
    load_hypnogram_csv,
    map_rk_to_aasm,
    trim_wake,
)
from .recording import Channel, ChannelKind, Montage, Recording, derive_channels
from .windowing import EPOCH_S, EpochFeatureMatrix, extract_features, segment_epochs

logger = logging.getLogger(__name__)

#: Extra epochs extracted on each side of the trim range so that shifted
#: features of the kept rows come from real neighbouring epochs.
TRIM_MARGIN_EPOCHS = 2


def subject_id_for(path: Path, subject_regex: str | None, inferred: str) -> str:
    if subject_regex:
        match = re.search(subject_regex, path.stem)
        if not match or not match.groups():
            raise ValueError(
                f"subject_regex {subject_regex!r} found no capture group in {path.stem!r}"
            )
        return match.group(1)
    return inferred


def band_for_kind(kind: ChannelKind, cfg_pre: dict) -> BandpassSpec:
    key = {ChannelKind.EEG: "eeg_band", ChannelKind.EOG: "eog_band", ChannelKind.EMG: "emg_band"}
    low, high = cfg_pre[key[kind]]
    return BandpassSpec(float(low), float(high), int(cfg_pre["filter_order"]))


def preprocess_recording(
    recording: Recording, kinds: dict[str, ChannelKind], cfg_pre: dict
) -> Recording:
    """Band-pass per channel kind at native rate, then resample down to the
    target rate. Channels whose rate cannot support the band (the 1 Hz EMG
    envelope) skip the filter; channels below the target rate are left as-is.
    """
    target = Fraction(str(cfg_pre["target_rate_hz"]))
    out: dict[str, Channel] = {}
    for name, ch in recording.channels.items():
        kind = kinds[name]
        spec = band_for_kind(kind, cfg_pre)
        data = ch.data
        nyquist = ch.rate / 2
        if spec.high_hz < nyquist:
            data = bandpass_zero_phase(data, float(ch.rate), spec)
        else:
            logger.info(
                "channel %s at %s Hz cannot support the %s-%s Hz band; filter skipped",
                name, float(ch.rate), spec.low_hz, spec.high_hz,
            )
        rate = ch.rate
        if rate > target:
            data = resample_rational(data, rate, target)
            rate = target
        out[name] = Channel(rate=rate, data=np.asarray(data, dtype=np.float64))
    return Recording(
        channels=out,
        start_datetime=recording.start_datetime,
        source_path=recording.source_path,
        subject_id=recording.subject_id,
        recording_id=recording.recording_id,
    )


def load_hypnogram(edf_path: Path, cfg_dataset: dict, recording: Recording) -> Hypnogram:
    source = cfg_dataset["hypnograms"]
    if source == "edfplus":
        annotations = parse_edfplus_annotations(edf_path)
        return annotations_to_hypnogram(
            annotations,
            recording_duration_s=recording.duration_s(),
            subject_id=recording.subject_id,
            recording_id=recording.recording_id,
        )
    if source == "csv":
        sidecar = edf_path.with_suffix("").parent / (
            edf_path.stem + cfg_dataset["hypnogram_suffix"]
        )
        if not sidecar.exists():
            raise FileNotFoundError(f"hypnogram sidecar {sidecar} not found")
        return load_hypnogram_csv(sidecar, recording.subject_id, recording.recording_id)
    raise ValueError(f"unknown hypnogram source {source!r} (expected 'csv' or 'edfplus')")


@dataclass
class ProcessedRecording:
    matrix: EpochFeatureMatrix  # scored rows only (model-class stages attached)
    report: dict


def _subset_rows(matrix: EpochFeatureMatrix, mask: np.ndarray) -> EpochFeatureMatrix:
    return EpochFeatureMatrix(
        subject_id=matrix.subject_id,
        recording_id=matrix.recording_id,
        epoch_index=matrix.epoch_index[mask],
        values=matrix.values[mask],
        schema=matrix.schema,
        stages=None,
        config_digest=matrix.config_digest,
    )


def feature_params(config: RunConfig) -> FeatureParams:
    f = config.features
    return FeatureParams(
        higuchi_kmax=int(f["higuchi_kmax"]),
        permutation_order=int(f["permutation_order"]),
        permutation_delay=int(f["permutation_delay"]),
        welch_segment_s=float(f["welch_segment_s"]),
    )


def process_recording(
    edf_path: str | Path, config: RunConfig, labels_optional: bool = False
) -> ProcessedRecording:
    """Full per-recording path from EDF to a scored feature matrix.

    With ``labels_optional`` a missing hypnogram is tolerated: no trimming,
    no exclusion, and the matrix carries no stages (prediction-only use).
    """
    edf_path = Path(edf_path)
    dataset = config.dataset
    montage = Montage.from_config(dataset["montage"])
    kinds = montage.kinds()

    raw = read_edf_signals(edf_path, selection=sorted(montage.input_labels()))
    raw.subject_id = subject_id_for(edf_path, dataset.get("subject_regex"), raw.subject_id)
    derived = derive_channels(raw, montage)
    prepared = preprocess_recording(derived, kinds, config.preprocessing)

    n_epochs = len(segment_epochs(prepared))
    try:
        hypnogram = load_hypnogram(edf_path, dataset, prepared)
    except (FileNotFoundError, EdfParseError):
        if not labels_optional:
            raise
        hypnogram = None

    if hypnogram is None:
        matrix = extract_features(
            prepared,
            [(r.name, r.kind) for r in montage.rules],
            params=feature_params(config),
        )
        matrix.config_digest = config.extraction_digest()
        return ProcessedRecording(
            matrix=matrix,
            report=label_report(
                raw=Hypnogram([], prepared.subject_id, prepared.recording_id),
                mapped=Hypnogram([], prepared.subject_id, prepared.recording_id),
                trim_range=None,
                n_excluded=0,
                n_scored=matrix.n_epochs,
            ),
        )

    hyp_raw = align_to_epochs(hypnogram, n_epochs)
    hyp = map_rk_to_aasm(hyp_raw)

    if dataset["trim_wake"]:
        start, stop = trim_wake(hyp)
    else:
        start, stop = 0, n_epochs

    matrix = extract_features(
        prepared,
        [(r.name, r.kind) for r in montage.rules],
        params=feature_params(config),
        epoch_range=(start - TRIM_MARGIN_EPOCHS, stop + TRIM_MARGIN_EPOCHS),
    )
    matrix.config_digest = config.extraction_digest()
    keep = (matrix.epoch_index >= start) & (matrix.epoch_index < stop)
    matrix = _subset_rows(matrix, keep)

    hyp_kept = Hypnogram(
        stages=hyp.stages[start:stop],
        subject_id=hyp.subject_id,
        recording_id=hyp.recording_id,
    )
    hyp_scored, matrix = exclude_invalid(hyp_kept, matrix)

    report = label_report(
        raw=hyp_raw,
        mapped=hyp,
        trim_range=(start, stop) if dataset["trim_wake"] else None,
        n_excluded=len(hyp_kept) - len(hyp_scored),
        n_scored=matrix.n_epochs,
    )
    return ProcessedRecording(matrix=matrix, report=report)


def discover_recordings(config: RunConfig) -> list[Path]:
    import glob

    pattern = config.dataset["recordings"]
    if not pattern:
        raise ValueError("dataset.recordings glob is empty")
    paths = sorted(Path(p) for p in glob.glob(pattern, recursive=True))
    if not paths:
        raise FileNotFoundError(f"no recordings match {pattern!r}")
    return paths
