"""Synthetic PSG datasets whose sleep stages deterministically control the
signal's spectral content. Used by the test suite and benchmarks; the scoring
pipeline must separate these stages almost perfectly."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from fractions import Fraction
from pathlib import Path

import numpy as np

from .edf import EdfWriteSignal, write_edf
from .labels import Hypnogram, SleepStage, save_hypnogram_csv
from .windowing import EPOCH_S

#: Dominant EEG tone (Hz) and amplitude (uV) per stage; band placement maps
#: each stage to a distinct frequency band so relative powers separate them.
EEG_TONES = {
    SleepStage.W: (22.0, 15.0),       # beta
    SleepStage.N1: (6.5, 30.0),       # theta
    SleepStage.N2: (13.5, 40.0),      # sigma (spindle-like)
    SleepStage.N3: (1.5, 75.0),       # delta
    SleepStage.REM: (5.0, 25.0),      # theta, distinguished by EOG/EMG
}

#: Slow eye-movement amplitude (uV) per stage for the EOG channel.
EOG_AMPLITUDE = {
    SleepStage.W: 20.0,
    SleepStage.N1: 15.0,
    SleepStage.N2: 5.0,
    SleepStage.N3: 2.0,
    SleepStage.REM: 60.0,
}

#: Muscle tone (uV RMS-like) per stage for the EMG envelope.
EMG_TONE = {
    SleepStage.W: 30.0,
    SleepStage.N1: 10.0,
    SleepStage.N2: 8.0,
    SleepStage.N3: 5.0,
    SleepStage.REM: 1.0,
}

CHANNEL_LABELS = {
    "eeg1": "EEG Fpz-Cz",
    "eeg2": "EEG Pz-Oz",
    "eog": "EOG horizontal",
    "emg": "EMG submental",
}


@dataclass
class SyntheticSpec:
    n_subjects: int = 2
    recordings_per_subject: int = 1
    epochs: int = 60
    seed: int = 0
    hypnogram_format: str = "csv"  # "csv" | "edfplus"
    emg_rate_hz: int = 1
    lead_wake_epochs: int = 4
    movement_epochs: int = 1


def stage_sequence(n_epochs: int, rng: np.random.Generator, spec: SyntheticSpec) -> list[SleepStage]:
    """A sleep-like arc: leading/trailing wake, N1-N2-N3-N2-REM cycles, and a
    couple of MOVEMENT epochs sprinkled into the middle."""
    cycle = [
        SleepStage.N1,
        SleepStage.N2,
        SleepStage.N2,
        SleepStage.N3,
        SleepStage.N3,
        SleepStage.N2,
        SleepStage.REM,
        SleepStage.REM,
    ]
    lead = min(spec.lead_wake_epochs, max(0, n_epochs // 8))
    stages = [SleepStage.W] * lead
    while len(stages) < n_epochs - lead:
        stages.extend(cycle)
    stages = stages[: max(n_epochs - lead, lead)]
    stages.extend([SleepStage.W] * (n_epochs - len(stages)))
    for _ in range(spec.movement_epochs):
        pos = int(rng.integers(lead + 1, max(lead + 2, n_epochs - lead - 1)))
        stages[pos] = SleepStage.MOVEMENT
    return stages[:n_epochs]


def synth_channels(
    stages: list[SleepStage], rng: np.random.Generator, emg_rate_hz: int
) -> dict[str, np.ndarray]:
    """Per-channel physical-unit signals on a continuous time axis."""
    fs = 100
    n = len(stages) * EPOCH_S * fs
    t = np.arange(n) / fs
    eeg1 = 3.0 * rng.standard_normal(n)
    eeg2 = 3.0 * rng.standard_normal(n)
    eog = 2.0 * rng.standard_normal(n)
    phase1, phase2, phase3 = rng.uniform(0, 2 * np.pi, size=3)
    for e, stage in enumerate(stages):
        sl = slice(e * EPOCH_S * fs, (e + 1) * EPOCH_S * fs)
        if stage in EEG_TONES:
            freq, amp = EEG_TONES[stage]
            eeg1[sl] += amp * np.sin(2 * np.pi * freq * t[sl] + phase1)
            eeg2[sl] += 0.8 * amp * np.sin(2 * np.pi * freq * t[sl] + phase2)
            eog[sl] += EOG_AMPLITUDE[stage] * np.sin(2 * np.pi * 0.8 * t[sl] + phase3)
        else:
            eeg1[sl] += 60.0 * rng.standard_normal(sl.stop - sl.start)
            eeg2[sl] += 60.0 * rng.standard_normal(sl.stop - sl.start)
            eog[sl] += 40.0 * rng.standard_normal(sl.stop - sl.start)

    n_emg = len(stages) * EPOCH_S * emg_rate_hz
    emg = np.empty(n_emg)
    per_epoch = EPOCH_S * emg_rate_hz
    for e, stage in enumerate(stages):
        tone = EMG_TONE.get(stage, 45.0)
        emg[e * per_epoch : (e + 1) * per_epoch] = tone + 0.5 * rng.standard_normal(per_epoch)
    return {"eeg1": eeg1, "eeg2": eeg2, "eog": eog, "emg": emg}


def write_synthetic_recording(
    directory: Path,
    recording_id: str,
    subject_id: str,
    stages: list[SleepStage],
    rng: np.random.Generator,
    spec: SyntheticSpec,
) -> Path:
    channels = synth_channels(stages, rng, spec.emg_rate_hz)
    signals = [
        EdfWriteSignal(
            label=CHANNEL_LABELS["eeg1"],
            samples_per_record=100,
            data=channels["eeg1"],
            physical_min=-250.0,
            physical_max=250.0,
        ),
        EdfWriteSignal(
            label=CHANNEL_LABELS["eeg2"],
            samples_per_record=100,
            data=channels["eeg2"],
            physical_min=-250.0,
            physical_max=250.0,
        ),
        EdfWriteSignal(
            label=CHANNEL_LABELS["eog"],
            samples_per_record=100,
            data=channels["eog"],
            physical_min=-250.0,
            physical_max=250.0,
        ),
        EdfWriteSignal(
            label=CHANNEL_LABELS["emg"],
            samples_per_record=spec.emg_rate_hz,
            data=channels["emg"],
            physical_min=-100.0,
            physical_max=100.0,
            physical_dimension="uV",
        ),
    ]
    edf_path = directory / f"{recording_id}.edf"
    annotations = None
    if spec.hypnogram_format == "edfplus":
        annotations = [
            (float(e * EPOCH_S), float(EPOCH_S), f"Sleep stage {_stage_text(stage)}")
            for e, stage in enumerate(stages)
        ]
    write_edf(
        edf_path,
        signals,
        record_duration=Fraction(1),
        start_datetime=datetime(2001, 1, 1, 22, 0, 0),
        patient_id=f"{subject_id} X X X",
        recording_id=f"Startdate 01-JAN-2001 {recording_id}",
        annotations=annotations,
    )
    if spec.hypnogram_format == "csv":
        hyp = Hypnogram(stages=list(stages), subject_id=subject_id, recording_id=recording_id)
        save_hypnogram_csv(hyp, directory / f"{recording_id}.hypnogram.csv")
    return edf_path


def _stage_text(stage: SleepStage) -> str:
    return {
        SleepStage.W: "W",
        SleepStage.N1: "1",
        SleepStage.N2: "2",
        SleepStage.N3: "3",
        SleepStage.N4: "4",
        SleepStage.REM: "R",
        SleepStage.MOVEMENT: "M",
        SleepStage.UNKNOWN: "?",
    }[stage]


def generate_dataset(directory: str | Path, spec: SyntheticSpec) -> list[Path]:
    """Write the full synthetic dataset; returns the EDF paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    paths = []
    for s in range(spec.n_subjects):
        subject_id = f"SYN{s:03d}"
        for r in range(spec.recordings_per_subject):
            recording_id = f"{subject_id}n{r}"
            stages = stage_sequence(spec.epochs, rng, spec)
            paths.append(
                write_synthetic_recording(directory, recording_id, subject_id, stages, rng, spec)
            )
    return paths
