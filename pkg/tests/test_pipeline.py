import numpy as np
import pytest

from sleepstager.config import RunConfig
from sleepstager.labels import SleepStage, save_hypnogram_csv, Hypnogram
from sleepstager.pipeline import process_recording
from sleepstager.recording import ChannelKind
from sleepstager.synth import SyntheticSpec, generate_dataset
from tests.conftest import base_config


def config_for(data_dir, out_dir, **overrides):
    return RunConfig.from_dict(base_config(data_dir, out_dir, **overrides))


class TestProcessRecording:
    def test_csv_hypnogram_path(self, synth_root, tmp_path):
        data_dir, paths = synth_root
        cfg = config_for(data_dir, tmp_path)
        processed = process_recording(paths[0], cfg)
        matrix = processed.matrix
        assert matrix.values.shape[1] == 1048
        assert matrix.subject_id == "SYN000"
        assert matrix.stages is not None
        assert set(matrix.stages) <= {"W", "N1", "N2", "N3", "REM"}
        # one MOVEMENT epoch was generated, so one row is excluded
        assert processed.report["n_excluded"] == 1
        assert matrix.n_epochs == 39
        assert matrix.config_digest == cfg.extraction_digest()

    def test_edfplus_hypnogram_path(self, tmp_path):
        data_dir = tmp_path / "data"
        generate_dataset(
            data_dir,
            SyntheticSpec(n_subjects=1, epochs=24, seed=3, hypnogram_format="edfplus"),
        )
        cfg = config_for(data_dir, tmp_path / "out", **{"dataset.hypnograms": "edfplus"})
        processed = process_recording(data_dir / "SYN000n0.edf", cfg)
        assert processed.matrix.n_epochs == 24 - processed.report["n_excluded"]
        assert set(processed.matrix.stages) <= {"W", "N1", "N2", "N3", "REM"}

    def test_subject_regex(self, synth_root, tmp_path):
        data_dir, paths = synth_root
        cfg = config_for(data_dir, tmp_path, **{"dataset.subject_regex": r"^SYN(\d+)n"})
        processed = process_recording(paths[0], cfg)
        assert processed.matrix.subject_id == "000"

    def test_missing_hypnogram_raises_unless_optional(self, tmp_path):
        data_dir = tmp_path / "data"
        generate_dataset(data_dir, SyntheticSpec(n_subjects=1, epochs=8, seed=5))
        (data_dir / "SYN000n0.hypnogram.csv").unlink()
        cfg = config_for(data_dir, tmp_path / "out")
        with pytest.raises(FileNotFoundError):
            process_recording(data_dir / "SYN000n0.edf", cfg)
        processed = process_recording(data_dir / "SYN000n0.edf", cfg, labels_optional=True)
        assert processed.matrix.stages is None
        assert processed.matrix.n_epochs == 8

    def test_trim_wake_drops_leading_and_trailing_wake(self, tmp_path):
        # 150 epochs, sleep only at 70..79: the trim keeps 60 wake epochs on
        # each side, so rows 0..9 and 140..149 disappear
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        from sleepstager.synth import write_synthetic_recording

        rng = np.random.default_rng(11)
        stages = [SleepStage.W] * 150
        for i in range(70, 80):
            stages[i] = SleepStage.N2
        spec = SyntheticSpec(epochs=150)
        write_synthetic_recording(data_dir, "trimrec", "SYNT", stages, rng, spec)
        hyp = Hypnogram(stages=stages, subject_id="SYNT", recording_id="trimrec")
        save_hypnogram_csv(hyp, data_dir / "trimrec.hypnogram.csv")

        cfg = config_for(data_dir, tmp_path / "out", **{"dataset.trim_wake": True})
        processed = process_recording(data_dir / "trimrec.edf", cfg)
        assert processed.report["trim_range"] == [10, 140]
        assert processed.matrix.epoch_index.min() == 10
        assert processed.matrix.epoch_index.max() == 139
        assert processed.matrix.n_epochs == 130

    def test_trim_shifted_columns_use_real_neighbours(self, tmp_path):
        # with the margin, the first kept row's shift -1 column must equal the
        # untrimmed run's value, not a replicate of itself
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        from sleepstager.synth import write_synthetic_recording

        rng = np.random.default_rng(12)
        stages = [SleepStage.W] * 100
        for i in range(65, 72):
            stages[i] = SleepStage.N3
        spec = SyntheticSpec(epochs=100)
        write_synthetic_recording(data_dir, "marginrec", "SYNM", stages, rng, spec)
        hyp = Hypnogram(stages=stages, subject_id="SYNM", recording_id="marginrec")
        save_hypnogram_csv(hyp, data_dir / "marginrec.hypnogram.csv")

        trimmed = process_recording(
            data_dir / "marginrec.edf",
            config_for(data_dir, tmp_path / "o1", **{"dataset.trim_wake": True}),
        ).matrix
        full = process_recording(
            data_dir / "marginrec.edf", config_for(data_dir, tmp_path / "o2")
        ).matrix
        start = int(trimmed.epoch_index.min())
        assert start == 5
        names = trimmed.schema.names()
        col = names.index("EEG1__std__w30__s-1")
        row_full = np.where(full.epoch_index == start)[0][0]
        assert trimmed.values[0, col] == full.values[row_full, col]

    def test_emg_at_native_1hz_passes_through(self, synth_root, tmp_path):
        data_dir, paths = synth_root
        cfg = config_for(data_dir, tmp_path)
        matrix = process_recording(paths[0], cfg).matrix
        names = matrix.schema.names()
        # the 1 Hz EMG cannot support the 0.5-10 Hz band nor Welch features
        assert (matrix.values[:, names.index("EMG__fourier_entropy_10__w30__s0")] == 0.0).all()
        assert (matrix.values[:, names.index("EMG__std__w30__s0")] > 0.0).all()

    def test_montage_kinds_respected(self, synth_root, tmp_path):
        data_dir, paths = synth_root
        montage = [
            {"name": "EEG1", "kind": "EEG", "pick": "EEG Fpz-Cz"},
            {"name": "EEG2", "kind": "EEG", "difference": ["EEG Fpz-Cz", "EEG Pz-Oz"]},
            {"name": "EOG", "kind": "EOG", "pick": "EOG horizontal"},
            {"name": "EMG", "kind": "EMG", "pick": "EMG submental"},
        ]
        cfg = config_for(data_dir, tmp_path, **{"dataset.montage": montage})
        matrix = process_recording(paths[0], cfg).matrix
        assert matrix.values.shape[1] == 1048
