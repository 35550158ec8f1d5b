"""Physical-unit signal containers and montage derivation."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from fractions import Fraction

import numpy as np


class ChannelKind(str, Enum):
    EEG = "EEG"
    EOG = "EOG"
    EMG = "EMG"


@dataclass
class Channel:
    """One sampled signal in physical units.

    The sampling rate is kept as an exact rational (samples_per_record /
    record_duration) so that non-integer rates do not drift over long files.
    """

    rate: Fraction
    data: np.ndarray

    @property
    def rate_hz(self) -> float:
        return float(self.rate)

    @property
    def duration_s(self) -> float:
        return len(self.data) / float(self.rate)


@dataclass
class Recording:
    """Multichannel recording with provenance metadata.

    ``subject_id`` must be non-empty: it is the grouping key for
    cross-validation and leaking it would silently break fold discipline.
    """

    channels: dict[str, Channel]
    start_datetime: datetime
    source_path: str
    subject_id: str
    recording_id: str

    def __post_init__(self) -> None:
        if not self.subject_id:
            raise ValueError("Recording.subject_id must be non-empty")
        for label, ch in self.channels.items():
            if ch.rate <= 0:
                raise ValueError(f"channel {label!r} has non-positive sampling rate")

    def duration_s(self) -> float:
        """Duration of the shortest channel, in seconds."""
        if not self.channels:
            return 0.0
        return min(ch.duration_s for ch in self.channels.values())


@dataclass
class MontageRule:
    """One derived output channel: a pick, a difference, or an average."""

    name: str
    kind: ChannelKind
    pick: str | None = None
    difference: tuple[str, str] | None = None
    average: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        modes = [self.pick is not None, self.difference is not None, self.average is not None]
        if sum(modes) != 1:
            raise ValueError(
                f"montage rule {self.name!r} must set exactly one of pick/difference/average"
            )
        if self.difference is not None and len(self.difference) != 2:
            raise ValueError(f"montage rule {self.name!r}: difference needs exactly 2 inputs")
        if self.average is not None and len(self.average) < 1:
            raise ValueError(f"montage rule {self.name!r}: average needs at least 1 input")

    @property
    def inputs(self) -> tuple[str, ...]:
        if self.pick is not None:
            return (self.pick,)
        if self.difference is not None:
            return tuple(self.difference)
        assert self.average is not None
        return tuple(self.average)


@dataclass
class Montage:
    """Ordered channel derivation rules applied to a raw recording."""

    rules: list[MontageRule] = field(default_factory=list)

    @classmethod
    def from_config(cls, entries: list[dict]) -> Montage:
        """Build a montage from config dicts.

        Each entry carries ``name``, ``kind`` and exactly one of ``pick``,
        ``difference`` (2 labels), or ``average`` (list of labels).
        """
        rules = []
        for e in entries:
            rules.append(
                MontageRule(
                    name=e["name"],
                    kind=ChannelKind(e["kind"]),
                    pick=e.get("pick"),
                    difference=tuple(e["difference"]) if "difference" in e else None,
                    average=tuple(e["average"]) if "average" in e else None,
                )
            )
        return cls(rules)

    def output_names(self) -> list[str]:
        return [r.name for r in self.rules]

    def kinds(self) -> dict[str, ChannelKind]:
        return {r.name: r.kind for r in self.rules}

    def input_labels(self) -> set[str]:
        labels: set[str] = set()
        for r in self.rules:
            labels.update(r.inputs)
        return labels

    def check_default_shape(self) -> None:
        """Validate the default analysis shape: 2 EEG, 1 EOG, 1 EMG outputs."""
        counts = {k: 0 for k in ChannelKind}
        for r in self.rules:
            counts[r.kind] += 1
        expected = {ChannelKind.EEG: 2, ChannelKind.EOG: 1, ChannelKind.EMG: 1}
        if counts != expected:
            raise ValueError(f"montage outputs {counts} do not match the 2 EEG / 1 EOG / 1 EMG shape")


def derive_channels(recording: Recording, montage: Montage) -> Recording:
    """Apply montage rules, returning a recording with exactly the montage outputs.

    Difference is sample-wise ``a - b``; average is the sample-wise arithmetic
    mean. Inputs combined by one rule must share sampling rate and length.
    """
    out: dict[str, Channel] = {}
    for rule in montage.rules:
        missing = [lab for lab in rule.inputs if lab not in recording.channels]
        if missing:
            raise KeyError(
                f"montage rule {rule.name!r} references missing channel(s) {missing}; "
                f"available: {sorted(recording.channels)}"
            )
        chans = [recording.channels[lab] for lab in rule.inputs]
        rates = {ch.rate for ch in chans}
        if len(rates) != 1:
            raise ValueError(
                f"montage rule {rule.name!r} combines channels with different rates: "
                f"{[str(r) for r in sorted(rates)]}"
            )
        lengths = {len(ch.data) for ch in chans}
        if len(lengths) != 1:
            raise ValueError(f"montage rule {rule.name!r} combines channels of different lengths: {sorted(lengths)}")
        if rule.pick is not None:
            data = chans[0].data.copy()
        elif rule.difference is not None:
            data = chans[0].data - chans[1].data
        else:
            data = np.mean(np.stack([ch.data for ch in chans]), axis=0)
        out[rule.name] = Channel(rate=chans[0].rate, data=data)
    return Recording(
        channels=out,
        start_datetime=recording.start_datetime,
        source_path=recording.source_path,
        subject_id=recording.subject_id,
        recording_id=recording.recording_id,
    )
