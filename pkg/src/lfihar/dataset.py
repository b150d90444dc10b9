"""Data preparation: common-rate resampling, per-participant standardization,
sliding windows with modal labels, class balancing and leave-one-participant-out
splits. Also the per-participant CSV files and the JSON manifest."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd

from .activity_synth import ACTIVITIES, CHANNELS, LABELS, TRANSITION_CODE, SensorStream
from .errors import EmptyClass, IntegrityError, RateMismatch

COMMON_RATE = 120.0
MANIFEST_VERSION = 1


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    data: np.ndarray  # (T, S), read-only view
    label: int  # index into LABELS
    participant_id: str
    window_index: int
    start: int = 0  # first sample in the participant's common-rate stream


@dataclass
class HarDataset:
    windows: list[LabeledWindow]
    channel_names: tuple[str, ...]
    vocabulary: tuple[str, ...] = ACTIVITIES
    provenance: dict = field(default_factory=dict)

    @property
    def participants(self) -> list[str]:
        seen: dict[str, None] = {}
        for w in self.windows:
            seen.setdefault(w.participant_id)
        return list(seen)

    def of(self, participant_id: str) -> list[LabeledWindow]:
        return [w for w in self.windows if w.participant_id == participant_id]

    def select_channels(self, names) -> "HarDataset":
        idx = [self.channel_names.index(n) for n in names]
        if idx == list(range(len(self.channel_names))):
            return self
        windows = []
        for w in self.windows:
            data = np.ascontiguousarray(w.data[:, idx])
            data.flags.writeable = False
            windows.append(replace(w, data=data))
        return HarDataset(windows, tuple(names), self.vocabulary, dict(self.provenance))


# --------------------------------------------------------------------------- resampling


def _bin_starts(n_out: int, src_rate: float, dst_rate: float) -> np.ndarray:
    """First source index of each centre-aligned output bin, exact rational arithmetic."""
    ratio = Fraction(src_rate).limit_denominator(10**6) / Fraction(dst_rate).limit_denominator(10**6)
    num, den = ratio.numerator, ratio.denominator
    j = np.arange(n_out, dtype=np.int64)
    # ceil((j - 1/2) * src/dst) = ceil((2j - 1) * num / (2 * den))
    starts = -((-(2 * j - 1) * num) // (2 * den))
    return np.maximum(starts, 0)


def resample(stream: SensorStream, target_rate: float = COMMON_RATE) -> SensorStream:
    """Bin-average every channel onto one ``target_rate`` timeline.

    Output sample ``j`` sits at ``t = j / target_rate`` and averages the source
    samples in ``[t - h/2, t + h/2)``, ``h = 1 / target_rate``. Labels take the
    source label nearest to ``t``.
    """
    lowest = min(stream.rates.values())
    if target_rate > lowest:
        raise RateMismatch(f"target rate {target_rate} Hz exceeds source rate {lowest} Hz")
    duration = stream.duration
    n_out = int(math.floor(duration * target_rate + 1e-9))
    channels = {}
    for name, x in stream.channels.items():
        starts = _bin_starts(n_out, stream.rates[name], target_rate)
        x = np.asarray(x, dtype=float)
        sums = np.add.reduceat(x, starts) if n_out else np.zeros(0)
        ends = np.append(starts[1:], len(x))
        channels[name] = sums / (ends - starts)
    lr = Fraction(stream.label_rate).limit_denominator(10**6) / Fraction(target_rate).limit_denominator(10**6)
    j = np.arange(n_out, dtype=np.int64)
    nearest = (2 * j * lr.numerator + lr.denominator) // (2 * lr.denominator)
    labels = stream.labels[np.minimum(nearest, len(stream.labels) - 1)]
    return SensorStream(stream.participant_id, channels,
                        {k: float(target_rate) for k in channels}, labels, float(target_rate))


# --------------------------------------------------------------------------- standardization


def channel_stats(streams) -> dict[str, tuple[float, float]]:
    """Pooled population mean and std per channel over one or more streams."""
    streams = list(streams)
    out = {}
    for name in streams[0].channels:
        x = np.concatenate([np.asarray(s.channels[name], dtype=float) for s in streams])
        out[name] = (float(x.mean()), float(x.std()))
    return out


def standardize(stream: SensorStream, stats: dict[str, tuple[float, float]] | None = None) -> SensorStream:
    """Zero mean, unit (population) variance per channel.

    With ``stats=None`` the statistics come from the stream itself. Constant
    channels map to zeros.
    """
    out = {}
    for name, x in stream.channels.items():
        x = np.asarray(x, dtype=float)
        mean, std = stats[name] if stats is not None else (x.mean(), x.std())
        out[name] = np.zeros_like(x) if std == 0 else (x - mean) / std
    return replace(stream, channels=out)


# --------------------------------------------------------------------------- windows


def window_starts(length: int, window: int, overlap: float) -> np.ndarray:
    stride = window_stride(window, overlap)
    if length < window:
        return np.zeros(0, dtype=np.int64)
    return np.arange((length - window) // stride + 1, dtype=np.int64) * stride


def window_stride(window: int, overlap: float) -> int:
    # the epsilon keeps e.g. 100 * (1 - 0.3) from flooring to 69
    return max(int(math.floor(window * (1 - overlap) + 1e-9)), 1)


def modal_label(labels: np.ndarray) -> int:
    """Most frequent label; ties go to the label that occurs first."""
    values, first, counts = np.unique(labels, return_index=True, return_counts=True)
    best = counts.max()
    tied = np.flatnonzero(counts == best)
    return int(values[tied[np.argmin(first[tied])]])


def window(
    stream: SensorStream,
    window_seconds: float = 30.0,
    overlap: float = 0.3,
    channel_names=None,
) -> list[LabeledWindow]:
    """Cut a uniform-rate stream into overlapping windows.

    Windows whose modal label is the transition label are dropped; the
    surviving windows keep their position in ``window_index``.
    """
    names = tuple(channel_names or stream.channels)
    rate = stream.rates[names[0]]
    if any(stream.rates[n] != rate for n in names) or stream.label_rate != rate:
        raise RateMismatch("window() needs a single-rate stream; resample first")
    T = int(round(window_seconds * rate))
    matrix = np.ascontiguousarray(np.stack([stream.channels[n] for n in names], axis=1), dtype=np.float32)
    matrix.flags.writeable = False
    out = []
    for k, s in enumerate(window_starts(len(matrix), T, overlap)):
        label = modal_label(stream.labels[s:s + T])
        if label == TRANSITION_CODE:
            continue
        out.append(LabeledWindow(matrix[s:s + T], label, stream.participant_id, k, int(s)))
    return out


def prepare(
    streams,
    rate: float = COMMON_RATE,
    window_seconds: float = 30.0,
    overlap: float = 0.3,
    channel_names=CHANNELS,
    provenance: dict | None = None,
) -> HarDataset:
    """resample -> per-participant standardize -> window, for every stream."""
    windows = []
    for s in streams:
        if any(r != rate for r in s.rates.values()) or s.label_rate != rate:
            s = resample(s, rate)
        windows += window(standardize(s), window_seconds, overlap, channel_names)
    return HarDataset(windows, tuple(channel_names), ACTIVITIES, dict(provenance or {}))


def prepare_strict(
    streams, test_id: str, rate: float = COMMON_RATE, window_seconds: float = 30.0,
    overlap: float = 0.3, channel_names=CHANNELS,
) -> HarDataset:
    """Like :func:`prepare` but every stream uses the pooled statistics of the
    streams other than ``test_id``, so nothing about the test participant leaks."""
    resampled = [s if s.label_rate == rate else resample(s, rate) for s in streams]
    stats = channel_stats(s for s in resampled if s.participant_id != test_id)
    windows = []
    for s in resampled:
        windows += window(standardize(s, stats), window_seconds, overlap, channel_names)
    return HarDataset(windows, tuple(channel_names), ACTIVITIES)


# --------------------------------------------------------------------------- balancing and splits


def balance(windows, seed=0, vocabulary=None) -> list[LabeledWindow]:
    """Upsample minority classes with seeded draws (with replacement) until
    every class matches the largest. Originals come first and are untouched."""
    windows = list(windows)
    labels = np.array([w.label for w in windows], dtype=np.int64)
    classes = sorted(set(labels.tolist())) if vocabulary is None else list(vocabulary)
    by_class = {c: np.flatnonzero(labels == c) for c in classes}
    empty = [c for c, idx in by_class.items() if len(idx) == 0]
    if empty:
        names = [LABELS[c] if isinstance(c, (int, np.integer)) and c < len(LABELS) else c for c in empty]
        raise EmptyClass(f"no windows for classes {names}")
    target = max(len(idx) for idx in by_class.values())
    rng = np.random.default_rng(seed)
    out = list(windows)
    for c in classes:
        idx = by_class[c]
        if len(idx) < target:
            out += [windows[i] for i in rng.choice(idx, size=target - len(idx), replace=True)]
    return out


@dataclass
class Fold:
    participant_id: str
    train: list[LabeledWindow]
    test: list[LabeledWindow]


def participant_seed(seed: int, participant_id: str) -> np.random.SeedSequence:
    digest = int.from_bytes(hashlib.sha256(participant_id.encode()).digest()[:4], "little")
    return np.random.SeedSequence([int(seed), digest])


def lopocv_splits(dataset: HarDataset, seed: int = 0) -> list[Fold]:
    """One fold per participant: test = that participant's original windows,
    train = everyone else's windows, balanced."""
    pids = dataset.participants
    if len(pids) < 2:
        raise ValueError("leave-one-participant-out needs at least 2 participants")
    vocab = list(range(len(dataset.vocabulary)))
    folds = []
    for pid in pids:
        test = dataset.of(pid)
        rest = [w for w in dataset.windows if w.participant_id != pid]
        present = sorted({w.label for w in rest})
        train = balance(rest, participant_seed(seed, pid), vocab if len(present) == len(vocab) else present)
        folds.append(Fold(pid, train, test))
    return folds


def stack(windows) -> tuple[np.ndarray, np.ndarray]:
    """``(N, T, S)`` data tensor and ``(N,)`` labels."""
    if not windows:
        return np.zeros((0, 0, 0), dtype=np.float32), np.zeros(0, dtype=np.int64)
    return np.stack([w.data for w in windows]), np.array([w.label for w in windows], dtype=np.int64)


# --------------------------------------------------------------------------- files


def write_participant_csv(path: str | Path, stream: SensorStream) -> str:
    """Write a single-rate stream; returns the file's sha256."""
    rate = stream.label_rate
    n = len(stream.labels)
    frame = pd.DataFrame({"t": np.arange(n) / rate})
    for name in CHANNELS:
        frame[name] = stream.channels[name][:n]
    frame["label"] = np.asarray(LABELS, dtype=object)[stream.labels]
    frame["t"] = frame["t"].map("{:.6f}".format)
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
    return file_sha256(path)


def read_participant_csv(path: str | Path, participant_id: str, rate: float) -> SensorStream:
    frame = pd.read_csv(path, dtype={"label": str}, float_precision="round_trip")
    missing = [c for c in ("t",) + CHANNELS + ("label",) if c not in frame.columns]
    if missing:
        raise IntegrityError(f"{path}: missing columns {missing}")
    unknown = sorted(set(frame["label"]) - set(LABELS))
    if unknown:
        raise IntegrityError(f"{path}: unknown labels {unknown}")
    codes = {name: i for i, name in enumerate(LABELS)}
    labels = frame["label"].map(codes).to_numpy(dtype=np.int8)
    channels = {c: frame[c].to_numpy(dtype=float) for c in CHANNELS}
    return SensorStream(participant_id, channels, {c: rate for c in CHANNELS}, labels, rate)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def load_streams(manifest_path: str | Path, verify: bool = True) -> tuple[dict, list[SensorStream]]:
    """Read every participant listed in a manifest, checking sha256 sums."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    streams = []
    for entry in manifest["participants"]:
        path = manifest_path.parent / entry["file"]
        if verify:
            if not path.exists():
                raise IntegrityError(f"{path}: listed in manifest but missing")
            digest = file_sha256(path)
            if digest != entry["sha256"]:
                raise IntegrityError(f"{path}: checksum {digest[:12]} != manifest {entry['sha256'][:12]}")
        streams.append(read_participant_csv(path, entry["id"], float(entry["rate"])))
    return manifest, streams
