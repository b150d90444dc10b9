import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfihar import dataset as D
from lfihar.activity_synth import ACTIVITIES, CHANNELS, LABELS, TRANSITION_CODE, SensorStream
from lfihar.errors import EmptyClass, IntegrityError, RateMismatch


def make_stream(n_seconds=300.0, pid="P1", label=1, rates=(1000.0, 860.0), seed=0):
    rng = np.random.default_rng(seed)
    channels, r = {}, {}
    for i, c in enumerate(CHANNELS):
        rate = rates[0] if i < 4 else rates[1]
        channels[c] = rng.normal(i, 1 + i, int(round(n_seconds * rate)))
        r[c] = rate
    labels = np.full(int(round(n_seconds * rates[0])), label, dtype=np.int8)
    return SensorStream(pid, channels, r, labels, rates[0])


def uniform_stream(matrix, labels, pid="P1", rate=120.0):
    channels = {c: matrix[:, i] for i, c in enumerate(CHANNELS)}
    return SensorStream(pid, channels, {c: rate for c in CHANNELS}, np.asarray(labels, dtype=np.int8), rate)


def window_obj(label, pid="P1", k=0):
    data = np.zeros((4, 2), dtype=np.float32)
    data.flags.writeable = False
    return D.LabeledWindow(data, label, pid, k)


# ---------------------------------------------------------------- resampling

def test_resample_length_300s():
    out = D.resample(make_stream(300.0))
    assert all(len(x) == 36000 for x in out.channels.values())
    assert len(out.labels) == 36000


def test_resample_constant():
    s = make_stream(20.0)
    s.channels["v1"][:] = 2.5
    assert np.allclose(D.resample(s).channels["v1"], 2.5)


def test_resample_sine_amplitude():
    rate = 1000.0
    t = np.arange(int(60 * rate)) / rate
    s = make_stream(60.0)
    s.channels["v1"] = np.sin(2 * np.pi * 5 * t)
    y = D.resample(s).channels["v1"]
    tt = np.arange(len(y)) / 120.0
    fitted = np.linalg.lstsq(np.c_[np.sin(2 * np.pi * 5 * tt), np.cos(2 * np.pi * 5 * tt)], y, rcond=None)[0]
    assert math.hypot(*fitted) == pytest.approx(1.0, rel=0.02)


def test_resample_rejects_upsampling():
    with pytest.raises(RateMismatch):
        D.resample(make_stream(5.0), 2000.0)


# ---------------------------------------------------------------- standardization

def test_standardize_oracle():
    s = SensorStream("P", {"a": np.array([1.0, 2.0, 3.0])}, {"a": 1.0}, np.zeros(3, np.int8), 1.0)
    out = D.standardize(s).channels["a"]
    assert np.allclose(out, [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)


def test_standardize_constant_and_idempotent():
    s = make_stream(10.0)
    s.channels["d1"][:] = 7.0
    once = D.standardize(D.resample(s))
    assert np.array_equal(once.channels["d1"], np.zeros_like(once.channels["d1"]))
    twice = D.standardize(once)
    for c in CHANNELS:
        assert np.allclose(once.channels[c], twice.channels[c], atol=1e-9)


def test_standardize_preserves_extrema():
    s = D.resample(make_stream(10.0))
    out = D.standardize(s)
    for c in CHANNELS:
        assert np.argmax(out.channels[c]) == np.argmax(s.channels[c])
        assert np.argmin(out.channels[c]) == np.argmin(s.channels[c])


# ---------------------------------------------------------------- windowing

def test_window_count_oracle():
    assert D.window_stride(3600, 0.3) == 2520
    starts = D.window_starts(36000, 3600, 0.3)
    assert len(starts) == 13 and starts[-1] == 30240
    assert len(D.window_starts(3000, 3600, 0.3)) == 0


@settings(max_examples=200)
@given(st.integers(0, 100_000), st.integers(1, 5000), st.floats(0.0, 0.95))
def test_window_start_arithmetic(length, T, overlap):
    stride = D.window_stride(T, overlap)
    assert stride == max(math.floor(T * (1 - overlap) + 1e-9), 1)
    starts = D.window_starts(length, T, overlap)
    expected = (length - T) // stride + 1 if length >= T else 0
    assert len(starts) == expected
    if expected:
        assert np.array_equal(np.diff(starts), np.full(expected - 1, stride))
        assert starts[0] == 0 and starts[-1] + T <= length


def test_modal_label_majority_and_ties():
    assert D.modal_label(np.array([1] * 60 + [5] * 40)) == 1
    assert D.modal_label(np.array([5] * 50 + [1] * 50)) == 5
    assert D.modal_label(np.array([1, 5, 5, 1])) == 1


def test_window_drops_transition_and_labels():
    n = 120 * 100
    labels = np.full(n, 1)
    labels[120 * 40:120 * 75] = TRANSITION_CODE
    s = uniform_stream(np.random.default_rng(0).normal(size=(n, 10)), labels)
    wins = D.window(s, 30.0, 0.3)
    starts = D.window_starts(n, 3600, 0.3)
    assert len(starts) == 4
    assert [w.window_index for w in wins] == [0, 1, 3]  # window 2 is all transition
    assert all(w.label == 1 and w.data.shape == (3600, 10) for w in wins)
    assert not wins[0].data.flags.writeable


def test_window_contents_match_stream():
    n = 120 * 70
    m = np.random.default_rng(1).normal(size=(n, 10))
    wins = D.window(uniform_stream(m, np.full(n, 2)), 30.0, 0.3)
    for w in wins:
        assert np.allclose(w.data, m[w.start:w.start + 3600], atol=1e-6)


# ---------------------------------------------------------------- balancing

def test_balance_counts_and_originals():
    ws = [window_obj(0, k=i) for i in range(5)] + [window_obj(1, k=10 + i) for i in range(3)]
    out = D.balance(ws, seed=0)
    labels = [w.label for w in out]
    assert labels.count(0) == 5 and labels.count(1) == 5
    assert out[:8] == ws
    assert all(w in ws[5:] for w in out[8:])


def test_balance_already_balanced_and_single_class():
    ws = [window_obj(0), window_obj(1)]
    assert D.balance(ws, 3) == ws
    single = [window_obj(2), window_obj(2)]
    assert D.balance(single, 0, vocabulary=[2]) == single


def test_balance_empty_class():
    with pytest.raises(EmptyClass, match="video"):
        D.balance([window_obj(0)], 0, vocabulary=[0, 2])


def test_balance_does_not_mutate():
    ws = [window_obj(0), window_obj(0), window_obj(1)]
    before = [w.data.copy() for w in ws]
    D.balance(ws, 1)
    assert all(np.array_equal(a, w.data) for a, w in zip(before, ws))
    assert len(ws) == 3


def test_balance_deterministic():
    ws = [window_obj(0, k=i) for i in range(9)] + [window_obj(1, k=20 + i) for i in range(2)]
    a = [w.window_index for w in D.balance(ws, 5)]
    b = [w.window_index for w in D.balance(ws, 5)]
    assert a == b


# ---------------------------------------------------------------- splits

def tiny_dataset(n_participants=3):
    ws = []
    for p in range(n_participants):
        for c in range(len(ACTIVITIES)):
            for k in range(1 + (c + p) % 3):
                ws.append(window_obj(c, f"P{p + 1}", k=100 * c + k))
    return D.HarDataset(ws, ("a", "b"))


def test_lopocv_structure():
    ds = tiny_dataset(3)
    folds = D.lopocv_splits(ds, seed=0)
    assert [f.participant_id for f in folds] == ["P1", "P2", "P3"]
    seen = []
    for f in folds:
        assert {w.participant_id for w in f.test} == {f.participant_id}
        assert f.participant_id not in {w.participant_id for w in f.train}
        counts = np.bincount([w.label for w in f.train], minlength=7)
        assert len(set(counts.tolist())) == 1
        seen += f.test
    assert sorted(map(id, seen)) == sorted(map(id, ds.windows))


def test_lopocv_needs_two():
    with pytest.raises(ValueError):
        D.lopocv_splits(tiny_dataset(1))


def test_prepare_end_to_end():
    n = 120 * 65
    labels = np.full(n * 1000 // 120, 3, dtype=np.int8)
    s = make_stream(65.0)
    s = SensorStream(s.participant_id, s.channels, s.rates, labels, 1000.0)
    ds = D.prepare([s])
    assert len(ds.windows) == 2
    assert ds.windows[0].data.shape == (3600, 10)
    assert ds.windows[0].data.dtype == np.float32


def test_select_channels():
    n = 120 * 40
    m = np.random.default_rng(0).normal(size=(n, 10))
    ds = D.HarDataset(D.window(uniform_stream(m, np.full(n, 0)), 30, 0.3), CHANNELS)
    sub = ds.select_channels(["accx", "v1"])
    assert np.array_equal(sub.windows[0].data, ds.windows[0].data[:, [4, 0]])
    assert ds.select_channels(CHANNELS) is ds


def test_strict_uses_pooled_train_stats():
    a = D.resample(make_stream(40.0, "A", seed=1))
    b = D.resample(make_stream(40.0, "B", seed=2))
    ds = D.prepare_strict([a, b], test_id="B")
    stats = D.channel_stats([a])
    expected = (a.channels["v1"][:3600] - stats["v1"][0]) / stats["v1"][1]
    assert np.allclose(ds.of("A")[0].data[:, 0], expected, atol=1e-5)


# ---------------------------------------------------------------- files

def test_csv_round_trip_and_manifest(tmp_path):
    n = 120 * 10
    labels = np.r_[np.full(n // 2, 1), np.full(n - n // 2, TRANSITION_CODE)]
    s = uniform_stream(np.random.default_rng(0).normal(size=(n, 10)), labels)
    path = tmp_path / "P1.csv"
    digest = D.write_participant_csv(path, s)
    header = path.read_text().splitlines()[0]
    assert header == "t,v1,d1,v2,d2,accx,accy,accz,gyrx,gyry,gyrz,label"
    assert path.read_text().splitlines()[2].startswith("0.008333,")
    back = D.read_participant_csv(path, "P1", 120.0)
    assert np.array_equal(back.labels, s.labels)
    for c in CHANNELS:
        assert np.allclose(back.channels[c], s.channels[c], rtol=1e-8)
    assert LABELS[back.labels[-1]] == "transition"

    D.write_manifest(tmp_path / "m.json", {"participants": [
        {"id": "P1", "file": "P1.csv", "sha256": digest, "rate": 120.0}]})
    _, streams = D.load_streams(tmp_path / "m.json")
    assert streams[0].participant_id == "P1"

    path.write_text(path.read_text().replace("transition", "read", 1))
    with pytest.raises(IntegrityError, match="checksum"):
        D.load_streams(tmp_path / "m.json")
