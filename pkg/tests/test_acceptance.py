"""Acceptance suite: one test per criterion, each at its stated tolerance.

The cohort experiments (7 to 9) share one synthetic cohort generated through
the command line with the default configuration. Expect about 40 minutes on a
single desktop core.
"""

import time

import numpy as np
import pytest

from lfihar import cli
from lfihar import cnn1d as C
from lfihar import dataset as D
from lfihar import eval_harness as E
from lfihar.activity_synth import ACTIVITIES
from lfihar.lfi_fmcw import LaserParams, RampConfig, RampFrequencies, beat_frequency, combine_freqs, doppler_frequency

SEED = 0


def report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


@pytest.fixture(scope="session")
def cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort")
    assert cli.main(["synth", "--out", str(out), "--seed", str(SEED)]) == 0
    return out


@pytest.fixture(scope="session")
def experiment(cohort):
    cfg = cli.load_config()
    configs = cli.model_configs(cfg)
    manifest, streams = D.load_streams(cohort / "manifest.json")
    dataset = cli._dataset(cfg, streams)
    t0 = time.perf_counter()
    rfc = E.run_lopocv(dataset, "rfc", configs, SEED)
    transfer = E.run_lopocv(dataset, "cnn+transfer", configs, SEED)
    elapsed = time.perf_counter() - t0
    return dict(dataset=dataset, configs=configs, manifest=manifest, rfc=rfc, transfer=transfer, elapsed=elapsed)


def test_criterion_1_dsp_round_trip():
    t0 = time.perf_counter()
    worst_d, worst_v = cli.dsp_demo(SEED, n=200)
    elapsed = time.perf_counter() - t0
    ok = worst_d < 1e-4 and worst_v < 1.0 and elapsed < 10
    assert report(1, ok, f"distance {worst_d * 1e3:.2e} mm, velocity {worst_v:.3f} of tolerance, {elapsed:.1f}s")


def test_criterion_2_frequency_algebra():
    rng = np.random.default_rng(SEED)
    ok = True
    for up, down in rng.integers(0, 2**40, size=(500, 2)).astype(float):
        f0, fd = combine_freqs(RampFrequencies(up, down))
        ok &= f0 + fd == up and f0 - fd == down
        ok &= f0 == (up + down) / 2 and fd == (up - down) / 2
    laser, ramp = LaserParams(), RampConfig()
    for d, v, a in zip(rng.uniform(15e-3, 35e-3, 100), rng.uniform(-0.05, 0.05, 100), rng.uniform(0.1, 4, 100)):
        ok &= beat_frequency(a * d, laser, ramp) == pytest.approx(a * beat_frequency(d, laser, ramp), rel=1e-12)
        ok &= doppler_frequency(a * v, laser) == pytest.approx(a * doppler_frequency(v, laser), rel=1e-12)
        ok &= doppler_frequency(-v, laser) == -doppler_frequency(v, laser)
    assert report(2, bool(ok), "combine identities exact, f0 and fd linear")


def test_criterion_3_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    for s in range(25):
        rng = np.random.default_rng(s)
        cfg = C.random_tiny_config(rng)
        m = C.init_model(cfg, s, np.float64)
        for k in m.params:
            if k.endswith("gamma"):
                m.params[k] = rng.uniform(-1.5, 1.5, m.params[k].shape)
            if k.endswith("beta"):
                m.params[k] = rng.normal(0, 0.5, m.params[k].shape)
        b = int(rng.integers(2, 5))
        x = rng.normal(size=(b, cfg.input_length, cfg.input_channels))
        y = rng.integers(0, cfg.num_classes, b)
        worst = max(worst, max(C.gradient_check(m, x, y, seed=s).values()))
    elapsed = time.perf_counter() - t0
    assert report(3, worst < 1e-4 and elapsed < 60, f"worst relative error {worst:.2e}, {elapsed:.1f}s")


def test_criterion_4_overfit_oracle():
    cfg = C.CnnConfig()
    rng = np.random.default_rng(SEED)
    y = np.repeat(np.arange(7), 2)
    t = np.arange(cfg.input_length) / 120.0
    x = rng.normal(0, 0.3, size=(14, cfg.input_length, cfg.input_channels))
    x += np.sin(2 * np.pi * (0.5 + y[:, None]) * t)[:, :, None]  # class sets the tone
    x = x.astype(np.float32)
    model = C.init_model(cfg, SEED)
    tc = C.TrainConfig()
    drop_rng = np.random.default_rng(1)
    opt = C.Adam(model.params, tc.learning_rate, tc.weight_decay)
    reached = None
    for epoch in range(200):
        opt.lr = tc.learning_rate * tc.lr_decay_per_epoch**epoch
        _, grads = C.loss_and_grads(model, x, y, rng=drop_rng)
        opt.step(model.params, grads)
        if (C.predict(model, x) == y).all():
            reached = epoch + 1
            break
    assert report(4, reached is not None, f"100% training accuracy after {reached} epochs")


def test_criterion_5_pipeline_arithmetic():
    starts = D.window_starts(36000, 3600, 0.3)
    s = D.SensorStream("P", {"a": np.array([1.0, 2.0, 3.0])}, {"a": 1.0}, np.zeros(3, np.int8), 1.0)
    z = D.standardize(s).channels["a"]
    ws = []
    for label, n in ((0, 5), (1, 2), (2, 3)):
        for k in range(n):
            data = np.full((4, 1), float(k), np.float32)
            data.flags.writeable = False
            ws.append(D.LabeledWindow(data, label, "P1", 10 * label + k))
    snapshot = [(w.label, w.window_index, w.data.copy()) for w in ws]
    out = D.balance(ws, SEED, vocabulary=[0, 1, 2])
    counts = np.bincount([w.label for w in out], minlength=3)
    untouched = len(ws) == 10 and all(
        (w.label, w.window_index) == s[:2] and np.array_equal(w.data, s[2]) for w, s in zip(ws, snapshot))
    ok = (len(starts) == 13 and np.allclose(z, [-1.2247, 0.0, 1.2247], atol=5e-5)
          and counts.tolist() == [5, 5, 5] and untouched)
    assert report(5, ok, f"{len(starts)} windows, z={np.round(z, 4).tolist()}, balanced {counts.tolist()}")


def test_criterion_6_metric_oracle():
    m = E.metrics_from_confusion([[8, 2], [3, 7]])
    perfect = E.compute_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3).macro_f1
    ok = abs(m.macro_f1 - 0.7494) <= 1e-4 and perfect == 1.0
    assert report(6, ok, f"macro F1 {m.macro_f1:.6f}, perfect {perfect}")


@pytest.mark.slow
def test_criterion_7_scaled_lopocv(experiment):
    rfc, tr = experiment["rfc"], experiment["transfer"]
    shifted = cli.shifted_participants(experiment["manifest"])
    counts = {a: sum(w.label == i for w in experiment["dataset"].windows) for i, a in enumerate(ACTIVITIES)}
    cnn = tr.full_mean()
    shifted_transfer, shifted_plain = tr.mean_over(shifted), tr.baseline_mean(shifted)
    ok = (len(tr.folds) == 8 and len(shifted) > 0 and min(counts.values()) > 0
          and cnn >= 0.85 and cnn >= rfc.mean_macro_f1 and shifted_transfer >= shifted_plain
          and experiment["elapsed"] <= 1800)
    assert report(7, ok, f"rfc {rfc.mean_macro_f1:.4f}, cnn {cnn:.4f}, transfer {tr.mean_macro_f1:.4f}; "
                         f"shifted {','.join(shifted)}: transfer {shifted_transfer:.4f} vs cnn {shifted_plain:.4f}; "
                         f"{experiment['elapsed'] / 60:.1f} min")


@pytest.mark.slow
def test_criterion_8_ablation_ordering(experiment):
    specs = [s for s in E.STANDARD_ABLATIONS if s.name in ("imu", "lfi")]
    rows = {r.spec.name: r.per_class_f1 for r in
            E.run_ablation(experiment["dataset"], specs, "cnn", experiment["configs"], SEED)}
    f1 = {name: dict(zip(ACTIVITIES, v)) for name, v in rows.items()}
    imu, lfi = f1["imu"], f1["lfi"]
    ok = imu["walk"] > lfi["walk"] and imu["cycle"] > lfi["cycle"] and lfi["read"] > imu["read"]
    detail = " ".join(f"{a}: imu {imu[a]:.3f} lfi {lfi[a]:.3f};" for a in ("walk", "cycle", "read"))
    assert report(8, ok, detail)


SMALL = ["cohort.participants = 3", "cohort.min_seconds = 70", "cohort.shifted_participants = 1",
         "train.epochs = 1", "transfer.epochs = 2", "cnn.fc1 = 64", "transfer.shots = 1"]


@pytest.mark.slow
def test_criterion_9_determinism(cohort, tmp_path):
    small = []
    for s in SMALL:
        small += ["--set", s]
    same = True
    for i in (1, 2):
        assert cli.main(["synth", "--out", str(tmp_path / f"c{i}"), "--seed", "3", *small]) == 0
    for f in sorted((tmp_path / "c1").iterdir()):
        same &= f.read_bytes() == (tmp_path / "c2" / f.name).read_bytes()
    runs = [("rfc", cohort / "manifest.json", []), ("transfer", tmp_path / "c1" / "manifest.json", small)]
    for task, manifest, extra in runs:
        for i in (1, 2):
            code = cli.main(["run", str(manifest), "--task", task, "--out", str(tmp_path / f"{task}{i}"), *extra])
            assert code == 0
        for f in sorted((tmp_path / f"{task}1").iterdir()):
            same &= f.read_bytes() == (tmp_path / f"{task}2" / f.name).read_bytes()
    assert report(9, bool(same), "synth, rfc and transfer outputs byte-identical across re-runs")
