"""Metrics, leave-one-participant-out evaluation and channel ablations."""

from __future__ import annotations

import csv
import io
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .activity_synth import ACTIVITIES, CHANNELS, IMU_CHANNELS, LFI_CHANNELS
from .baseline_rfc import RfcConfig, stat_block, train_rfc
from .cnn1d import CnnConfig, TrainConfig, config_for, init_model, predict, train
from .dataset import Fold, HarDataset, lopocv_splits, participant_seed, stack
from .errors import InvalidConfig, LengthMismatch, LfiHarError
from .personalize import TRANSFER_DEFAULTS, personalize, select_shots

log = logging.getLogger(__name__)

MODEL_KINDS = ("rfc", "cnn", "cnn+transfer")


# --------------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    confusion: np.ndarray  # rows = truth, columns = prediction
    per_class_f1: np.ndarray
    macro_f1: float
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics_from_confusion(confusion) -> Metrics:
    cm = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(cm).astype(float)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = cm.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    return Metrics(cm, f1, float(f1.mean()), accuracy, precision, recall)


def compute_metrics(truth, predicted, vocabulary=ACTIVITIES) -> Metrics:
    """One-vs-rest F1 per class (0 when undefined), their mean, and accuracy."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if len(truth) != len(predicted):
        raise LengthMismatch(f"{len(truth)} labels vs {len(predicted)} predictions")
    if len(truth) == 0:
        raise LengthMismatch("need at least one label")
    c = len(vocabulary) if not isinstance(vocabulary, int) else vocabulary
    cm = np.zeros((c, c), dtype=np.int64)
    np.add.at(cm, (truth, predicted), 1)
    return metrics_from_confusion(cm)


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class AblationSpec:
    name: str
    channels: tuple[str, ...]

    def validate(self, vocabulary=CHANNELS) -> None:
        if not self.channels:
            raise InvalidConfig(f"ablation {self.name!r}: empty channel subset")
        unknown = [c for c in self.channels if c not in vocabulary]
        if unknown:
            raise InvalidConfig(f"ablation {self.name!r}: unknown channels {unknown}")


STANDARD_ABLATIONS = (
    AblationSpec("all", CHANNELS),
    AblationSpec("imu", IMU_CHANNELS),
    AblationSpec("lfi", LFI_CHANNELS),
    AblationSpec("lfi1", ("v1", "d1")),
    AblationSpec("lfi2", ("v2", "d2")),
)


@dataclass(frozen=True)
class ModelConfigs:
    rfc: RfcConfig = RfcConfig()
    cnn: CnnConfig = CnnConfig()
    train: TrainConfig = TrainConfig()
    transfer: TrainConfig = TRANSFER_DEFAULTS
    shots: int = 3


# --------------------------------------------------------------------------- LOPOCV


@dataclass
class FoldResult:
    participant_id: str
    metrics: Metrics
    n_train: int
    n_test: int
    baseline: Metrics | None = None  # plain CNN on the same post-shot windows (transfer runs)
    shot_indices: tuple[int, ...] = ()
    full: Metrics | None = None  # plain CNN on every test window (transfer runs)
    final_loss: float | None = None


@dataclass
class EvalReport:
    model_kind: str
    seed: int
    channels: tuple[str, ...]
    folds: dict[str, FoldResult] = field(default_factory=dict)

    def ordered(self) -> list[FoldResult]:
        return [self.folds[k] for k in sorted(self.folds)]

    def macro_f1s(self) -> np.ndarray:
        return np.array([f.metrics.macro_f1 for f in self.ordered()])

    @property
    def mean_macro_f1(self) -> float:
        return float(self.macro_f1s().mean())

    @property
    def std_macro_f1(self) -> float:
        return float(self.macro_f1s().std())

    def per_class_f1(self) -> np.ndarray:
        return np.mean([f.metrics.per_class_f1 for f in self.ordered()], axis=0)

    def baseline_mean(self, participants=None) -> float | None:
        rows = [f for f in self.ordered() if participants is None or f.participant_id in participants]
        if not rows or rows[0].baseline is None:
            return None
        return float(np.mean([f.baseline.macro_f1 for f in rows]))

    def full_mean(self) -> float | None:
        rows = self.ordered()
        if not rows or rows[0].full is None:
            return None
        return float(np.mean([f.full.macro_f1 for f in rows]))

    def mean_over(self, participants) -> float:
        return float(np.mean([f.metrics.macro_f1 for f in self.ordered() if f.participant_id in participants]))


def _fold_seeds(seed: int, pid: str) -> dict[str, int]:
    # the balancing draw uses participant_seed(seed, pid) itself; the rest are spawned from it
    children = participant_seed(seed, pid).spawn(4)
    names = ("rfc", "init", "train", "shots")
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def _run_fold(fold: Fold, kind: str, configs: ModelConfigs, seed: int, n_classes: int,
              n_channels: int, window_length: int) -> FoldResult:
    seeds = _fold_seeds(seed, fold.participant_id)
    t0 = time.perf_counter()
    if kind == "rfc":
        X = np.stack([stat_block(w.data) for w in fold.train])
        y = np.array([w.label for w in fold.train])
        Xt = np.stack([stat_block(w.data) for w in fold.test])
        yt = np.array([w.label for w in fold.test])
        forest = train_rfc((X, y), replace(configs.rfc, seed=seeds["rfc"]), n_classes)
        result = FoldResult(fold.participant_id, compute_metrics(yt, forest.predict(Xt), n_classes),
                            len(fold.train), len(fold.test))
    else:
        cfg = replace(config_for(n_channels, configs.cnn, window_length), num_classes=n_classes)
        x, y = stack(fold.train)
        model = init_model(cfg, seeds["init"])
        trained = train(model, x, y, replace(configs.train, seed=seeds["train"]), in_place=True)
        del x
        if kind == "cnn":
            xt, yt = stack(fold.test)
            result = FoldResult(fold.participant_id, compute_metrics(yt, predict(trained.model, xt), n_classes),
                                len(fold.train), len(fold.test), final_loss=trained.epoch_losses[-1]
                                if trained.epoch_losses else None)
        else:
            shots, rest = select_shots(fold.test, configs.shots, n_classes, seeds["shots"])
            xs, ys = stack(shots)
            adapted = personalize(trained.model, xs, ys, replace(configs.transfer, seed=seeds["shots"]),
                                  k=configs.shots)
            xf, yf = stack(fold.test)
            full = compute_metrics(yf, predict(trained.model, xf), n_classes)
            del xf
            xt, yt = stack(rest)
            result = FoldResult(
                fold.participant_id,
                compute_metrics(yt, predict(adapted, xt), n_classes),
                len(fold.train), len(rest),
                baseline=compute_metrics(yt, predict(trained.model, xt), n_classes),
                shot_indices=tuple(sorted(w.window_index for w in shots)),
                full=full,
                final_loss=trained.epoch_losses[-1] if trained.epoch_losses else None,
            )
    log.info("fold %s %s macro-F1 %.4f (%.1fs)", fold.participant_id, kind,
             result.metrics.macro_f1, time.perf_counter() - t0)
    return result


def run_lopocv(dataset: HarDataset, model_kind: str = "cnn", configs: ModelConfigs = ModelConfigs(),
               seed: int = 0, jobs: int = 1, fold_datasets: dict[str, HarDataset] | None = None) -> EvalReport:
    """Leave-one-participant-out evaluation; deterministic per seed for any ``jobs``.

    ``fold_datasets`` maps a held-out participant to the dataset its fold is
    cut from (strict standardisation builds one per fold).
    """
    if model_kind not in MODEL_KINDS:
        raise InvalidConfig(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    if fold_datasets is None:
        folds = lopocv_splits(dataset, seed)
    else:
        folds = []
        for pid in dataset.participants:
            folds += [f for f in lopocv_splits(fold_datasets[pid], seed) if f.participant_id == pid]
    n_classes = len(dataset.vocabulary)
    n_channels = len(dataset.channel_names)
    window_length = dataset.windows[0].data.shape[0]
    args = (model_kind, configs, seed, n_classes, n_channels, window_length)
    report = EvalReport(model_kind, seed, tuple(dataset.channel_names))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {f.participant_id: pool.submit(_run_fold, f, *args) for f in folds}
            for pid, fut in futures.items():
                report.folds[pid] = _with_context(fut.result, pid)
    else:
        for f in folds:
            report.folds[f.participant_id] = _with_context(lambda: _run_fold(f, *args), f.participant_id)
    return report


def _with_context(fn, pid):
    try:
        return fn()
    except LfiHarError as exc:
        raise type(exc)(f"fold {pid}: {exc}") from exc


@dataclass
class AblationRow:
    spec: AblationSpec
    report: EvalReport

    @property
    def per_class_f1(self) -> np.ndarray:
        return self.report.per_class_f1()

    @property
    def macro_f1(self) -> float:
        return self.report.mean_macro_f1


def run_ablation(dataset: HarDataset, specs, model_kind: str = "cnn", configs: ModelConfigs = ModelConfigs(),
                 seed: int = 0, jobs: int = 1, fold_datasets: dict[str, HarDataset] | None = None) -> list[AblationRow]:
    rows = []
    for spec in specs:
        spec.validate(dataset.channel_names)
        full = tuple(spec.channels) == tuple(dataset.channel_names)
        subset = dataset if full else dataset.select_channels(spec.channels)
        per_fold = None
        if fold_datasets is not None:
            per_fold = {k: v if full else v.select_channels(spec.channels) for k, v in fold_datasets.items()}
        rows.append(AblationRow(spec, run_lopocv(subset, model_kind, configs, seed, jobs, per_fold)))
    return rows


# --------------------------------------------------------------------------- reports


def provenance(config_hash: str, seed: int, **extra) -> dict[str, str]:
    info = {
        "config_hash": config_hash,
        "seed": str(seed),
        "lfihar": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    info.update({k: str(v) for k, v in extra.items()})
    return info


def _provenance_lines(prov: dict) -> list[str]:
    return [f"# {k}: {prov[k]}" for k in sorted(prov)]


def fold_table(report: EvalReport, vocabulary=ACTIVITIES, subset: str = "all") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    c = len(vocabulary)
    header = ["fold", "model", "subset", "seed", "n_test", "macro_f1", "accuracy"]
    header += [f"f1_{a}" for a in vocabulary]
    header += [f"cm_{i}_{j}" for i in range(c) for j in range(c)]
    w.writerow(header)
    for f in report.ordered():
        rows = [(report.model_kind, f.metrics)]
        if f.baseline is not None:
            rows.append(("cnn@post-shot", f.baseline))
        for model, m in rows:
            w.writerow([f.participant_id, model, subset, report.seed, f.n_test, f"{m.macro_f1:.6f}",
                        f"{m.accuracy:.6f}"] + [f"{v:.6f}" for v in m.per_class_f1]
                       + m.confusion.ravel().tolist())
    return buf.getvalue()


def ablation_table(rows: list[AblationRow], vocabulary=ACTIVITIES) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subset", "channels", "model", "seed", "macro_f1"] + [f"f1_{a}" for a in vocabulary])
    for r in rows:
        w.writerow([r.spec.name, " ".join(r.spec.channels), r.report.model_kind, r.report.seed,
                    f"{r.macro_f1:.6f}"] + [f"{v:.6f}" for v in r.per_class_f1])
    return buf.getvalue()


def summary_text(report: EvalReport, vocabulary=ACTIVITIES, shifted=()) -> str:
    lines = [f"model: {report.model_kind}", f"channels: {' '.join(report.channels)}", ""]
    lines.append(f"{'fold':<8}{'macro_f1':>10}{'accuracy':>10}{'n_test':>8}")
    for f in report.ordered():
        extra = f"   (plain cnn {f.baseline.macro_f1:.4f})" if f.baseline is not None else ""
        lines.append(f"{f.participant_id:<8}{f.metrics.macro_f1:>10.4f}{f.metrics.accuracy:>10.4f}{f.n_test:>8}{extra}")
    lines.append("")
    lines.append(f"mean macro_f1 {report.mean_macro_f1:.4f} (std {report.std_macro_f1:.4f})")
    if report.model_kind == "cnn+transfer":
        lines.append(f"plain cnn on the same windows {report.baseline_mean():.4f}")
        lines.append(f"plain cnn on all test windows {report.full_mean():.4f}")
        lines.append("note: transfer shots are removed from each fold's test windows")
        if shifted:
            lines.append(f"shifted participants {','.join(shifted)}: transfer {report.mean_over(shifted):.4f}"
                         f" vs plain {report.baseline_mean(shifted):.4f}")
    lines.append("per-class F1 (mean over folds):")
    for a, v in zip(vocabulary, report.per_class_f1()):
        lines.append(f"  {a:<8}{v:.4f}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, out_dir, prov: dict, name: str | None = None, shifted=()) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = name or report.model_kind.replace("+", "_")
    head = "\n".join(_provenance_lines(prov)) + "\n"
    paths = [out / f"{name}_summary.txt", out / f"{name}_folds.csv"]
    paths[0].write_text(head + summary_text(report, shifted=shifted))
    paths[1].write_text(head + fold_table(report))
    return paths


def write_ablation(rows: list[AblationRow], out_dir, prov: dict) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = "\n".join(_provenance_lines(prov)) + "\n"
    text = [f"{'subset':<8}{'macro_f1':>10}  " + " ".join(f"{a:>7}" for a in ACTIVITIES)]
    for r in rows:
        text.append(f"{r.spec.name:<8}{r.macro_f1:>10.4f}  " + " ".join(f"{v:>7.4f}" for v in r.per_class_f1))
    paths = [out / "ablation_summary.txt", out / "ablation.csv"]
    paths[0].write_text(head + "\n".join(text) + "\n")
    paths[1].write_text(head + ablation_table(rows))
    for r in rows:
        (out / f"ablation_{r.spec.name}_folds.csv").write_text(head + fold_table(r.report, subset=r.spec.name))
        paths.append(out / f"ablation_{r.spec.name}_folds.csv")
    return paths
