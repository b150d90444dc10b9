"""Command-line entry point: ``lfihar synth`` / ``lfihar run`` / ``lfihar audit``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .activity_synth import ACTIVITIES, CHANNELS, cohort_from_config, gen_participant, profiles_from_config
from .baseline_rfc import RfcConfig
from .cnn1d import REFERENCE_BUDGET, CnnConfig, ConvBlock, TrainConfig, analytic_param_count, fc_param_count
from .config import Config, ConfigError
from .dataset import (
    HarDataset, file_sha256, load_streams, prepare, prepare_strict, resample, write_manifest,
    write_participant_csv,
)
from .errors import IntegrityError, InvalidConfig, NonFiniteLoss
from .eval_harness import (
    STANDARD_ABLATIONS, AblationSpec, ModelConfigs, provenance, run_ablation, run_lopocv, write_ablation,
    write_report,
)
from .lfi_fmcw import EYE_RADIUS, SensorNoise

log = logging.getLogger("lfihar")

EXIT_CONFIG = 2
EXIT_INTEGRITY = 3
EXIT_DIVERGED = 4
TASKS = ("rfc", "cnn", "transfer", "ablate", "dsp-demo")
MANIFEST_FORMAT = "lfihar-manifest-1"


# --------------------------------------------------------------------------- configuration


def load_config(paths=(), overrides=()) -> Config:
    """Built-in defaults, then each ``--config`` file in order, then ``--set``.

    The built-in activity profiles are used only when no user file defines
    any ``profile.*`` key; a file that does must define all of them.
    """
    user = [Config.from_file(p) for p in paths]
    cfg = Config.builtin("defaults.cfg")
    if not any(c.keys("profile.") for c in user):
        cfg = cfg.layer(Config.builtin("profiles.cfg"))
    for c in user:
        cfg = cfg.layer(c)
    return cfg.with_overrides(list(overrides))


def noise_from_config(cfg: Config) -> SensorNoise:
    return SensorNoise(
        distance_std=cfg.get_float("noise.distance_std"),
        velocity_std=math.radians(cfg.get_float("noise.velocity_std_deg")) * EYE_RADIUS,
    )


def _train_config(cfg: Config, prefix: str) -> TrainConfig:
    tc = TrainConfig(
        learning_rate=cfg.get_float(f"{prefix}.learning_rate"),
        epochs=cfg.get_int(f"{prefix}.epochs"),
        lr_decay_per_epoch=cfg.get_float(f"{prefix}.lr_decay"),
        weight_decay=cfg.get_float(f"{prefix}.weight_decay"),
        batch_size=cfg.get_int(f"{prefix}.batch_size"),
    )
    tc.validate()
    return tc


def model_configs(cfg: Config) -> ModelConfigs:
    depth = cfg.get_int("rfc.max_depth")
    kernel, pool = cfg.get_int("cnn.kernel"), cfg.get_int("cnn.pool")
    widths = cfg.get_list("cnn.channels", int)
    cnn = CnnConfig(
        conv_blocks=tuple(ConvBlock(w, kernel, pool) for w in widths),
        fc1_out=cfg.get_int("cnn.fc1"),
        dropout_p=cfg.get_float("cnn.dropout"),
    )
    cnn.validate()
    return ModelConfigs(
        rfc=RfcConfig(trees=cfg.get_int("rfc.trees"), max_depth=depth or None, min_leaf=cfg.get_int("rfc.min_leaf")),
        cnn=cnn,
        train=_train_config(cfg, "train"),
        transfer=_train_config(cfg, "transfer"),
        shots=cfg.get_int("transfer.shots"),
    )


def ablation_specs(cfg: Config) -> list[AblationSpec]:
    known = {s.name: s for s in STANDARD_ABLATIONS}
    specs = []
    for name in cfg.get_list("ablation.subsets"):
        key = f"ablation.{name}.channels"
        if key in cfg:
            spec = AblationSpec(name, tuple(cfg.get_list(key)))
        elif name in known:
            spec = known[name]
        else:
            raise ConfigError(f"ablation subset {name!r} has no '{key}' entry")
        spec.validate()
        specs.append(spec)
    return specs


# --------------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg.get_int("seed")
    profiles = profiles_from_config(cfg)
    specs = cohort_from_config(cfg, seed)
    noise = noise_from_config(cfg)
    rate = cfg.get_float("dataset.rate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.canonical_text())
    entries, streams = [], []
    for spec in specs:
        stream, segments = gen_participant(spec, profiles, noise)
        stream = resample(stream, rate)
        name = f"{spec.id}.csv"
        digest = write_participant_csv(out / name, stream)
        streams.append(stream)
        entries.append({
            "id": spec.id, "file": name, "sha256": digest, "rate": rate,
            "samples": int(len(stream.labels)), "shift": round(spec.shift, 6),
            "segments": [[label, start, stop] for label, start, stop in segments],
        })
        log.info("wrote %s (%d samples)", name, len(stream.labels))
    # raw windows per participant and class; the balanced count is what every
    # class reaches after upsampling the whole cohort
    dataset = _dataset(cfg, streams)
    row_of = {e["id"]: i for i, e in enumerate(entries)}
    counts = np.zeros((len(entries), len(ACTIVITIES)), dtype=np.int64)
    for w in dataset.windows:
        counts[row_of[w.participant_id], w.label] += 1
    for e, row in zip(entries, counts):
        e["windows"] = dict(zip(ACTIVITIES, row.tolist()))
    manifest = {
        "format": MANIFEST_FORMAT,
        "config_hash": cfg.hash(),
        "config_file": "config.cfg",
        "config_sha256": file_sha256(out / "config.cfg"),
        "seed": seed,
        "version": __version__,
        "windows_raw": int(counts.sum()),
        "windows_balanced": int(counts.sum(axis=0).max()) * len(ACTIVITIES),
        "participants": entries,
    }
    write_manifest(out / "manifest.json", manifest)
    print(f"manifest={out / 'manifest.json'}")
    return 0


def _dataset(cfg: Config, streams, test_id: str | None = None) -> HarDataset:
    kw = dict(rate=cfg.get_float("dataset.rate"), window_seconds=cfg.get_float("dataset.window_seconds"),
              overlap=cfg.get_float("dataset.overlap"))
    if test_id is None:
        return prepare(streams, **kw)
    return prepare_strict(streams, test_id, **kw)


def shifted_participants(manifest: dict, threshold: float = 1.5) -> tuple[str, ...]:
    return tuple(p["id"] for p in manifest["participants"] if p.get("shift", 1.0) >= threshold)


def dsp_demo(seed: int, n: int = 200) -> tuple[float, float]:
    """Noiseless round trip over random motion samples; returns the worst
    distance error (m) and the worst velocity error relative to its tolerance."""
    from .lfi_fmcw import LaserParams, MotionSample, RampConfig, measure

    rng = np.random.default_rng(seed)
    laser, ramp = LaserParams(), RampConfig()
    worst_d = worst_v = 0.0
    for _ in range(n):
        s = MotionSample(0.0, rng.uniform(15e-3, 35e-3), rng.uniform(-0.05, 0.05))
        d, v = measure(s, laser, ramp)
        worst_d = max(worst_d, abs(d - s.distance))
        worst_v = max(worst_v, abs(v - s.velocity) / max(0.01 * abs(s.velocity), 1e-3))
    return worst_d, worst_v


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    seed = args.seed if args.seed is not None else cfg.get_int("seed")
    if args.task == "dsp-demo":
        worst_d, worst_v = dsp_demo(seed)
        print(f"distance_error_max_mm={worst_d * 1e3:.6f} (tolerance 0.1)")
        print(f"velocity_error_max_rel={worst_v:.6f} (tolerance 1, in units of max(1%, 1 mm/s))")
        return 0 if worst_d < 1e-4 and worst_v < 1 else 1
    if args.manifest is None:
        raise ConfigError(f"task {args.task!r} needs a manifest")
    configs = model_configs(cfg)
    manifest, streams = load_streams(args.manifest)
    mode = cfg.get_str("dataset.standardize")
    if mode not in ("participant", "strict"):
        entry = cfg.entries["dataset.standardize"]
        raise ConfigError(f"dataset.standardize must be participant or strict, got {mode!r}",
                          entry.source, entry.line)
    fold_datasets = None
    if mode == "strict":
        fold_datasets = {s.participant_id: _dataset(cfg, streams, s.participant_id) for s in streams}
    dataset = _dataset(cfg, streams)
    prov = provenance(cfg.hash(), seed, task=args.task, manifest_sha256=file_sha256(args.manifest),
                      standardize=mode)
    out = Path(args.out)
    shifted = shifted_participants(manifest)
    if args.task == "ablate":
        kind = cfg.get_str("ablation.model")
        rows = run_ablation(dataset, ablation_specs(cfg), kind, configs, seed, args.jobs,
                            fold_datasets=fold_datasets)
        write_ablation(rows, out, prov)
        for r in rows:
            print(f"{r.spec.name}: macro_f1={r.macro_f1:.4f} " +
                  " ".join(f"{a}={v:.3f}" for a, v in zip(ACTIVITIES, r.per_class_f1)))
        score = rows[0].macro_f1
    else:
        kind = {"rfc": "rfc", "cnn": "cnn", "transfer": "cnn+transfer"}[args.task]
        report = run_lopocv(dataset, kind, configs, seed, args.jobs, fold_datasets=fold_datasets)
        write_report(report, out, prov, shifted=shifted)
        print(f"mean macro_f1 {report.mean_macro_f1:.4f} (std {report.std_macro_f1:.4f}) over {len(report.folds)} folds")
        score = report.mean_macro_f1
    print(f"macro_f1={score:.6f}")
    return 0


def cmd_audit(args) -> int:
    cfg = load_config(args.config, args.set)
    cnn = replace(model_configs(cfg).cnn, input_channels=len(CHANNELS))
    total, fc = analytic_param_count(cnn), fc_param_count(cnn)
    print(f"{'':<12}{'this model':>14}{'reference':>14}")
    print(f"{'total':<12}{total:>14,}{REFERENCE_BUDGET[0]:>14,}")
    print(f"{'fc layers':<12}{fc:>14,}{REFERENCE_BUDGET[1]:>14,}")
    print("temporal lengths: " + " -> ".join(str(t) for t in cnn.temporal_lengths()))
    return 0


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfihar", description="LFI + IMU activity recognition experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", action="append", default=[], metavar="FILE",
                       help="config file layered over the defaults (repeatable)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: config 'seed')")

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="evaluate a model on a generated cohort")
    common(p)
    p.add_argument("manifest", nargs="?", help="manifest.json written by 'synth'")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--out", default="reports", help="report directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel folds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("audit", help="print the CNN parameter budget")
    common(p)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except NonFiniteLoss as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
