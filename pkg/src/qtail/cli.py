"""Command-line entry point: data generation, training, evaluation,
benchmarking, and report emission.

Subcommands write one directory per run containing the exact resolved
configuration that produced it (manifest.json), delimited text tables, and
rendered figures. Defaults reproduce the standard training procedure: Adam
at lr 1e-4, batch 32, patience 5, max 50 epochs, circuit depth 3.

Exit codes: 0 success, 2 configuration/argument errors, 3 runtime errors,
4 capacity errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, figures, trainer
from .analytics import PairedComparison, auroc, mean_auroc, volcano_data
from .bench import (
    BenchProtocol,
    environment_fingerprint,
    fit_scaling,
    run_bench,
    scaling_sweep,
)
from .datapipe import LongTailSpec, PrepConfig, generate_longtail, load_dataset, save_dataset
from .errors import CapacityError, ConfigError, QtailError
from .model import FeatureExtractor, params_from_dict
from .tables import write_table
from .trainer import TrainConfig, checkpoint_load, checkpoint_save, config_hash, train

SIG_THRESHOLD_KEY = "significance_threshold_neg_log10_p"


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_manifest(outdir: Path, command: str, config: dict, artifacts) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "artifacts": {
            str(Path(p).relative_to(outdir)): _sha256_file(p) for p in artifacts
        },
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _parse_seeds(text: str):
    text = text.strip()
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",") if t]


def _parse_span(text: str):
    a, b = text.split(":")
    return list(range(int(a), int(b) + 1))


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise ConfigError(
                f"output directory {out} exists and is not empty (use --force)"
            )
    spec = LongTailSpec(
        num_labels=args.labels,
        num_samples=args.samples,
        head_frequency=args.head_frequency,
        decay=args.decay,
        signal_strength=args.signal,
        seed=args.seed,
        payload_kind=args.payload,
        image_size=args.image_size,
        noise_scale=args.noise_scale,
    )
    dataset = generate_longtail(spec)
    prep = PrepConfig(resize_to=args.resize_to, crop_to=args.crop_to)
    save_dataset(dataset, out, prep)
    _write_run_manifest(
        out,
        "gen-data",
        {"spec": dataclasses.asdict(spec), "prep": dataclasses.asdict(prep)},
        [out / "manifest.tsv", out / "dataset.json"],
    )
    counts = dataset.label_counts()
    print(f"dataset written to {out}: {spec.num_samples} samples, "
          f"{spec.num_labels} labels, positives per label {counts.tolist()}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _emit_run(outdir: Path, run, config: TrainConfig, steps_per_epoch: int):
    outdir.mkdir(parents=True, exist_ok=True)
    cfg_payload = {
        "config": dataclasses.asdict(config),
        "config_hash": config_hash(config),
    }
    (outdir / "config.json").write_text(json.dumps(cfg_payload, indent=2, sort_keys=True))

    rows = [[i + 1, "train", loss] for i, loss in enumerate(run.step_losses)]
    offset = run.epochs_run - len(run.val_losses)
    for e, loss in enumerate(run.val_losses, start=1):
        rows.append([(offset + e) * steps_per_epoch, "val", loss])
    write_table(outdir / "curves.tsv", ["step", "split", "loss"], rows)

    checkpoint_save(outdir / "checkpoint.npz", run, config)
    hash_lines = [run.stream_hash] + [
        f"epoch{e + 1}:{h}" for e, h in enumerate(run.epoch_stream_hashes)
    ]
    (outdir / "stream_hash.txt").write_text("\n".join(hash_lines) + "\n")
    summary = {
        "best_epoch": run.best_epoch,
        "best_val_loss": run.best_val_loss,
        "epochs_run": run.epochs_run,
        "stop_reason": run.stop_reason,
        "final_train_loss": run.step_losses[-1] if run.step_losses else None,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    figures.render_loss_curves(outdir / "curves.tsv", outdir / "loss_curves.png")
    return [outdir / "curves.tsv", outdir / "checkpoint.npz",
            outdir / "stream_hash.txt", outdir / "summary.json",
            outdir / "loss_curves.png"]


def cmd_train(args) -> int:
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = dict(
        num_labels=data.num_labels,
        depth=args.depth,
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        feature_dim=args.feature_dim,
        feature_seed=args.feature_seed,
        dataset=str(args.data),
    )
    steps_per_epoch = math.ceil(len(data.split_ids("train")) / args.batch_size)
    artifacts = []
    if args.paired:
        seeds = _parse_seeds(args.seeds)
        cfg_cdl = TrainConfig(head="cdl", seed=0, **base)
        cfg_dqc = TrainConfig(head="dqc", seed=0, **base)
        runs = trainer.paired_seed_protocol(cfg_cdl, cfg_dqc, seeds, data=data)
        pairing = []
        for pr in runs:
            for head, run in (("cdl", pr.cdl), ("dqc", pr.dqc)):
                rundir = out / f"{head}-seed{pr.seed}"
                artifacts += _emit_run(rundir, run, run.config, steps_per_epoch)
            pairing.append(
                {
                    "seed": pr.seed,
                    "cdl": f"cdl-seed{pr.seed}",
                    "dqc": f"dqc-seed{pr.seed}",
                    "stream_hash_equal": pr.cdl.stream_hash == pr.dqc.stream_hash,
                }
            )
            print(f"seed {pr.seed}: cdl best {pr.cdl.best_val_loss:.4f} "
                  f"(epoch {pr.cdl.best_epoch}), dqc best {pr.dqc.best_val_loss:.4f} "
                  f"(epoch {pr.dqc.best_epoch})")
        pairing_path = out / "pairing.json"
        pairing_path.write_text(json.dumps(pairing, indent=2))
        artifacts.append(pairing_path)
        config_snapshot = {"base": base, "seeds": seeds, "paired": True}
    else:
        if args.head is None:
            raise ConfigError("--head is required unless --paired is given")
        config = TrainConfig(head=args.head, seed=args.seed, **base)
        run = train(config, data=data)
        rundir = out / f"{args.head}-seed{args.seed}"
        artifacts += _emit_run(rundir, run, config, steps_per_epoch)
        config_snapshot = {"base": base, "head": args.head, "seed": args.seed,
                           "paired": False}
        print(f"{args.head} seed {args.seed}: best val loss {run.best_val_loss:.4f} "
              f"at epoch {run.best_epoch} ({run.stop_reason})")
    _write_run_manifest(out, "train", config_snapshot, artifacts)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _discover_runs(paths):
    found = []
    for p in map(Path, paths):
        if (p / "config.json").exists() and (p / "checkpoint.npz").exists():
            found.append(p)
        elif p.is_dir():
            for child in sorted(p.iterdir()):
                if (child / "config.json").exists() and (child / "checkpoint.npz").exists():
                    found.append(child)
    if not found:
        raise ConfigError(f"no run directories found under {list(map(str, paths))}")
    return found


def _load_run_scores(rundir: Path, data, split: str):
    cfg_payload = json.loads((rundir / "config.json").read_text())
    config = TrainConfig(**cfg_payload["config"])
    if data.num_labels != config.num_labels:
        raise ConfigError(
            f"run {rundir.name} was trained with {config.num_labels} labels but "
            f"the dataset has {data.num_labels}"
        )
    _, _, meta = checkpoint_load(rundir / "checkpoint.npz", config)
    params = params_from_dict(config.head, meta["best_params"])
    fx = FeatureExtractor(feature_dim=config.feature_dim, seed=config.feature_seed)
    scores, truths = trainer.score_split(params, fx, data, split)
    return config, scores, truths


def cmd_eval(args) -> int:
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split = args.split
    task = f"labels-{data.num_labels}"
    label_names = [f"label{i}" for i in range(data.num_labels)]

    per_run = {}  # (head, seed) -> {label: auroc}
    auroc_rows = []
    for rundir in _discover_runs(args.runs):
        config, scores, truths = _load_run_scores(rundir, data, split)
        per_label = {}
        for i, name in enumerate(label_names):
            per_label[name] = auroc(scores[:, i], truths[:, i], label=name)
        per_label["mean"] = mean_auroc(
            {k: v for k, v in per_label.items() if k != "mean"}
        )
        per_run[(config.head, config.seed)] = per_label
        for name in label_names + ["mean"]:
            auroc_rows.append([name, config.head, config.seed, split, per_label[name]])
    auroc_path = out / "auroc.tsv"
    write_table(auroc_path, ["label", "head", "seed", "split", "auroc"], auroc_rows)
    artifacts = [auroc_path]

    if args.paired:
        cdl_seeds = sorted(s for h, s in per_run if h == "cdl")
        dqc_seeds = sorted(s for h, s in per_run if h == "dqc")
        if not cdl_seeds or cdl_seeds != dqc_seeds:
            raise ConfigError(
                f"--paired needs matching seed sets per head, got cdl={cdl_seeds} "
                f"dqc={dqc_seeds}"
            )
        comparisons = []
        comp_rows = []
        for name in label_names + ["mean"]:
            a = [per_run[("cdl", s)][name] for s in cdl_seeds]
            b = [per_run[("dqc", s)][name] for s in cdl_seeds]
            comp = PairedComparison.compute(name, task, a, b)
            comparisons.append(comp)
            comp_rows.append(
                [
                    name, task,
                    float(np.mean(a)), float(np.std(a, ddof=1)),
                    float(np.mean(b)), float(np.std(b, ddof=1)),
                    comp.t_stat, comp.p_value, comp.pct_diff,
                ]
            )
        comparison_path = out / "comparison.tsv"
        write_table(
            comparison_path,
            ["label", "task", "cdl_mean", "cdl_std", "dqc_mean", "dqc_std",
             "t_stat", "p_value", "pct_diff"],
            comp_rows,
        )
        rows, threshold = volcano_data(comparisons)
        volcano_path = out / "volcano.tsv"
        write_table(
            volcano_path,
            ["label", "task", "pct_diff", "p_value", "log2_pct_diff",
             "neg_log10_p", "transformable"],
            [
                [r["label"], r["task"], r["pct_diff"], r["p_value"],
                 r["log2_pct_diff"], r["neg_log10_p"], int(r["transformable"])]
                for r in rows
            ],
            metadata={SIG_THRESHOLD_KEY: threshold},
        )
        figures.render_auroc_comparison(comparison_path, out / "auroc_comparison.png")
        figures.render_volcano(volcano_path, out / "volcano.png")
        artifacts += [comparison_path, volcano_path,
                      out / "auroc_comparison.png", out / "volcano.png"]
        mean_row = comp_rows[-1]
        print(f"mean AUROC: cdl {mean_row[2]:.4f}+-{mean_row[3]:.4f} vs "
              f"dqc {mean_row[4]:.4f}+-{mean_row[5]:.4f} "
              f"(p={mean_row[7]:.4g}, pct_diff={mean_row[8]:+.3%})")
    _write_run_manifest(
        out, "eval",
        {"runs": [str(p) for p in args.runs], "data": str(args.data),
         "split": split, "paired": args.paired},
        artifacts,
    )
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    protocol = BenchProtocol(
        head="dqc",
        num_labels=max(args.labels) if args.labels else 8,
        warmup_steps=args.warmup,
        measured_steps=args.measured,
        batch_size=args.batch_size,
        feature_dim=args.feature_dim,
        depth=args.depth,
        payload_shape=(args.image_size, args.image_size, 1),
        seed=args.seed,
    )
    heads = ("cdl", "dqc") if args.head == "both" else (args.head,)
    fingerprint = environment_fingerprint(args.tag)

    if args.sweep:
        ns = _parse_span(args.sweep)
        rows = scaling_sweep(ns, protocol, heads=heads, lock_path=args.lock_file)
        fit = fit_scaling(rows)
        (out / "fit.json").write_text(json.dumps(fit, indent=2, sort_keys=True))
        for head, info in fit.items():
            print(f"{head}: preferred scaling model = {info['preferred']} "
                  f"(rss linear {info['linear_rss']:.3e}, exp {info['exp_rss']:.3e})")
    else:
        rows = []
        for head in heads:
            for n in args.labels:
                result = run_bench(
                    replace(protocol, head=head, num_labels=n),
                    lock_path=args.lock_file, tag=args.tag,
                )
                rows.append(
                    {
                        "n": n, "head": head, "mean": result.mean,
                        "std": result.std, "state_bytes": 2**n * 16,
                    }
                )
                print(f"{head} n={n}: {result.mean:.4f} +- {result.std:.4f} s/step")

    header = ["n", "head", "mean", "std", "state_bytes"]
    table_rows = [[r["n"], r["head"], r["mean"], r["std"], r["state_bytes"]] for r in rows]
    results_path = out / "results.tsv"
    write_table(results_path, header, table_rows, metadata=fingerprint)

    log_path = out / "bench_log.tsv"
    log_rows = [
        [fingerprint["timestamp"], args.tag, r["head"], r["n"], r["mean"], r["std"],
         protocol.batch_size, protocol.warmup_steps, protocol.measured_steps,
         json.dumps(fingerprint, sort_keys=True)]
        for r in rows
    ]
    write_table(
        log_path,
        ["timestamp", "tag", "head", "n", "mean", "std", "batch_size",
         "warmup_steps", "measured_steps", "fingerprint"],
        log_rows,
        append=True,
    )
    figures.render_bench_scaling(results_path, out / "scaling.png")
    artifacts = [results_path, log_path, out / "scaling.png"]
    if args.sweep:
        artifacts.append(out / "fit.json")
    _write_run_manifest(
        out, "bench",
        {"protocol": dataclasses.asdict(protocol), "heads": list(heads),
         "labels": args.labels, "sweep": args.sweep, "tag": args.tag},
        artifacts,
    )
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------


def build_parser(suppress: bool = False) -> argparse.ArgumentParser:
    # With suppress=True every option defaults to SUPPRESS, which lets main()
    # distinguish explicitly set flags from defaults when merging --config.
    def d(value):
        return argparse.SUPPRESS if suppress else value

    parser = argparse.ArgumentParser(
        prog="qtail",
        description="hybrid quantum-classical long-tail classification lab",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic long-tailed dataset")
    g.add_argument("--config", default=d(None), help="JSON file with option defaults")
    g.add_argument("--out", required=True)
    g.add_argument("--labels", type=int, default=d(8))
    g.add_argument("--samples", type=int, default=d(4000))
    g.add_argument("--seed", type=int, default=d(0))
    g.add_argument("--head-frequency", type=float, default=d(0.3))
    g.add_argument("--decay", type=float, default=d(0.8))
    g.add_argument("--signal", type=float, default=d(30.0))
    g.add_argument("--noise-scale", type=float, default=d(20.0))
    g.add_argument("--payload", choices=["image", "vector"], default=d("image"))
    g.add_argument("--image-size", type=int, default=d(64))
    g.add_argument("--resize-to", type=int, default=d(72))
    g.add_argument("--crop-to", type=int, default=d(64))
    g.add_argument("--force", action="store_true", default=d(False))
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a classification head")
    t.add_argument("--config", default=d(None))
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--head", choices=["cdl", "dqc"], default=d(None))
    t.add_argument("--seed", type=int, default=d(0))
    t.add_argument("--seeds", default=d("0:5"),
                   help="seed list for --paired: '0:5', '0..4', or '0,1,2'")
    t.add_argument("--paired", action="store_true", default=d(False))
    t.add_argument("--depth", type=int, default=d(3))
    t.add_argument("--lr", type=float, default=d(1e-4))
    t.add_argument("--batch-size", type=int, default=d(32))
    t.add_argument("--max-epochs", type=int, default=d(50))
    t.add_argument("--patience", type=int, default=d(5))
    t.add_argument("--feature-dim", type=int, default=d(2048))
    t.add_argument("--feature-seed", type=int, default=d(0))
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate checkpoints on a dataset split")
    e.add_argument("--config", default=d(None))
    e.add_argument("--runs", nargs="+", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default=d("test"))
    e.add_argument("--paired", action="store_true", default=d(False))
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="wall-clock training-step benchmarks")
    b.add_argument("--config", default=d(None))
    b.add_argument("--out", required=True)
    b.add_argument("--head", choices=["cdl", "dqc", "both"], default=d("both"))
    b.add_argument("--labels", type=int, nargs="+", default=d([8, 14, 19]))
    b.add_argument("--sweep", default=d(None), help="label-count span 'LO:HI'")
    b.add_argument("--warmup", type=int, default=d(10))
    b.add_argument("--measured", type=int, default=d(30))
    b.add_argument("--batch-size", type=int, default=d(32))
    b.add_argument("--feature-dim", type=int, default=d(2048))
    b.add_argument("--depth", type=int, default=d(3))
    b.add_argument("--image-size", type=int, default=d(64))
    b.add_argument("--seed", type=int, default=d(0))
    b.add_argument("--tag", default=d(""))
    b.add_argument("--lock-file", default=d(None))
    b.set_defaults(func=cmd_bench)
    return parser


def _merge_config_file(args, explicit: dict) -> None:
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        overrides = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(overrides, dict):
        raise ConfigError("config file must hold a JSON object")
    known = vars(args)
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError(f"config key {key!r} unknown for this command")
        if dest not in explicit:  # explicit flags outrank the config file
            setattr(args, dest, value)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    explicit = vars(build_parser(suppress=True).parse_args(argv))
    try:
        _merge_config_file(args, explicit)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return exc.exit_code
    except QtailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
