"""``losgen`` command line: each pipeline stage plus the end-to-end reproduction.

Exit codes: 0 success, 2 usage error, 3 invalid input data or model file,
4 runtime failure.  Every artifact-producing command writes
``<artifact>.manifest.json`` next to its output; ``losgen replay`` re-runs a
manifest and checks the artifacts are byte-identical.

Output paths default to ``$LOSGEN_OUTDIR`` (or the current directory).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import EXPERIMENT_ANGLES, MarkovSampler, builtin_table, generate_dataset, stationary_los_probability
from .dataio import (
    emit_report,
    format_table,
    read_dataset,
    write_curve,
    write_dataset,
    write_manifest,
    write_rows_csv,
)
from .metrics import (
    DEFAULT_KL_EPSILON,
    MetricReport,
    compare_datasets,
    distribution_summary,
    evaluate_repeated,
)
from .models import TrainingConfig, load_model, save_model, train_gan, train_vae

log = logging.getLogger("losgen")

EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 2, 3, 4

DESK_PRESET = {"rows": 10_000, "reps": 10, "epochs": 50}
# reference thresholds for reproduce's pass/fail summary; desk preset relaxes them by 1.5x
THRESHOLDS = {
    "vae": {"ks_min": 0.95, "w_max": 0.08, "kl_max": 0.03},
    "gan": {"ks_min": 0.95, "w_max": 0.08, "kl_max": 0.05},
}
VARIANCE_MAX = 1e-4


class UsageError(Exception):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.cause = exc


def _outdir() -> Path:
    return Path(os.environ.get("LOSGEN_OUTDIR", "."))


def _out_path(value, default_name) -> Path:
    return Path(value) if value else _outdir() / default_name


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(out: Path, args, argv, started, inputs=(), outputs=None, **extra):
    outputs = list(outputs) if outputs is not None else [out]
    return write_manifest(
        Path(str(out) + ".manifest.json"),
        command=args.command,
        argv=list(argv),
        cwd=os.getcwd(),
        config={k: v for k, v in vars(args).items() if k not in ("func",)},
        seed=getattr(args, "seed", None),
        inputs={str(p): _sha256(p) for p in inputs},
        outputs={str(p): _sha256(p) for p in outputs},
        toolkit_version=__version__,
        python=platform.python_version(),
        numpy=np.__version__,
        wall_clock_seconds=round(time.time() - started, 3),
        **extra,
    )


def _angles(text) -> list[int]:
    try:
        return [int(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise UsageError(f"angles must be comma-separated integers, got {text!r}") from None


def _positive(name, value):
    if value <= 0:
        raise UsageError(f"{name} must be positive")


# -- commands ----------------------------------------------------------------


def cmd_gen_traces(args, argv):
    started = time.time()
    if args.rows < 0:
        raise UsageError("rows must be non-negative")
    ds = generate_dataset(_angles(args.angles), args.rows, args.seed)
    out = _out_path(args.out, "traces.csv")
    write_dataset(ds, out)
    _manifest(out, args, argv, started)
    print(f"wrote {ds.rows} x {len(ds.angles)} traces to {out}")


def _config_from(args, track_angle=None):
    _positive("epochs", args.epochs)
    _positive("batch", args.batch)
    _positive("lr", args.lr)
    return TrainingConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        track_angle=track_angle,
    )


def cmd_train(args, argv):
    started = time.time()
    config = _config_from(args, args.track_angle)
    data = read_dataset(args.data)
    trainer = {"gan": train_gan, "vae": train_vae}[args.model]
    model, curve = trainer(data, config)
    out = _out_path(args.out, f"{args.model}.model")
    save_model(model, out)
    outputs = [out]
    curve_path = Path(args.curve) if args.curve else Path(str(out) + ".curve.csv")
    write_curve(curve, curve_path)
    outputs.append(curve_path)
    _manifest(out, args, argv, started, inputs=[args.data], outputs=outputs)
    print(f"trained {args.model} for {config.epochs} epochs -> {out}")


def cmd_sample(args, argv):
    started = time.time()
    if args.rows < 0:
        raise UsageError("rows must be non-negative")
    model = load_model(args.model)
    ds = model.sample(args.rows, args.seed)
    out = _out_path(args.out, "synthetic.csv")
    write_dataset(ds, out)
    _manifest(out, args, argv, started, inputs=[args.model])
    print(f"wrote {ds.rows} synthetic rows to {out}")


def cmd_evaluate(args, argv):
    started = time.time()
    real, synth = read_dataset(args.real), read_dataset(args.synth)
    if real.columns != synth.columns:
        raise ValueError(f"column mismatch: real has {real.columns}, synthetic has {synth.columns}")
    per_angle = compare_datasets(real, synth, args.epsilon)
    values = {(a, m): [v] for a, d in per_angle.items() for m, v in d.items()}
    report = MetricReport.from_values(real.angles, values, label=args.label)
    out = _out_path(args.out, "report.json")
    emit_report(report, args.format, out)
    _manifest(out, args, argv, started, inputs=[args.real, args.synth])
    print(format_table(report), end="")


def cmd_stationary(args, argv):
    print(f"{'angle':>5}  {'g (NLOS->LOS)':>14}  {'b (LOS->NLOS)':>14}  {'P(LOS)':>8}")
    for p in builtin_table():
        print(f"{p.angle_deg:>5}  {p.g:>14.8g}  {p.b:>14.8g}  {stationary_los_probability(p):>8.5f}")


def _check_report(report, family, relax):
    th = THRESHOLDS[family]
    lines, ok = [], True
    for a in report.angles:
        ks = report.mean[(a, "ks_complement")]
        w = report.mean[(a, "wasserstein")]
        kl = report.mean[(a, "kl")]
        conds = {
            "ks": ks >= 1 - relax * (1 - th["ks_min"]),
            "w": w <= relax * th["w_max"],
            "kl": kl <= relax * th["kl_max"],
            "variance": all(report.variance[(a, m)] <= VARIANCE_MAX for m in ("ks_complement", "wasserstein", "kl")),
        }
        ok &= all(conds.values())
        flags = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in conds.items())
        lines.append(f"{family} {a}°: KS={ks:.4f} W={w:.4f} KL={kl:.4f} {flags}")
    return ok, lines


def cmd_reproduce(args, argv):
    started = time.time()
    if args.preset == "desk":
        for k, v in DESK_PRESET.items():
            if getattr(args, k) is None:
                setattr(args, k, v)
    args.rows = 100_000 if args.rows is None else args.rows
    args.reps = 50 if args.reps is None else args.reps
    args.epochs = 100 if args.epochs is None else args.epochs
    _positive("reps", args.reps)
    _positive("rows", args.rows)
    outdir = Path(args.outdir) if args.outdir else _outdir() / "reproduce"
    outdir.mkdir(parents=True, exist_ok=True)
    angles = list(EXPERIMENT_ANGLES)
    relax = 1.5 if args.preset == "desk" else 1.0
    outputs = []

    def stage(name, fn):
        log.info("stage %s", name)
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - re-raised with stage name
            raise StageError(name, exc) from exc

    # stationary summary
    rows = [
        {"angle": p.angle_deg, "g": p.g, "b": p.b, "stationary_los": stationary_los_probability(p)}
        for p in builtin_table()
    ]
    outputs.append(write_rows_csv(rows, outdir / "stationary.csv"))

    train = stage("generate", lambda: generate_dataset(angles, args.rows, args.seed))
    outputs.append(write_dataset(train, outdir / "train.csv").path)

    config = _config_from(args, track_angle=70)
    real_source = MarkovSampler(angles)
    summary, all_ok, convergence, timings = [], True, {}, {}
    for family, trainer in (("vae", train_vae), ("gan", train_gan)):
        t0 = time.time()
        model, curve = stage(f"train-{family}", lambda: trainer(train, config))
        timings[family] = round(time.time() - t0, 3)
        outputs.append(save_model(model, outdir / f"{family}.model"))
        outputs.append(write_curve(curve, outdir / f"{family}_curve_70.csv"))
        report = stage(
            f"evaluate-{family}",
            lambda: evaluate_repeated(
                real_source, model, args.reps, args.rows, args.seed, DEFAULT_KL_EPSILON, label=family.upper()
            ),
        )
        outputs.append(emit_report(report, "table", outdir / f"report_{family}.txt"))
        outputs.append(emit_report(report, "json", outdir / f"report_{family}.json"))
        synth = model.sample(train.rows, args.seed)
        outputs.append(write_rows_csv(distribution_summary(train, synth), outdir / f"distribution_{family}.csv"))
        ok, lines = _check_report(report, family, relax)
        all_ok &= ok
        summary += lines
        convergence[family] = curve.first_epoch_below("kl", 0.05)
        print(format_table(report))

    v, g = convergence["vae"], convergence["gan"]
    faster = v is not None and (g is None or v <= g)
    summary.append(
        f"convergence at 70°: first epoch with KL <= 0.05: vae={v} gan={g} -> {'pass' if faster else 'warn'}"
    )
    summary.append(f"thresholds ({'desk preset, relaxed x1.5' if relax > 1 else 'full thresholds'}): {'PASS' if all_ok else 'FAIL'}")
    summary_path = outdir / "summary.txt"
    summary_path.write_text("\n".join(summary) + "\n")
    outputs.append(summary_path)
    _manifest(outdir / "run", args, argv, started, outputs=outputs, training_wall_clock_seconds=timings)
    print("\n".join(summary))
    print("training wall-clock: " + ", ".join(f"{k} {v:.1f} s" for k, v in timings.items()))


def cmd_replay(args, argv):
    manifest = json.loads(Path(args.manifest).read_text())
    here = os.getcwd()
    os.chdir(manifest["cwd"])
    try:
        code = main(manifest["argv"])
        if code:
            return code
        bad = [p for p, h in manifest["outputs"].items() if _sha256(p) != h]
    finally:
        os.chdir(here)
    if bad:
        print("replay produced different artifacts: " + ", ".join(bad), file=sys.stderr)
        return EXIT_RUNTIME
    print(f"replayed {manifest['command']}: {len(manifest['outputs'])} artifacts identical")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="losgen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-traces", help="generate LOS/NLOS Markov traces")
    s.add_argument("--angles", default="70,60,45")
    s.add_argument("--rows", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_traces)

    s = sub.add_parser("train", help="train a GAN or VAE on a trace CSV")
    s.add_argument("--model", choices=("gan", "vae"), required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--batch", type=int, default=50)
    s.add_argument("--lr", type=float, default=2e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--track-angle", type=int, default=None)
    s.add_argument("--curve", help="metric-curve CSV (default: <out>.curve.csv)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw synthetic traces from a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--rows", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("evaluate", help="KS / Wasserstein / KL between two trace CSVs")
    s.add_argument("--real", required=True)
    s.add_argument("--synth", required=True)
    s.add_argument("--epsilon", type=float, default=DEFAULT_KL_EPSILON)
    s.add_argument("--format", choices=("json", "table"), default="json")
    s.add_argument("--label", default="")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("reproduce", help="end-to-end experiment: data, both models, repeated evaluation")
    s.add_argument("--preset", choices=("full", "desk"), default="full")
    s.add_argument("--rows", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int, default=50)
    s.add_argument("--lr", type=float, default=2e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--outdir")
    s.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("stationary", help="stationary LOS probability per built-in angle")
    s.set_defaults(func=cmd_stationary)

    s = sub.add_parser("replay", help="re-run a manifest and verify identical artifacts")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args, argv) or 0
    except UsageError as exc:
        print(f"losgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        code = EXIT_VALIDATION if isinstance(exc.cause, (ValueError, KeyError)) else EXIT_RUNTIME
        print(f"losgen: {exc}", file=sys.stderr)
        return code
    except (ValueError, KeyError) as exc:
        print(f"losgen: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"losgen: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
