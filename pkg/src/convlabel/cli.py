"""Command-line driver: dataset generation, training, prediction,
evaluation, and benchmarking.

Every subcommand writes its outputs into a target directory together with
a manifest recording the resolved configuration, seed, file paths, toolkit
version, and wall time.  All randomness flows from the --seed flag, so a
fixed seed with --threads 1 reproduces every output byte for byte (the
manifest's wall-time field excepted).

Exit codes: 0 on success, 1 on data or model errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from . import io
from .benchmark import FULL_GRID, QUICK_GRID, bench_posterior, panel_data, write_bench_csv
from .backends import BACKENDS
from .datagen import GenConfig, gen_binary_dataset, gen_gabor_dataset
from .plots import plot_bench, plot_eval, plot_trace
from .predict import predict_record
from .report import evaluate, report_csv
from .train import TrainConfig, em_fit
from .types import DatasetError, EvidenceImpossibleError


def _out_dir(args, figures: bool = False) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if figures:
        (out / "figures").mkdir(exist_ok=True)
    return out


def _finish(
    out: Path,
    subcommand: str,
    config: dict,
    seed,
    inputs: list,
    outputs: list[Path],
    started: float,
) -> int:
    io.write_manifest(
        out / "manifest.json",
        subcommand=subcommand,
        config={k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()},
        seed=seed,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        wall_time_s=time.perf_counter() - started,
    )
    for path in outputs:
        print(f"wrote {path}")
    print(f"wrote {out / 'manifest.json'}")
    return 0


def cmd_datagen_gabor(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    config = GenConfig(
        num_signals=args.n,
        length=args.length,
        snr_db=args.snr_db,
        seed=args.seed,
    )
    examples, truth = gen_gabor_dataset(config)
    dataset_path = out / "dataset.jsonl"
    truth_path = out / "truth.jsonl"
    io.save_dataset(dataset_path, examples)
    io.save_truth(truth_path, truth)
    return _finish(
        out,
        "datagen gabor",
        {
            "n": args.n,
            "length": args.length,
            "snr_db": args.snr_db,
            "out": out,
        },
        args.seed,
        [],
        [dataset_path, truth_path],
        started,
    )


def cmd_datagen_binary(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    examples, truth, templates = gen_binary_dataset(args.seed, num_signals=args.n)
    dataset_path = out / "dataset.jsonl"
    truth_path = out / "truth.jsonl"
    templates_path = out / "templates.json"
    io.save_dataset(dataset_path, examples)
    io.save_truth(truth_path, truth)
    io.save_templates(templates_path, templates)
    return _finish(
        out,
        "datagen binary",
        {"n": args.n, "out": out},
        args.seed,
        [],
        [dataset_path, truth_path, templates_path],
        started,
    )


def cmd_train(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args, figures=True)
    dataset = io.load_dataset(args.data, default_cap=args.nbar)
    config = TrainConfig(
        learning_rate=args.gamma,
        l2_lambda=args.lambda_r,
        max_iters=args.iters,
        backend=args.backend,
        m_steps_per_e=args.m_steps,
        seed=args.seed,
        tolerance=args.tolerance,
        threads=args.threads,
    )
    state = em_fit(
        dataset, config, num_classes=args.classes, window_len=args.tw
    )
    model_path = out / "model.json"
    trace_path = out / "trace.json"
    figure_path = out / "figures" / "trace.png"
    io.save_model(model_path, state.params)
    io.save_trace(trace_path, state.iteration, state.log_likelihood_trace)
    plot_trace(state.log_likelihood_trace, figure_path)
    print(
        f"trained {state.params.num_classes} classes for {state.iteration} "
        f"iterations; final objective {state.log_likelihood_trace[-1]:.6f}"
    )
    resolved = dataclasses.asdict(config)
    resolved.update({"data": args.data, "tw": args.tw, "classes": args.classes, "out": out})
    return _finish(
        out,
        "train",
        resolved,
        args.seed,
        [args.data],
        [model_path, trace_path, figure_path],
        started,
    )


def cmd_predict(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    dataset = io.load_dataset(args.data, default_cap=args.nbar)
    params = io.load_model(args.model)
    records = [
        predict_record(ex.signal, params, cap=ex.cap) for ex in dataset
    ]
    predictions_path = out / "predictions.jsonl"
    io.save_predictions(predictions_path, records)
    return _finish(
        out,
        "predict",
        {"data": args.data, "model": args.model, "nbar": args.nbar, "out": out},
        None,
        [args.data, args.model],
        [predictions_path],
        started,
    )


def cmd_eval(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args, figures=True)
    dataset = io.load_dataset(args.data)
    params = io.load_model(args.model)
    truth = io.load_truth(args.truth) if args.truth else None
    score_rows = None
    if args.predictions:
        score_rows = {
            row["id"]: row["scores"] for row in io.load_predictions(args.predictions)
        }
    result = evaluate(dataset, params, truth=truth, score_rows=score_rows)
    json_path = out / "metrics.json"
    csv_path = out / "metrics.csv"
    figure_path = out / "figures" / "eval_auc.png"
    io.save_json(json_path, result)
    csv_text = report_csv(result)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    plot_eval(result, figure_path)
    print(csv_text, end="")
    agg = result["aggregate"]
    print(
        ", ".join(
            f"{name}={agg[name]:.4f}" if agg[name] is not None else f"{name}=n/a"
            for name in (
                "hamming_loss",
                "rank_loss",
                "average_precision",
                "one_error",
                "coverage",
            )
        )
    )
    inputs = [args.data, args.model]
    if args.truth:
        inputs.append(args.truth)
    if args.predictions:
        inputs.append(args.predictions)
    return _finish(
        out,
        "eval",
        {
            "data": args.data,
            "model": args.model,
            "truth": args.truth,
            "predictions": args.predictions,
            "out": out,
        },
        None,
        inputs,
        [json_path, csv_path, figure_path],
        started,
    )


def cmd_bench(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args, figures=True)
    grid = {"quick": QUICK_GRID, "full": FULL_GRID}[args.grid]
    if args.backends:
        grid = dataclasses.replace(grid, backends=tuple(args.backends))
    rows = bench_posterior(grid, seed=args.seed)
    csv_path = out / "bench.csv"
    json_path = out / "bench.json"
    figure_path = out / "figures" / "bench_scaling.png"
    write_bench_csv(csv_path, rows)
    io.save_json(json_path, panel_data(rows))
    plot_bench(rows, figure_path)
    print(f"timed {len(rows)} grid cells")
    return _finish(
        out,
        "bench",
        {"grid": args.grid, "backends": list(grid.backends), "out": out},
        args.seed,
        [],
        [csv_path, json_path, figure_path],
        started,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convlabel",
        description=__doc__.split("\n\n")[0],
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    datagen = sub.add_parser("datagen", help="generate a synthetic dataset")
    kinds = datagen.add_subparsers(dest="kind", required=True)

    gabor = kinds.add_parser("gabor", help="1-D template-superposition signals")
    gabor.add_argument("--n", type=int, required=True, help="number of signals")
    gabor.add_argument("--length", type=int, default=200, help="samples per signal")
    gabor.add_argument(
        "--snr-db", type=float, default=20.0, help="signal-to-noise ratio (dB; inf disables noise)"
    )
    gabor.add_argument("--seed", type=int, default=0)
    gabor.add_argument("--out", required=True, help="output directory")
    gabor.set_defaults(func=cmd_datagen_gabor)

    binary = kinds.add_parser("binary", help="2-D binary pattern signals")
    binary.add_argument("--n", type=int, default=200, help="number of signals")
    binary.add_argument("--seed", type=int, default=0)
    binary.add_argument("--out", required=True, help="output directory")
    binary.set_defaults(func=cmd_datagen_binary)

    train = sub.add_parser("train", help="fit a model by EM")
    train.add_argument("--data", required=True, help="dataset JSONL")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--tw", type=int, default=5, help="analysis window length")
    train.add_argument(
        "--lambda-r", type=float, default=0.0, dest="lambda_r", help="L2 penalty weight"
    )
    train.add_argument(
        "--nbar", type=int, default=None, help="event-count cap for records without one"
    )
    train.add_argument("--gamma", type=float, default=1e-3, help="initial gradient step size")
    train.add_argument("--iters", type=int, default=100, help="EM iterations")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--backend", choices=BACKENDS + ("auto",), default="auto")
    train.add_argument("--threads", type=int, default=1, help="E-step worker threads")
    train.add_argument(
        "--classes", type=int, default=None, help="number of event classes (default: infer)"
    )
    train.add_argument(
        "--tolerance", type=float, default=0.0, help="relative early-stop tolerance (0 disables)"
    )
    train.add_argument(
        "--m-steps", type=int, default=1, dest="m_steps", help="gradient steps per EM iteration"
    )
    train.set_defaults(func=cmd_train)

    predict = sub.add_parser("predict", help="label signals with a trained model")
    predict.add_argument("--data", required=True)
    predict.add_argument("--model", required=True)
    predict.add_argument(
        "--nbar", type=int, default=None, help="event-count cap for the MAP label set"
    )
    predict.add_argument("--out", required=True)
    predict.set_defaults(func=cmd_predict)

    evaluate_p = sub.add_parser("eval", help="score a model against a dataset")
    evaluate_p.add_argument("--data", required=True)
    evaluate_p.add_argument("--model", required=True)
    evaluate_p.add_argument(
        "--truth", default=None, help="per-sample truth sidecar (enables instance AUC)"
    )
    evaluate_p.add_argument(
        "--predictions", default=None, help="reuse signal scores from a predictions file"
    )
    evaluate_p.add_argument("--out", required=True)
    evaluate_p.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="time the posterior backends")
    bench.add_argument("--grid", choices=("quick", "full"), default="quick")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument(
        "--backends", nargs="+", choices=BACKENDS, default=None, help="restrict backends"
    )
    bench.add_argument("--out", required=True)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, EvidenceImpossibleError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
