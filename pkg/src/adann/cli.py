"""Command-line front end.

Subcommands: ``simulate``, ``train-offline``, ``run-online``, ``compare``,
``analyze-weights``.  Every command takes a JSON config (plus ``--seed`` /
``--out-dir`` overrides only), writes its artifacts into the output
directory together with a ``manifest.json`` echoing the effective config,
and is byte-for-byte reproducible given identical inputs.

Exit codes: 0 success, 2 config/usage errors, 3 shape mismatches, 4 I/O
failures.  A run that does not converge is still a success; convergence is
reported in the summary files.

``ADANN_THREADS`` caps intra-batch parallelism: 0 or unset pins the BLAS
pools to one thread (strictly sequential, the default), a positive value
allows that many threads.  It must be read before NumPy is imported, which
is why the heavy imports happen inside the command handlers.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import (AdannError, ConfigError, DegenerateInputError,
                     ShapeError, UsageError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SHAPE = 3
EXIT_IO = 4


def _configure_threads():
    raw = os.environ.get("ADANN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ADANN_THREADS must be an integer, got {raw!r}")
    value = "1" if n <= 0 else str(n)
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, value)


def _write_manifest(out_dir: Path, cfg, artifacts: dict, extra: dict | None = None):
    from . import __version__
    from .config import config_hash

    normalized = cfg.normalized()
    doc = {
        "tool_version": __version__,
        "config": normalized,
        "config_hash": config_hash(normalized),
        "seed": cfg.seed,
        "artifacts": artifacts,
    }
    if extra:
        doc.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(doc, sort_keys=True) + "\n")


def _load_streams(data_dir: Path):
    from .chansim import read_stream

    streams = []
    for name in ("set1", "set2"):
        sidecar = data_dir / f"{name}.json"
        if not sidecar.exists():
            raise UsageError(f"dataset sidecar not found: {sidecar}")
        streams.append(read_stream(sidecar))
    return streams


def cmd_simulate(args) -> int:
    from .chansim import make_drift_scenario, write_stream
    from .config import load_config

    cfg = load_config(args.config, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set1, set2 = make_drift_scenario(cfg.spec1, cfg.spec2,
                                     cfg.n_symbols, cfg.n_symbols, cfg.seed)
    write_stream(set1, out_dir, "set1")
    write_stream(set2, out_dir, "set2")
    _write_manifest(out_dir, cfg, {
        "set1": "set1.json", "set2": "set2.json",
    })
    return EXIT_OK


def cmd_train_offline(args) -> int:
    from .config import load_config
    from .nn import init_weights, save_checkpoint
    from .pipeline import evaluate_ber, train_offline

    cfg = load_config(args.config, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    set1, _ = _load_streams(Path(args.data))
    if set1.spec.gamma * (2 * cfg.window_half_width + 1) != cfg.arch.input_dim:
        raise ShapeError("dataset gamma incompatible with configured architecture")
    model = init_weights(cfg.arch, cfg.seed)
    result = train_offline(model, set1, cfg.offline_fraction, cfg.offline)
    save_checkpoint(result.model, out_dir / "checkpoint.json")

    lo_count = int(cfg.offline_fraction
                   * (set1.n_seq - 2 * cfg.window_half_width))
    holdout_ber = evaluate_ber(result.model, set1, cfg.window_half_width,
                               skip_rows=lo_count)
    _write_manifest(out_dir, cfg, {"checkpoint": "checkpoint.json"}, extra={
        "summary": {
            "final_train_loss": result.epoch_losses[-1],
            "holdout_ber_set1": holdout_ber,
        },
    })
    return EXIT_OK


def _run_one_online(model, streams, online_cfg, cfg, out_dir: Path,
                    method: str, write_weights: bool):
    from .config import config_hash
    from .pipeline import (run_online, trace_summary, weight_change_ratios,
                           write_summary_json, write_trace_csv,
                           write_weight_report_csv)

    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_online(model, streams, online_cfg)
    write_trace_csv(result.trace, out_dir / "trace.csv")
    summary = trace_summary(result.trace, online_cfg.ber_threshold,
                            online_cfg.smoothing_window,
                            online_cfg.loss_kind.value,
                            config_hash(cfg.normalized()))
    summary["method"] = method
    summary["adaptive"] = online_cfg.adapt
    summary["batch_size"] = online_cfg.batch_size
    summary["converged"] = summary["convergence_batches"] is not None
    summary["vat_fallbacks"] = result.diagnostics.vat_fallbacks
    artifacts = {"trace": "trace.csv", "summary": "summary.json"}
    if write_weights and online_cfg.adapt:
        report = weight_change_ratios(result.initial_model, result.model)
        write_weight_report_csv(report, out_dir / "weight_change.csv")
        artifacts["weight_change"] = "weight_change.csv"
    write_summary_json(summary, out_dir / "summary.json")
    return summary, artifacts


def cmd_run_online(args) -> int:
    from .config import load_config
    from .nn import load_checkpoint

    cfg = load_config(args.config, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    streams = _load_streams(Path(args.data))
    model = load_checkpoint(args.checkpoint)
    if model.arch.input_dim != cfg.arch.input_dim:
        raise ShapeError(
            f"checkpoint input_dim {model.arch.input_dim} does not match "
            f"config feature size {cfg.arch.input_dim}")
    summary, artifacts = _run_one_online(model, streams, cfg.online, cfg,
                                         out_dir, cfg.online.loss_kind.value,
                                         write_weights=True)
    _write_manifest(out_dir, cfg, artifacts, extra={"summary": summary})
    return EXIT_OK


def cmd_compare(args) -> int:
    import csv
    from dataclasses import replace

    from .baselines import run_mlse_baseline, supervised_finetune
    from .config import config_hash, load_config
    from .nn import load_checkpoint
    from .pipeline import trace_summary, write_summary_json, write_trace_csv

    cfg = load_config(args.config, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    streams = _load_streams(Path(args.data))
    model = load_checkpoint(args.checkpoint)
    if model.arch.input_dim != cfg.arch.input_dim:
        raise ShapeError(
            f"checkpoint input_dim {model.arch.input_dim} does not match "
            f"config feature size {cfg.arch.input_dim}")

    rows = []
    artifacts = {}

    def record(name, summary):
        rows.append({
            "method": name,
            "converged": summary["convergence_batches"] is not None,
            "convergence_batches": summary["convergence_batches"],
            "final_ber_set1": summary["final_ber_set1"],
            "final_ber_set2": summary["final_ber_set2"],
        })

    summary, arts = _run_one_online(model, streams, cfg.online, cfg,
                                    out_dir / "adann", "adann",
                                    write_weights=True)
    record("adann", summary)
    artifacts["adann"] = "adann"

    non_adaptive = replace(cfg.online, adapt=False)
    summary, _ = _run_one_online(model, streams, non_adaptive, cfg,
                                 out_dir / "non_adaptive", "non_adaptive",
                                 write_weights=False)
    record("non_adaptive", summary)
    artifacts["non_adaptive"] = "non_adaptive"

    for l_ch in cfg.mlse_memory_lengths:
        name = f"mlse_l{l_ch}"
        sub = out_dir / name
        sub.mkdir(parents=True, exist_ok=True)
        trace = run_mlse_baseline(streams, l_ch, cfg.lms_step, cfg.online)
        write_trace_csv(trace, sub / "trace.csv")
        summary = trace_summary(trace, cfg.online.ber_threshold,
                                cfg.online.smoothing_window, "supervised_lms",
                                config_hash(cfg.normalized()))
        summary["method"] = name
        summary["memory_length"] = l_ch
        write_summary_json(summary, sub / "summary.json")
        record(name, summary)
        artifacts[name] = name

    for gamma in cfg.finetune_gammas:
        name = f"finetune_g{gamma:g}"
        sub = out_dir / name
        sub.mkdir(parents=True, exist_ok=True)
        result = supervised_finetune(model, streams, gamma, cfg.online,
                                     cfg.finetune_iterations)
        write_trace_csv(result.trace, sub / "trace.csv")
        summary = trace_summary(result.trace, cfg.online.ber_threshold,
                                cfg.online.smoothing_window,
                                "supervised_finetune",
                                config_hash(cfg.normalized()))
        summary["method"] = name
        summary["gamma"] = gamma
        write_summary_json(summary, sub / "summary.json")
        record(name, summary)
        artifacts[name] = name

    for n_b in cfg.batch_size_sweep:
        name = f"nb_{n_b}"
        swept = replace(cfg.online, batch_size=n_b)
        summary, _ = _run_one_online(model, streams, swept, cfg,
                                     out_dir / name, name, write_weights=False)
        record(name, summary)
        artifacts[name] = name

    with open(out_dir / "summary.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["method", "converged",
                                               "convergence_batches",
                                               "final_ber_set1",
                                               "final_ber_set2"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    write_summary_json({"methods": rows}, out_dir / "summary.json")
    artifacts["summary_csv"] = "summary.csv"
    artifacts["summary_json"] = "summary.json"
    _write_manifest(out_dir, cfg, artifacts)
    return EXIT_OK


def cmd_analyze_weights(args) -> int:
    from .nn import load_checkpoint
    from .pipeline import weight_change_ratios, write_weight_report_csv

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    initial = load_checkpoint(args.initial)
    final = load_checkpoint(args.final)
    report = weight_change_ratios(initial, final)
    write_weight_report_csv(report, out_dir / "weight_change.csv")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adann",
        description="Adaptive NN equalizer experiments on synthetic drifting links")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, checkpoint=False):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if data:
            p.add_argument("--data", required=True,
                           help="directory holding set1/set2 datasets")
        if checkpoint:
            p.add_argument("--checkpoint", required=True,
                           help="model checkpoint JSON")

    common(sub.add_parser("simulate", help="generate set1/set2 datasets"))
    common(sub.add_parser("train-offline", help="supervised offline training"),
           data=True)
    common(sub.add_parser("run-online", help="online adaptation run"),
           data=True, checkpoint=True)
    common(sub.add_parser("compare",
                          help="AdaNN vs non-adaptive, MLSE and fine-tuning"),
           data=True, checkpoint=True)

    analyze = sub.add_parser("analyze-weights",
                             help="weight-change ratios between two checkpoints")
    analyze.add_argument("--initial", required=True)
    analyze.add_argument("--final", required=True)
    analyze.add_argument("--out-dir", required=True)
    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "train-offline": cmd_train_offline,
    "run-online": cmd_run_online,
    "compare": cmd_compare,
    "analyze-weights": cmd_analyze_weights,
}


def main(argv=None) -> int:
    try:
        _configure_threads()
        args = _build_parser().parse_args(argv)
        return _HANDLERS[args.command](args)
    except (ConfigError, UsageError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except AdannError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
