"""Command-line entry point: synth, analyze, train, predict, evaluate.

Every option can also come from a ``--config`` file holding ``key = value``
lines (``#`` starts a comment); keys are the long flag names without the
leading dashes. Flags override the file. Each command writes the fully
resolved configuration to ``<out>/config.txt``; passing that file back with
``--config`` reproduces the run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, data, evaluation, plotting
from .errors import DataError, DivergenceError, TResNetError, UsageError
from .model import build_model, load_model, save_model
from .sampler import FragmentSpec, SampleSet, build_dataset
from .synth import SynthConfig, synthesize
from .training import TrainConfig, train

log = logging.getLogger("tresnet")

COMMANDS = ("synth", "analyze", "train", "predict", "evaluate")
ARCH = {"ll": "l_l", "lp": "l_p", "tp": "T_p", "lt": "l_t", "tt": "T_t"}


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


@dataclass(frozen=True)
class Option:
    name: str
    type: object
    default: object
    help: str
    commands: tuple = COMMANDS


_DATA = ("analyze", "train", "predict", "evaluate")
_RUN = ("train", "predict", "evaluate")
_APPLY = ("predict", "evaluate")

OPTIONS = [
    Option("trace", str, None, "trace CSV to read (synth: file to write, default <out>/trace.csv)"),
    Option("out", str, None, "output directory"),
    Option("seed", int, 0, "random seed"),
    Option("schema-percent", _bool, False, "CPU columns are percentages in [0, 100]"),
    Option("interval", int, 300, "sampling interval in seconds"),
    Option("log-epsilon", float, data.DEFAULT_LOG_EPSILON, "additive offset before the log transform", _DATA),
    Option("deployment-id", str, None, "deployment to use (default: first long-running one)", _DATA),
    Option("span-days", _opt_float, None, "required gap-free span in days (default: whole trace)", _DATA),
    # synth
    Option("vms", int, 8, "VMs per synthetic deployment", ("synth",)),
    Option("deployments", int, 1, "number of synthetic deployments", ("synth",)),
    Option("days", float, 30.0, "days of synthetic data", ("synth",)),
    Option("noise", float, 0.2, "noise level of the synthetic generator", ("synth",)),
    Option("rho", float, 0.9, "shared-component fraction (targets cross-VM correlation)", ("synth",)),
    Option("drift-segments", int, 3, "linear pieces in the synthetic drift", ("synth",)),
    Option("lag-step", int, 1, "delay of the shared component between consecutive VMs, in intervals", ("synth",)),
    # analyze
    Option("period", int, None, "decomposition period in intervals (default: one day)", ("analyze",)),
    Option("kde-samples", int, 320, "VMs sampled for the correlation KDE", ("analyze",)),
    Option("kde-points", int, 100, "KDE evaluation grid size over [-1, 1]", ("analyze",)),
    # architecture / data
    Option("k", int, 0, "number of relevant VMs added as inputs", _RUN),
    Option("ll", int, 12, "locality fragment length", _RUN),
    Option("lp", int, 24, "periodicity fragment length", _RUN),
    Option("lt", int, 7, "tendency fragment length", _RUN),
    Option("tp", int, None, "periodicity stride in intervals (default: one hour)", _RUN),
    Option("tt", int, None, "tendency stride in intervals (default: one day)", _RUN),
    Option("stem-channels", int, 16, "filters in each branch's first convolution", _RUN),
    Option("train-days", float, 14.0, "days in the training range", _RUN),
    Option("val-days", float, 7.0, "days in the validation range (the rest is test)", _RUN),
    # training
    Option("batch-size", int, 64, "mini-batch size", ("train",)),
    Option("lr", float, 1e-3, "Adam learning rate", ("train",)),
    Option("epochs", int, 100, "maximum epochs", ("train",)),
    Option("patience", int, 10, "epochs without validation improvement before stopping", ("train",)),
    Option("clip-norm", _opt_float, None, "global gradient-norm clip (off by default)", ("train",)),
    Option("per-vm-model", _bool, False, "train one model per VM instead of one per deployment", ("train",)),
    Option("checkpoints", _bool, False, "write a checkpoint after every improving epoch", ("train",)),
    # predict / evaluate
    Option("model", str, None, "model file or training output directory (default: --out)", _APPLY),
    Option("split", str, "test", "samples to predict: train, val, test or all", ("predict",)),
    Option("mape-floor", float, evaluation.DEFAULT_MAPE_FLOOR, "smallest truth counted by MAPE", ("evaluate",)),
    Option("per-vm", _bool, False, "also write per-VM metric reports", ("evaluate",)),
    Option("unscaled", _bool, False, "compute metrics on unscaled utilization", ("evaluate",)),
    Option("season", int, None, "seasonal-naive period in intervals (default: one day)", ("evaluate",)),
    Option("mean-window", int, None, "window of the moving-mean baseline (default: --ll)", ("evaluate",)),
]
OPTION_BY_KEY = {o.name: o for o in OPTIONS}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tresnet", description="VM CPU utilization forecasting")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="key = value configuration file")
        for o in OPTIONS:
            if cmd not in o.commands:
                continue
            if o.type is _bool:
                p.add_argument(f"--{o.name}", nargs="?", const=True, default=None, type=_bool,
                               help=o.help)
            else:
                p.add_argument(f"--{o.name}", type=o.type, default=None, help=o.help)
    return parser


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("_", "-")
            if key == "command":
                continue
            if key not in OPTION_BY_KEY:
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            values[key] = value
    return values


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags.

    Keys the user set (file or flag) are listed in ``cfg["_explicit"]``.
    """
    cfg = {o.name: o.default for o in OPTIONS if command in o.commands}
    explicit = set()
    if getattr(args, "config", None):
        for key, text in read_config_file(args.config).items():
            if key not in cfg:
                continue
            opt = OPTION_BY_KEY[key]
            try:
                cfg[key] = opt.type(text) if text.lower() not in ("", "none") else None
            except ValueError:
                raise UsageError(f"config value for {key!r} is not valid: {text!r}") from None
            explicit.add(key)
    for key in cfg:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
            explicit.add(key)
    cfg["_explicit"] = explicit
    return cfg


def write_config_echo(cfg: dict, command: str, out: Path) -> None:
    with open(out / "config.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# resolved configuration for 'tresnet {command}'\n")
        for key in sorted(k for k in cfg if not k.startswith("_")):
            value = cfg[key]
            fh.write(f"{key} = {'none' if value is None else value}\n")


def _out_dir(cfg) -> Path:
    if not cfg.get("out"):
        raise UsageError("--out is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _schema(cfg) -> data.TraceSchema:
    return data.TraceSchema(percent=cfg["schema-percent"], interval_seconds=cfg["interval"])


def _steps(cfg, seconds):
    return max(1, seconds // cfg["interval"])


# ------------------------------------------------------------------ data prep


def load_deployments(cfg) -> list:
    if not cfg.get("trace"):
        raise UsageError("--trace is required")
    try:
        deployments = data.read_trace(cfg["trace"], _schema(cfg))
    except OSError as exc:
        raise DataError(f"cannot read trace: {exc}") from None
    if not deployments:
        raise DataError("trace contains no readings")
    span = cfg.get("span-days")
    span_seconds = data.trace_span(deployments) if span is None else int(round(span * data.DAY_SECONDS))
    kept = data.filter_long_running(deployments, span_seconds)
    log.info("%d of %d deployments cover %d s without gaps", len(kept), len(deployments), span_seconds)
    return kept


def pick_deployment(deployments, deployment_id):
    if not deployments:
        raise DataError("no deployment survives the long-running filter")
    if deployment_id is None:
        return deployments[0]
    for dep in deployments:
        if dep.deployment_id == deployment_id:
            return dep
    raise DataError(f"deployment {deployment_id!r} not found among long-running deployments")


def fragment_spec(cfg) -> FragmentSpec:
    tp = cfg["tp"] if cfg["tp"] is not None else _steps(cfg, 3600)
    tt = cfg["tt"] if cfg["tt"] is not None else _steps(cfg, data.DAY_SECONDS)
    return FragmentSpec(cfg["ll"], cfg["lp"], tp, cfg["lt"], tt)


@dataclass
class Prepared:
    deployment: data.Deployment
    split: data.SplitSpec
    scalers: list
    datasets: object


def prepare(cfg, spec: FragmentSpec, k: int) -> Prepared:
    dep = pick_deployment(load_deployments(cfg), cfg.get("deployment-id"))
    timeline = dep.timeline
    split_spec = data.split_by_days(timeline.length, timeline.interval_seconds,
                                    cfg["train-days"], cfg["val-days"])
    scalers = data.fit_deployment_scalers(dep, split_spec.train_end, cfg["log-epsilon"])
    datasets = build_dataset(dep, k, spec, split_spec, scalers)
    return Prepared(dep, split_spec, scalers, datasets)


# ------------------------------------------------------------------ commands


def cmd_synth(cfg) -> int:
    out = _out_dir(cfg)
    synth_cfg = SynthConfig(deployments=cfg["deployments"], vms=cfg["vms"], days=cfg["days"],
                            interval_seconds=cfg["interval"], noise=cfg["noise"], rho=cfg["rho"],
                            drift_segments=cfg["drift-segments"], lag_step=cfg["lag-step"],
                            seed=cfg["seed"])
    deployments = synthesize(synth_cfg)
    path = Path(cfg["trace"]) if cfg.get("trace") else out / "trace.csv"
    cfg["trace"] = str(path)
    data.write_trace(path, deployments, percent=cfg["schema-percent"])
    write_config_echo(cfg, "synth", out)
    log.info("wrote %s", path)
    return 0


def _write_decomposition(path_csv, dec, timestamps):
    with open(path_csv, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "timestamp", "observed", "trend", "seasonal", "residual"])
        for (i, obs, tr, se, re_), ts in zip(dec.to_rows(), timestamps):
            w.writerow([i, int(ts), repr(float(obs)), plotting.finite_or_blank(tr),
                        repr(float(se)), plotting.finite_or_blank(re_)])


def cmd_analyze(cfg) -> int:
    out = _out_dir(cfg)
    deployments = load_deployments(cfg)
    if cfg.get("deployment-id") is not None:
        deployments = [pick_deployment(deployments, cfg["deployment-id"])]
    period = cfg["period"] or _steps(cfg, data.DAY_SECONDS)
    failures = 0
    for dep in deployments:
        timestamps = dep.timeline.timestamps()
        for vm in dep.vms:
            stem = f"decomposition_{dep.deployment_id}_{vm.vm_id}"
            try:
                dec = analysis.seasonal_decompose(vm.v_max, period)
            except TResNetError as exc:
                log.warning("decomposition skipped for %s/%s: %s", dep.deployment_id, vm.vm_id, exc)
                failures += 1
                continue
            _write_decomposition(out / f"{stem}.csv", dec, timestamps)
            panels = [("observed", {"max utilization": dec.observed}, "utilization"),
                      ("trend", {"trend": dec.trend}, "utilization"),
                      ("seasonal", {"seasonal": dec.seasonal}, "utilization"),
                      ("residual", {"residual": dec.residual}, "utilization")]
            plotting.write_svg(out / f"{stem}.svg",
                               plotting.panel_chart(timestamps, panels, xlabel="timestamp (s)"))

    pool = [(d.deployment_id, i) for d in deployments for i in range(len(d))]
    rng = np.random.default_rng(cfg["seed"])
    if len(pool) > cfg["kde-samples"]:
        chosen = sorted(rng.choice(len(pool), cfg["kde-samples"], replace=False))
        pool = [pool[i] for i in chosen]
    correlations = []
    for dep in deployments:
        members = [i for d, i in pool if d == dep.deployment_id]
        if len(members) < 2:
            continue
        correlations.append(analysis.correlation_matrix(dep.max_matrix()[members]).pairwise())
    corr = np.concatenate(correlations) if correlations else np.empty(0)
    with open(out / "correlations.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pearson"])
        w.writerows([[repr(float(c))] for c in corr])
    try:
        grid = np.linspace(-1.0, 1.0, cfg["kde-points"])
        density = analysis.gaussian_kde(corr, grid) if corr.size else None
    except TResNetError as exc:
        density = None
        log.warning("KDE skipped: %s", exc)
    if density is None:
        print("notice: fewer than two distinct VM pairs; correlation KDE skipped")
    else:
        with open(out / "kde.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pearson", "density"])
            w.writerows([[repr(float(g)), repr(float(d))] for g, d in zip(grid, density)])
        plotting.write_svg(out / "kde.svg", plotting.line_chart(
            grid, {"density": density}, title="KDE of pairwise Pearson correlation",
            xlabel="Pearson correlation", ylabel="density"))
    write_config_echo(cfg, "analyze", out)
    return 2 if failures and failures == sum(len(d) for d in deployments) else 0


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(batch_size=cfg["batch-size"], max_epochs=cfg["epochs"], patience=cfg["patience"],
                       learning_rate=cfg["lr"], seed=cfg["seed"], clip_norm=cfg["clip-norm"])


def _model_extra(cfg, prepared, vm_index=None) -> dict:
    return {"deployment_id": prepared.deployment.deployment_id, "train_days": cfg["train-days"],
            "val_days": cfg["val-days"], "log_epsilon": cfg["log-epsilon"], "interval": cfg["interval"],
            "vm_index": vm_index}


def _write_history(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        history.write_csv(fh)


def cmd_train(cfg) -> int:
    out = _out_dir(cfg)
    spec = fragment_spec(cfg)
    prepared = prepare(cfg, spec, cfg["k"])
    ds = prepared.datasets
    tcfg = _train_config(cfg)
    jobs = [(None, "model")]
    if cfg["per-vm-model"]:
        jobs = [(i, f"model_vm{i:03d}") for i in range(len(prepared.deployment))]
    write_config_echo(cfg, "train", out)
    for vm_index, name in jobs:
        train_set, val_set = ds.train, ds.val
        if vm_index is not None:
            train_set = train_set.subset(train_set.vm == vm_index)
            val_set = val_set.subset(val_set.vm == vm_index)
        model = build_model(spec, cfg["k"], cfg["stem-channels"], cfg["seed"],
                            _model_extra(cfg, prepared, vm_index))

        def checkpoint(m, record, name=name):
            if cfg["checkpoints"]:
                save_model(m, out / f"{name}.epoch{record.epoch:03d}.tresnet")

        try:
            model, history = train(model, train_set, val_set, tcfg, on_improve=checkpoint)
        except DivergenceError as exc:
            if exc.history is not None:
                _write_history(out / f"{name}_history.csv", exc.history)
            raise
        save_model(model, out / f"{name}.tresnet")
        _write_history(out / f"{name}_history.csv", history)
        best = history.best
        print(f"{name}: best epoch {best.epoch} of {len(history)}, val MSE {best.val_loss:.6g}")
    return 0


def _model_paths(cfg) -> list:
    src = Path(cfg.get("model") or cfg.get("out") or ".")
    if src.is_file():
        return [src]
    shared = src / "model.tresnet"
    if shared.exists():
        return [shared]
    per_vm = sorted(src.glob("model_vm[0-9][0-9][0-9].tresnet"))
    if not per_vm:
        raise DataError(f"no model file found in {src}")
    return per_vm


def load_run(cfg):
    """Models plus the data prepared the way they were trained.

    Architecture and split settings come from the model metadata unless the
    user set them explicitly, in which case they must agree.
    """
    models = []
    for path in _model_paths(cfg):
        try:
            models.append(load_model(path))
        except OSError as exc:
            raise DataError(f"cannot read model {path}: {exc}") from None
    first = models[0]
    explicit = cfg["_explicit"]
    arch_given = [key for key in ARCH if key in explicit]
    spec = None
    if arch_given:
        values = {ARCH[key]: (cfg[key] if key in explicit else getattr(first.spec, ARCH[key])) for key in ARCH}
        spec = FragmentSpec(**values)
    for m in models:
        m.check_compatible(spec, cfg["k"] if "k" in explicit else None,
                           cfg["stem-channels"] if "stem-channels" in explicit else None)
    extra = first.extra
    for key, meta_key in (("train-days", "train_days"), ("val-days", "val_days"),
                          ("log-epsilon", "log_epsilon"), ("deployment-id", "deployment_id")):
        if key not in explicit and meta_key in extra:
            cfg[key] = extra[meta_key]
    prepared = prepare(cfg, first.spec, first.k)
    return models, prepared


def predict_samples(models, samples) -> np.ndarray:
    if len(models) == 1 and models[0].extra.get("vm_index") is None:
        return models[0].predict(samples)
    out = np.full(len(samples), np.nan)
    for m in models:
        mask = samples.vm == m.extra["vm_index"]
        out[mask] = m.predict(samples.subset(mask))
    if np.isnan(out).any():
        raise DataError("some VMs have no per-VM model")
    return out


def _final_forecast(models, prepared):
    """Predictions for the interval just past the trace end (no truth)."""
    ds = prepared.datasets
    series = ds.test.series
    last = series.shape[1] - 1
    if last < ds.test.spec.horizon:
        return None
    n_vm = series.shape[0]
    tail = SampleSet(series, np.arange(n_vm), np.full(n_vm, last), ds.test.spec)
    frags = tail.fragments()
    preds = np.empty(n_vm)
    for m in models:
        vm_index = m.extra.get("vm_index")
        rows = np.arange(n_vm) if vm_index is None else np.array([vm_index])
        preds[rows] = m.forward(*(f[rows] for f in frags), training=False)
    return preds


def cmd_predict(cfg) -> int:
    out = _out_dir(cfg)
    models, prepared = load_run(cfg)
    ds = prepared.datasets
    choice = cfg["split"]
    sets = {"train": [ds.train], "val": [ds.val], "test": [ds.test], "all": [ds.train, ds.val, ds.test]}
    if choice not in sets:
        raise UsageError("--split must be one of train, val, test, all")
    dep = prepared.deployment
    timeline = dep.timeline
    rows = []
    squared, count = 0.0, 0
    for samples in sets[choice]:
        if len(samples) == 0:
            continue
        pred = predict_samples(models, samples)
        truth = samples.targets
        for v, ts, p, y in zip(samples.vm, samples.ts, pred, truth):
            sc = prepared.scalers[v][data.MAX_CHANNEL]
            rows.append([dep.vms[v].vm_id, timeline.start_timestamp + (ts + 1) * timeline.interval_seconds,
                         repr(float(p)), repr(float(y)), repr(float(data.unscale(p, sc))),
                         repr(float(data.unscale(y, sc)))])
        if samples is ds.test:
            test_rmse = evaluation.rmse(pred, truth)
    if choice in ("test", "all"):
        tail = _final_forecast(models, prepared)
        if tail is not None:
            for v, p in enumerate(tail):
                sc = prepared.scalers[v][data.MAX_CHANNEL]
                rows.append([dep.vms[v].vm_id, timeline.start_timestamp + timeline.length * timeline.interval_seconds,
                             repr(float(p)), "", repr(float(data.unscale(p, sc))), ""])
    with open(out / "predictions.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vm_id", "timestamp", "prediction", "truth", "prediction_unscaled", "truth_unscaled"])
        w.writerows(rows)
    if choice in ("test", "all") and len(ds.test):
        with open(out / "predict_summary.txt", "w", encoding="utf-8") as fh:
            fh.write(f"test_rmse = {test_rmse!r}\n")
        print(f"test RMSE (normalized): {test_rmse:.6g}")
    write_config_echo(cfg, "predict", out)
    return 0


def cmd_evaluate(cfg) -> int:
    out = _out_dir(cfg)
    models, prepared = load_run(cfg)
    test = prepared.datasets.test
    if len(test) == 0:
        raise DataError("test range holds no samples")
    k = models[0].k
    season = cfg["season"] or _steps(cfg, data.DAY_SECONDS)
    window = cfg["mean-window"] or test.spec.l_l
    preds = {
        "NAIVE": evaluation.naive_predict(test),
        "SEASONAL-NAIVE": evaluation.seasonal_naive_predict(test, season),
        f"MEAN-{window}": evaluation.mean_predict(test, window),
        evaluation.variant_name(k): predict_samples(models, test),
    }
    truth = test.targets
    scale_name = "normalized"
    if cfg["unscaled"]:
        scale_name = "unscaled"
        params = [prepared.scalers[v][data.MAX_CHANNEL] for v in range(len(prepared.deployment))]

        def back(x):
            res = np.empty_like(x)
            for v, sc in enumerate(params):
                m = test.vm == v
                res[m] = data.unscale(x[m], sc)
            return res

        preds = {name: back(p) for name, p in preds.items()}
        truth = back(truth)
    report = evaluation.evaluate(preds, truth, cfg["mape-floor"], scale_name)
    with open(out / "report.csv", "w", encoding="utf-8", newline="") as fh:
        report.write_csv(fh)
    text = report.to_text()
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    dep = prepared.deployment
    if cfg["per-vm"]:
        per_vm = evaluation.evaluate_per_vm(preds, truth, test.vm, cfg["mape-floor"], scale_name)
        with open(out / "report_per_vm.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vm_id", "method", "rmse", "mae", "mape", "n", "excluded"])
            for v, rep in per_vm.items():
                for r in rep.results:
                    w.writerow([dep.vms[v].vm_id, r.method, repr(r.rmse), repr(r.mae), repr(r.mape),
                                r.n, r.excluded])
    timeline = dep.timeline
    model_name = evaluation.variant_name(k)
    for v, vm in enumerate(dep.vms):
        m = test.vm == v
        if not m.any():
            continue
        stamps = timeline.start_timestamp + (test.ts[m] + 1) * timeline.interval_seconds
        svg = plotting.line_chart(stamps, {"truth": truth[m], model_name: preds[model_name][m],
                                           "NAIVE": preds["NAIVE"][m]},
                                  title=f"{dep.deployment_id}/{vm.vm_id} test predictions",
                                  xlabel="timestamp (s)", ylabel=f"max utilization ({scale_name})")
        plotting.write_svg(out / f"overlay_{vm.vm_id}.svg", svg)
    write_config_echo(cfg, "evaluate", out)
    return 0


HANDLERS = {"synth": cmd_synth, "analyze": cmd_analyze, "train": cmd_train,
            "predict": cmd_predict, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        return HANDLERS[args.command](cfg)
    except TResNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
