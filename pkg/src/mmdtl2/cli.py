"""Command-line front end.

Subcommands: synth, train, predict, experiment, export-w, inspect. Data
products go to standard output (or files the flags name); progress and
diagnostics go to standard error. Exit codes: 0 success, 1 numerical
failure inside a solver, 2 usage or input errors.

A --config file holds key=value lines (keys match the long flag names);
precedence is built-in defaults, then method-specific defaults, then the
config file, then explicit flags.
"""

import argparse
import sys

import numpy as np

from . import adapt, eval as evalmod, figures
from .dataset import (
    ParseError,
    SynthConfig,
    load_csv,
    save_csv,
    standard_synth_config,
    synth_generate,
)
from .kernels import KernelSpec
from .linalg import NumericalError

_MMDT_COST_DEFAULTS = {"cs": 0.05, "ct": 1.0, "cf": 1.0, "cd": 0.0}

# Benchmark-calibrated transform regularizer for the standard synthetic
# pair; see eval.standard_benchmark_config for the weight-scale argument.
_STANDARD_BENCH_DEFAULTS = {"cf": 1000.0}


def _add_training_flags(sub):
    sub.add_argument("--method", choices=("mmdtl2", "mmdt"), default="mmdtl2")
    sub.add_argument("--cf", type=float, default=0.1)
    sub.add_argument("--ct", type=float, default=0.1)
    sub.add_argument("--cs", type=float, default=0.1)
    sub.add_argument("--cd", type=float, default=0.1)
    sub.add_argument("--cbox", type=float, default=None,
                     help="transform-step hinge weight; defaults to --ct")
    sub.add_argument("--kernel", choices=("linear", "rbf", "poly"), default="linear")
    sub.add_argument("--gamma", type=float, default=None)
    sub.add_argument("--coef0", type=float, default=1.0)
    sub.add_argument("--degree", type=int, default=3)
    sub.add_argument("--iterations", type=int, default=5)
    sub.add_argument("--qp-tol", type=float, default=1e-8)
    sub.add_argument("--svm-tol", type=float, default=1e-6)
    sub.add_argument("--explicit-linear", action="store_true")
    sub.add_argument("--seed", type=int, default=0)


def _params_from_args(args):
    kernel = KernelSpec(args.kernel, args.gamma, args.coef0, args.degree)
    return adapt.AdaptParams(
        c_f=args.cf,
        c_t=args.ct,
        c_s=args.cs,
        c_d=args.cd,
        c_box=args.cbox,
        kernel=kernel,
        iterations=args.iterations,
        qp_tol=args.qp_tol,
        svm_tol=args.svm_tol,
        seed=args.seed,
        mode=args.method,
        explicit_linear=args.explicit_linear,
    )


def _read_config(path):
    pairs = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {line_no}: expected key=value")
            key, _, value = line.partition("=")
            pairs[key.strip().replace("-", "_")] = value.strip()
    return pairs


def _convert_like(parser, dest, raw):
    for action in parser._actions:
        if action.dest == dest:
            if isinstance(action, argparse._StoreTrueAction):
                return raw.lower() in ("1", "true", "yes")
            if action.type is not None:
                return action.type(raw)
            return raw
    raise ValueError(f"unknown config key {dest!r}")


def _finalize_args(parser, sub_parsers, args, explicit):
    """Layer method defaults and config values under explicit flags."""
    sub = sub_parsers[args.command]
    if getattr(args, "method", None) == "mmdt":
        for dest, value in _MMDT_COST_DEFAULTS.items():
            if dest not in explicit:
                setattr(args, dest, value)
    if args.command == "experiment" and getattr(args, "preset", None) == "standard":
        for dest, value in _STANDARD_BENCH_DEFAULTS.items():
            if dest not in explicit:
                setattr(args, dest, value)
    if getattr(args, "config", None):
        for dest, raw in _read_config(args.config).items():
            if dest in explicit:
                continue
            setattr(args, dest, _convert_like(sub, dest, raw))
    return args


def cmd_synth(args):
    if args.preset == "standard":
        config = standard_synth_config(args.seed)
    else:
        config = SynthConfig(
            class_count=args.classes,
            source_per_class=args.source_per_class,
            target_per_class=args.target_per_class,
            source_dim=args.source_dim,
            target_dim=args.target_dim,
            shift=args.shift,
            noise_sd=args.noise_sd,
            seed=args.seed,
            blob_sd=args.blob_sd,
            mean_scale=args.mean_scale,
        )
    source, target = synth_generate(config)
    save_csv(source, args.out_source)
    save_csv(target, args.out_target)
    print(
        f"wrote {source.count} source rows to {args.out_source}, "
        f"{target.count} target rows to {args.out_target}",
        file=sys.stderr,
    )
    return 0


def cmd_train(args):
    source = load_csv(args.source)
    target = load_csv(args.target)
    params = _params_from_args(args)
    model = adapt.fit(source, target, params)
    for it in model.report.iterations:
        line = (
            f"iter {it.index} w_objective {it.w_objective:.10g} "
            f"dual {it.dual_value:.10g} qp_sweeps {it.qp_sweeps}"
        )
        if it.instability:
            line += " events " + ";".join(it.instability)
        print(line, file=sys.stderr)
    if model.report.early_stopped:
        print("early stop: transform objective settled", file=sys.stderr)
    adapt.save_model(model, args.model)
    print(f"saved model to {args.model}", file=sys.stderr)
    return 0


def _read_predict_rows(path, target_dim):
    """Rows for predict: labeled (dim+1 cells, integer first) or bare features."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        text = handle.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return np.empty((target_dim, 0)), None
    feats = []
    labels = []
    labeled = None
    for row_no, line in enumerate(lines, 1):
        cells = [c.strip() for c in line.split(",")]
        if labeled is None:
            labeled = len(cells) == target_dim + 1
        if labeled:
            if len(cells) != target_dim + 1:
                raise ParseError(
                    f"row {row_no}: expected label plus {target_dim} features"
                )
            try:
                labels.append(int(cells[0]))
            except ValueError:
                raise ParseError(f"row {row_no}: label {cells[0]!r} is not an integer") from None
            values = cells[1:]
        else:
            if len(cells) != target_dim:
                raise ParseError(f"row {row_no}: expected {target_dim} features")
            values = cells
        try:
            feats.append([float(c) for c in values])
        except ValueError:
            raise ParseError(f"row {row_no}: malformed feature value") from None
    features = np.array(feats, dtype=np.float64).T
    return features, (np.array(labels, dtype=np.int64) if labeled else None)


def cmd_predict(args):
    model = adapt.load_model(args.model)
    features, labels = _read_predict_rows(args.data, model.target_dim)
    if features.shape[1] == 0:
        return 0
    if args.report and labels is None:
        raise ValueError("--report needs labeled input rows")
    predictions = adapt.predict_columns(model, features)
    for p in predictions:
        print(int(p))
    if args.report:
        acc = evalmod.accuracy(predictions, labels)
        print(f"accuracy {100 * acc:.2f}")
    return 0


def _experiment_config(args):
    m_values = tuple(int(v) for v in args.m_values.split(","))
    methods = tuple(args.methods.split(","))
    return evalmod.ExperimentConfig(
        m_values=m_values,
        repeats=args.repeats,
        methods=methods,
        test_fraction=args.test_fraction,
        seed=args.seed,
        baseline_c=args.baseline_c,
        base_params=_params_from_args(args),
        jobs=args.jobs,
    )


def cmd_experiment(args):
    source = load_csv(args.source)
    target = load_csv(args.target)
    config = _experiment_config(args)
    if args.sweep_cf or args.sweep_cd:
        parameter = "c_f" if args.sweep_cf else "c_d"
        values = None
        if args.sweep_values:
            values = tuple(float(v) for v in args.sweep_values.split(","))
        report = evalmod.run_sweep(
            source, target, config, parameter,
            values=values, method=args.sweep_method, m_per_class=args.sweep_m,
        )
        text = evalmod.render_sweep_tsv(report)
        _write_text(text, args.out)
        if args.plot:
            figures.render_sweep_figure(report, args.plot)
            print(f"wrote figure to {args.plot}", file=sys.stderr)
        return 0
    report = evalmod.run_experiment(source, target, config)
    text = evalmod.render_tsv(report)
    _write_text(text, args.out)
    if args.raw:
        with open(args.raw, "w", encoding="utf-8") as handle:
            handle.write(evalmod.render_raw_tsv(report))
        print(f"wrote raw accuracies to {args.raw}", file=sys.stderr)
    if args.emit_plot_data:
        paths = evalmod.write_plot_data(report, args.emit_plot_data)
        print(f"wrote plot data: {', '.join(paths)}", file=sys.stderr)
    if args.plot:
        figures.render_experiment_figure(report, args.plot)
        print(f"wrote figure to {args.plot}", file=sys.stderr)
    return 0


def _write_text(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def cmd_export_w(args):
    model = adapt.load_model(args.model)
    w = adapt.materialize_w(model.transform)
    rows = [",".join(repr(float(v)) for v in row) for row in w]
    _write_text("\n".join(rows) + "\n", args.out)
    return 0


def cmd_inspect(args):
    model = adapt.load_model(args.model)
    t = model.transform
    p = model.params
    pairs = [
        ("mode", model.mode),
        ("source_dim", t.source_dim),
        ("target_dim", t.target_dim),
        ("anchors", t.anchor_count),
        ("classes", model.class_count),
        ("kernel", t.kernel.kind),
        ("gamma", t.kernel.gamma),
        ("coef0", t.kernel.coef0),
        ("degree", t.kernel.degree),
        ("cf", p.c_f),
        ("ct", p.c_t),
        ("cs", p.c_s),
        ("cd", p.c_d),
        ("cbox", p.c_box),
        ("iterations", p.iterations),
        ("seed", p.seed),
    ]
    for key, value in pairs:
        print(f"{key}\t{value}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmdtl2",
        description="max-margin domain transform with L2 class anchoring",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry = {}

    synth = subs.add_parser("synth", help="generate a synthetic source/target pair")
    synth.add_argument("--out-source", required=True)
    synth.add_argument("--out-target", required=True)
    synth.add_argument("--preset", choices=("standard",), default=None)
    synth.add_argument("--classes", type=int, default=3)
    synth.add_argument("--source-per-class", type=int, default=100)
    synth.add_argument("--target-per-class", type=int, default=100)
    synth.add_argument("--source-dim", type=int, default=64)
    synth.add_argument("--target-dim", type=int, default=64)
    synth.add_argument("--shift", default="random")
    synth.add_argument("--noise-sd", type=float, default=0.3)
    synth.add_argument("--blob-sd", type=float, default=1.0)
    synth.add_argument("--mean-scale", type=float, default=0.45)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--config", default=None)
    synth.set_defaults(func=cmd_synth)
    registry["synth"] = synth

    train = subs.add_parser("train", help="fit a model from two CSV files")
    train.add_argument("source")
    train.add_argument("target")
    train.add_argument("--model", required=True)
    _add_training_flags(train)
    train.add_argument("--config", default=None)
    train.set_defaults(func=cmd_train)
    registry["train"] = train

    predict = subs.add_parser("predict", help="predict target-domain rows")
    predict.add_argument("model")
    predict.add_argument("data")
    predict.add_argument("--report", action="store_true")
    predict.add_argument("--config", default=None)
    predict.set_defaults(func=cmd_predict)
    registry["predict"] = predict

    experiment = subs.add_parser(
        "experiment", help="benchmark methods over per-class training sizes"
    )
    experiment.add_argument("source")
    experiment.add_argument("target")
    experiment.add_argument(
        "--preset", choices=("standard",), default=None,
        help="benchmark-calibrated knobs for the standard synthetic pair",
    )
    experiment.add_argument(
        "--m-values", default=",".join(str(m) for m in evalmod.DEFAULT_M_VALUES)
    )
    experiment.add_argument("--repeats", type=int, default=10)
    experiment.add_argument("--methods", default=",".join(evalmod.METHODS))
    experiment.add_argument("--test-fraction", type=float, default=0.5)
    experiment.add_argument("--baseline-c", type=float, default=1.0)
    experiment.add_argument("--jobs", type=int, default=1)
    experiment.add_argument("--out", default=None)
    experiment.add_argument("--raw", default=None)
    experiment.add_argument("--emit-plot-data", default=None, metavar="PREFIX")
    experiment.add_argument("--plot", default=None, metavar="FILE")
    experiment.add_argument("--sweep-cf", action="store_true")
    experiment.add_argument("--sweep-cd", action="store_true")
    experiment.add_argument("--sweep-values", default=None)
    experiment.add_argument("--sweep-m", type=int, default=10)
    experiment.add_argument("--sweep-method", default="mmdtl2_linear")
    _add_training_flags(experiment)
    experiment.add_argument("--config", default=None)
    experiment.set_defaults(func=cmd_experiment)
    registry["experiment"] = experiment

    export = subs.add_parser("export-w", help="write the explicit transform matrix")
    export.add_argument("model")
    export.add_argument("--out", default=None)
    export.add_argument("--config", default=None)
    export.set_defaults(func=cmd_export_w)
    registry["export-w"] = export

    inspect = subs.add_parser("inspect", help="print model metadata")
    inspect.add_argument("model")
    inspect.add_argument("--config", default=None)
    inspect.set_defaults(func=cmd_inspect)
    registry["inspect"] = inspect

    return parser, registry


def _explicit_dests(argv):
    """Which dests the user actually typed, via a suppressed-defaults reparse.

    A fresh parser with every default set to SUPPRESS leaves exactly the
    explicitly provided arguments in the namespace (subparsers copy their
    own defaults over any pre-seeded namespace, so sentinels do not work).
    """
    probe, registry = build_parser()
    for sub in [probe, *registry.values()]:
        sub._defaults.clear()
        for action in sub._actions:
            action.default = argparse.SUPPRESS
    return set(vars(probe.parse_args(argv)))


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    explicit = _explicit_dests(argv)
    try:
        args = _finalize_args(parser, registry, args, explicit)
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
