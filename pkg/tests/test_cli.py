"""Command-line behavior, exercised in process through main(argv)."""

import numpy as np
import pytest

from helpers import separable_pair
from mmdtl2 import cli
from mmdtl2.dataset import save_csv
from mmdtl2.linalg import NumericalError


@pytest.fixture
def pair_files(tmp_path):
    source, target = separable_pair(seed=5, dim=3, per_class=8)
    src = tmp_path / "source.csv"
    tgt = tmp_path / "target.csv"
    save_csv(source, str(src))
    save_csv(target, str(tgt))
    return str(src), str(tgt)


def train_model(pair_files, tmp_path, *extra):
    src, tgt = pair_files
    model = str(tmp_path / "model.txt")
    code = cli.main(
        ["train", src, tgt, "--model", model, "--iterations", "2", *extra]
    )
    assert code == 0
    return model


def inspect_pairs(model, capsys):
    assert cli.main(["inspect", model]) == 0
    out = capsys.readouterr().out
    pairs = {}
    for line in out.splitlines():
        key, _, value = line.partition("\t")
        pairs[key] = value
    return pairs


# -------------------------------------------------------------- exit codes


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error(pair_files):
    src, tgt = pair_files
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", src, tgt, "--model", "m", "--frobnicate"])
    assert exc.value.code == 2


def test_missing_input_file_exits_2(tmp_path, capsys):
    missing = str(tmp_path / "nope.csv")
    code = cli.main(["train", missing, missing, "--model", str(tmp_path / "m")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "nope.csv" in err


def test_malformed_csv_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0.5\n2,oops\n")
    code = cli.main(["train", str(bad), str(bad), "--model", str(tmp_path / "m")])
    assert code == 2
    assert "row 2" in capsys.readouterr().err


def test_solver_failure_exits_1(pair_files, tmp_path, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("factorization failed")

    monkeypatch.setattr(cli.adapt, "fit", boom)
    src, tgt = pair_files
    code = cli.main(["train", src, tgt, "--model", str(tmp_path / "m")])
    assert code == 1
    assert capsys.readouterr().err.startswith("numerical failure:")


def test_kernel_fit_with_uncovered_target_class_exits_2(tmp_path, capsys):
    # Target label 3 has no source anchors, which the kernel route cannot
    # absorb; the CLI maps the resulting usage error to exit 2.
    src = tmp_path / "s.csv"
    tgt = tmp_path / "t.csv"
    src.write_text("1,0.0,0.0\n2,1.0,0.0\n1,0.1,0.1\n2,0.9,0.1\n")
    tgt.write_text("1,0.0,0.2\n2,1.1,0.2\n3,0.2,0.9\n2,0.8,0.0\n")
    code = cli.main(
        ["train", str(src), str(tgt), "--model", str(tmp_path / "m"),
         "--kernel", "rbf"]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------ round trips


def test_synth_writes_both_files(tmp_path, capsys):
    src = tmp_path / "s.csv"
    tgt = tmp_path / "t.csv"
    code = cli.main(
        ["synth", "--out-source", str(src), "--out-target", str(tgt),
         "--classes", "2", "--source-per-class", "4", "--target-per-class", "3",
         "--source-dim", "3", "--target-dim", "3", "--seed", "1"]
    )
    assert code == 0
    assert len(src.read_text().splitlines()) == 8
    assert len(tgt.read_text().splitlines()) == 6
    err = capsys.readouterr().err
    assert "wrote 8 source rows" in err


def test_synth_standard_preset(tmp_path):
    src = tmp_path / "s.csv"
    tgt = tmp_path / "t.csv"
    code = cli.main(
        ["synth", "--out-source", str(src), "--out-target", str(tgt),
         "--preset", "standard"]
    )
    assert code == 0
    lines = src.read_text().splitlines()
    assert len(lines) == 300
    assert len(lines[0].split(",")) == 65


def test_train_predict_report_round_trip(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    err = capsys.readouterr().err
    assert "iter 1 w_objective" in err
    assert f"saved model to {model}" in err

    _, tgt = pair_files
    code = cli.main(["predict", model, tgt, "--report"])
    assert code == 0
    out_lines = capsys.readouterr().out.splitlines()
    assert len(out_lines) == 16 + 1  # one prediction per row plus the summary
    for line in out_lines[:-1]:
        assert line in ("1", "2")
    head, value = out_lines[-1].split()
    assert head == "accuracy"
    assert 0.0 <= float(value) <= 100.0


def test_predict_bare_rows_prints_predictions_only(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    _, tgt = pair_files
    bare = tmp_path / "bare.csv"
    rows = []
    for line in open(tgt, encoding="utf-8").read().splitlines():
        rows.append(line.split(",", 1)[1])
    bare.write_text("\n".join(rows) + "\n")
    capsys.readouterr()
    code = cli.main(["predict", model, str(bare)])
    assert code == 0
    out = capsys.readouterr().out
    assert len(out.splitlines()) == 16
    assert "accuracy" not in out


def test_predict_empty_file_is_quiet_success(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    capsys.readouterr()
    code = cli.main(["predict", model, str(empty)])
    assert code == 0
    assert capsys.readouterr().out == ""


def test_predict_report_requires_labels(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    bare = tmp_path / "bare.csv"
    bare.write_text("0.1,0.2,0.3\n")
    code = cli.main(["predict", model, str(bare), "--report"])
    assert code == 2
    assert "labeled" in capsys.readouterr().err


def test_predict_row_width_mismatch_exits_2(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    odd = tmp_path / "odd.csv"
    odd.write_text("0.1,0.2\n")
    code = cli.main(["predict", model, str(odd)])
    assert code == 2
    assert "row 1" in capsys.readouterr().err


# ------------------------------------------------- parameter layering


def test_inspect_reports_training_settings(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path, "--cf", "0.25", "--kernel", "rbf")
    pairs = inspect_pairs(model, capsys)
    assert pairs["mode"] == "mmdtl2"
    assert pairs["source_dim"] == "3"
    assert pairs["target_dim"] == "3"
    assert pairs["classes"] == "2"
    assert pairs["kernel"] == "rbf"
    assert float(pairs["cf"]) == 0.25
    assert pairs["iterations"] == "2"


def test_mmdt_method_pins_cost_defaults(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path, "--method", "mmdt")
    pairs = inspect_pairs(model, capsys)
    assert pairs["mode"] == "mmdt"
    assert float(pairs["cf"]) == 1.0
    assert float(pairs["cd"]) == 0.0
    assert float(pairs["cs"]) == 0.05
    assert float(pairs["ct"]) == 1.0


def test_explicit_flag_beats_mmdt_default(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path, "--method", "mmdt", "--cs", "0.2")
    pairs = inspect_pairs(model, capsys)
    assert float(pairs["cs"]) == 0.2
    assert float(pairs["cf"]) == 1.0  # untouched pin stays


def test_config_file_sits_between_defaults_and_flags(pair_files, tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# tuning\ncf = 0.9\nct=0.33\nqp-tol=1e-7\n")
    model = train_model(
        pair_files, tmp_path, "--config", str(conf), "--cf", "0.2"
    )
    pairs = inspect_pairs(model, capsys)
    assert float(pairs["cf"]) == 0.2  # explicit flag wins
    assert float(pairs["ct"]) == 0.33  # config beats built-in default
    assert float(pairs["cs"]) == 0.1  # untouched default


def test_config_file_bad_line_exits_2(pair_files, tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("just words\n")
    src, tgt = pair_files
    code = cli.main(
        ["train", src, tgt, "--model", str(tmp_path / "m"), "--config", str(conf)]
    )
    assert code == 2
    assert "config line 1" in capsys.readouterr().err


def test_config_file_unknown_key_exits_2(pair_files, tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("warp-factor=9\n")
    src, tgt = pair_files
    code = cli.main(
        ["train", src, tgt, "--model", str(tmp_path / "m"), "--config", str(conf)]
    )
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


# ------------------------------------------------------- export and inspect


def test_export_w_shape_and_values(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    capsys.readouterr()
    code = cli.main(["export-w", model])
    assert code == 0
    rows = capsys.readouterr().out.splitlines()
    matrix = np.array([[float(c) for c in row.split(",")] for row in rows])
    assert matrix.shape == (3, 4)  # source dim x augmented target dim
    assert np.all(np.isfinite(matrix))


def test_export_w_out_file(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path)
    out = tmp_path / "w.csv"
    assert cli.main(["export-w", model, "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_export_w_rejects_kernel_model(pair_files, tmp_path, capsys):
    model = train_model(pair_files, tmp_path, "--kernel", "rbf")
    code = cli.main(["export-w", model])
    assert code == 2
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------- experiments


EXPERIMENT_ARGS = [
    "--m-values", "2", "--repeats", "2",
    "--methods", "targetSVM,mmdtl2_linear", "--iterations", "2",
]


def test_experiment_prints_table(pair_files, capsys):
    src, tgt = pair_files
    code = cli.main(["experiment", src, tgt, *EXPERIMENT_ARGS])
    assert code == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0] == "M\ttargetSVM\tmmdtl2_linear"
    assert lines[1].startswith("2\t")


def test_experiment_is_deterministic(pair_files, capsys):
    src, tgt = pair_files
    assert cli.main(["experiment", src, tgt, *EXPERIMENT_ARGS]) == 0
    first = capsys.readouterr().out
    assert cli.main(["experiment", src, tgt, *EXPERIMENT_ARGS]) == 0
    second = capsys.readouterr().out
    assert first == second


def test_experiment_side_outputs(pair_files, tmp_path, capsys):
    src, tgt = pair_files
    out = tmp_path / "table.tsv"
    raw = tmp_path / "raw.tsv"
    prefix = str(tmp_path / "plotdata")
    code = cli.main(
        ["experiment", src, tgt, *EXPERIMENT_ARGS,
         "--out", str(out), "--raw", str(raw), "--emit-plot-data", prefix]
    )
    assert code == 0
    assert capsys.readouterr().out == ""  # table went to the file instead
    assert out.read_text().startswith("M\t")
    assert raw.read_text().startswith("M\tmethod\trepeat\taccuracy")
    for method in ("targetSVM", "mmdtl2_linear"):
        lines = (tmp_path / f"plotdata_{method}.dat").read_text().splitlines()
        assert lines[0] == "# M mean std"


def test_experiment_renders_figure(pair_files, tmp_path, capsys):
    src, tgt = pair_files
    plot = tmp_path / "curves.png"
    code = cli.main(
        ["experiment", src, tgt, *EXPERIMENT_ARGS, "--plot", str(plot),
         "--out", str(tmp_path / "t.tsv")]
    )
    assert code == 0
    data = plot.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert f"wrote figure to {plot}" in capsys.readouterr().err


def test_experiment_sweep_table(pair_files, capsys):
    src, tgt = pair_files
    code = cli.main(
        ["experiment", src, tgt, "--repeats", "2", "--iterations", "2",
         "--sweep-cf", "--sweep-values", "0.5,1.0", "--sweep-m", "2"]
    )
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "c_f\taccuracy\tevents"
    assert lines[1].startswith("0.5\t")
    assert lines[2].startswith("1\t")


def test_experiment_standard_preset_sets_cf(pair_files, capsys, monkeypatch):
    seen = {}

    def spy(source, target, config):
        seen["cf"] = config.base_params.c_f
        raise ValueError("probe stop")

    monkeypatch.setattr(cli.evalmod, "run_experiment", spy)
    src, tgt = pair_files
    assert cli.main(["experiment", src, tgt, "--preset", "standard"]) == 2
    assert seen["cf"] == 1000.0
    capsys.readouterr()
    assert cli.main(
        ["experiment", src, tgt, "--preset", "standard", "--cf", "2.5"]
    ) == 2
    assert seen["cf"] == 2.5  # explicit flag beats the preset


def test_experiment_rejects_unknown_method(pair_files, capsys):
    src, tgt = pair_files
    code = cli.main(
        ["experiment", src, tgt, "--m-values", "2", "--repeats", "2",
         "--methods", "quantumSVM"]
    )
    assert code == 2
    assert "unknown method" in capsys.readouterr().err
