import json
from fractions import Fraction

import pandas as pd
import pytest
import yaml
from loguru import logger
from mpmath import mpf

from src.cli.main import build_parser, load_config, main
from src.models.experiment import ExperimentConfig
from src.utils.exceptions import ConfigInvalid

SQRT = {"kind": "power", "s": "1/2"}
CUBE_ROOT = {"kind": "power", "s": "1/3"}


def write_config(path, payload):
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return path


def record(out):
    return json.loads((out / "run_record.json").read_text(encoding="utf-8"))


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("scales", "density", "cover", "diverge", "lemma6", "construct-f",
                    "construct-g", "construct-ginterp", "order", "optimize"):
        args = parser.parse_args([command, "--seed", "3"])
        assert args.command == command and args.seed == 3


def test_flags_override_file(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "precision": 96, "out": "elsewhere"})
    args = build_parser().parse_args(["scales", "--config", str(config_path), "--precision", "160", "--out", str(tmp_path / "o")])
    config = load_config(args)
    assert config.precision == 160
    assert config.out == tmp_path / "o"
    assert config.command == "scales"


def test_print_config(tmp_path, capsys):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT})
    assert main(["scales", "--config", str(config_path), "--print-config"]) == 0
    printed = capsys.readouterr().out
    assert "command: scales" in printed
    assert "precision: 128" in printed


def test_missing_gauge_is_config_invalid(tmp_path):
    out = tmp_path / "out"
    assert main(["diverge", "--out", str(out)]) == 2
    error = json.loads((out / "error.json").read_text(encoding="utf-8"))
    assert error["code"] == "CONFIG_INVALID"
    assert "h" in error["message"] and "g" in error["message"]


def test_unknown_key_is_config_invalid(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "colour": "blue"})
    with pytest.raises(ConfigInvalid):
        load_config(build_parser().parse_args(["scales", "--config", str(config_path)]))


def test_malformed_yaml(tmp_path):
    config_path = tmp_path / "broken.yaml"
    config_path.write_text("h: [unclosed", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["scales", "--config", str(config_path), "--out", str(out)]) == 2
    assert json.loads((out / "error.json").read_text(encoding="utf-8"))["code"] == "CONFIG_INVALID"


def test_seed_is_required_for_sampling(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT})
    assert main(["density", "--config", str(config_path), "--out", str(tmp_path / "out")]) == 2
    assert main(["density", "--config", str(config_path), "--out", str(tmp_path / "out"), "--seed", str(1 << 64)]) == 2


def test_library_error_exit_code(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "model": {"d": 1, "depth": 6}, "ks": [2, 3], "n_max": 4})
    out = tmp_path / "out"
    assert main(["cover", "--config", str(config_path), "--out", str(out)]) == 3
    error = json.loads((out / "error.json").read_text(encoding="utf-8"))
    assert error["code"] == "DEPTH_EXCEEDED"
    assert error["details"]["depth"] == 6


def test_scales_run(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "model": {"d": 1, "depth": 8}})
    out = tmp_path / "out"
    assert main(["scales", "--config", str(config_path), "--out", str(out)]) == 0

    frame = pd.read_csv(out / "scales.csv", dtype=str)
    assert list(frame["a_n_hex"][:3]) == ["0x1p+0", "0x1p-2", "0x1p-4"]
    assert len(frame) == 9

    run = record(out)
    assert run["command"] == "scales"
    assert run["summary"] == {"separation_ok": True, "dyadic_bound_ok": True}
    assert {o["name"] for o in run["outputs"]} == {"scales.csv", "plot_scales.csv"}
    assert run["artifact_version"] and run["finished_at"] >= run["started_at"]


def test_failing_flag_exit_code(tmp_path):
    # h/g = 1/(1 + log 1/t) sits between 2^-20 and 2^-4 on the deeper half
    config_path = write_config(tmp_path / "c.yaml", {
        "h": {"kind": "power", "s": 1},
        "g": {"kind": "power_log", "s": 1, "a": 1},
        "grid_depth": 256,
    })
    out = tmp_path / "out"
    assert main(["order", "--config", str(config_path), "--out", str(out)]) == 1
    run = record(out)
    assert run["values"]["verdict"] == "INCONCLUSIVE"
    assert run["summary"]["order_classified"] is False


def test_order_run_series(tmp_path):
    # t^(1/6) drops below 2^-20 from j = 121 on, so the default grid is deep enough
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "g": CUBE_ROOT, "membership_d": 1})
    out = tmp_path / "out"
    assert main(["order", "--config", str(config_path), "--out", str(out)]) == 0
    plot = pd.read_csv(out / "plot_order.csv")
    slopes = (plot["log2_ratio"].diff() / plot["log2_t"].diff()).dropna()
    assert (slopes - 1 / 6).abs().max() < 1e-12
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["verdict"] == "SMALLER"
    assert "membership_h" in report and "membership_g" in report


def test_construct_ginterp_run(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "scales": [f"4^-{n}" for n in range(1, 7)]})
    out = tmp_path / "out"
    assert main(["construct-ginterp", "--config", str(config_path), "--out", str(out)]) == 0
    g = json.loads((out / "g.json").read_text(encoding="utf-8"))
    assert g["spec"]["kind"] == "piecewise_exp_interp"
    assert len(g["spec"]["scales"]) == 7
    assert record(out)["summary"]["order_larger"] is True


def test_construct_f_run(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {
        "h": SQRT,
        "seed": 7,
        "deltas": ["1", "1/2"] + [f"2^-{4 * n}" for n in range(1, 6)],
        "instance": {"kind": "points", "points": [["0"]]},
        "packings": 20,
    })
    out = tmp_path / "out"
    assert main(["construct-f", "--config", str(config_path), "--out", str(out)]) == 0
    run = record(out)
    assert run["values"]["shift"] == "1"
    assert run["summary"]["band_sums_ok"] is True
    assert len(pd.read_csv(out / "bands.csv")) == 20


def test_diverge_run(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {
        "h": SQRT,
        "g": CUBE_ROOT,
        "model": {"d": 1, "depth": 16},
        "thresholds": ["1", "10"],
    })
    out = tmp_path / "out"
    assert main(["diverge", "--config", str(config_path), "--out", str(out)]) == 0
    run = record(out)
    assert run["values"]["level_M=1.0"] == "5"
    assert run["values"]["level_M=10.0"] == "14"
    certificates = json.loads((out / "certificate.json").read_text(encoding="utf-8"))
    assert [c["ball_count"] for c in certificates] == [16, 8192]
    assert all(c["bound_kind"] == "LOWER" and c["verified"] for c in certificates)


def test_optimize_run(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"g": CUBE_ROOT, "seed": 99, "trials": 6, "candidates": 12})
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(config_path), "--out", str(out)]) == 0
    frame = pd.read_csv(out / "optimize.csv")
    assert len(frame) == 6
    assert frame["equal"].all()
    assert "dp_weight_hex" in frame.columns


def test_optimize_candidate_limit(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"g": CUBE_ROOT, "seed": 1, "candidates": 40})
    assert main(["optimize", "--config", str(config_path), "--out", str(tmp_path / "out")]) == 2


def test_defaults_are_parsed():
    config = ExperimentConfig(command="optimize", g=CUBE_ROOT, seed=1)
    assert config.delta == 1 and not isinstance(config.delta, str)
    assert config.radii[0] == mpf(1) / 64
    assert [int(m) for m in config.thresholds] == [1, 10, 100]
    assert config.tail_ratio == Fraction(1, 2)


@pytest.mark.parametrize("bad", [{"delta": True}, {"thresholds": [[1]]}, {"delta": "1/0"}, {"radii": ["oops"]}])
def test_malformed_reals_are_config_invalid(tmp_path, bad):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "g": CUBE_ROOT, **bad})
    out = tmp_path / "out"
    assert main(["diverge", "--config", str(config_path), "--out", str(out)]) == 2
    assert json.loads((out / "error.json").read_text(encoding="utf-8"))["code"] == "CONFIG_INVALID"


def test_diverge_run_with_default_delta(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "g": CUBE_ROOT, "model": {"d": 1, "depth": 8}, "thresholds": ["1"]})
    out = tmp_path / "out"
    assert main(["diverge", "--config", str(config_path), "--out", str(out)]) == 0
    assert record(out)["values"]["level_M=1.0"] == "5"
    assert record(out)["values"]["witness_sample_M=1.0"] == "False"
    certificate = json.loads((out / "certificate.json").read_text(encoding="utf-8"))[0]
    assert certificate["verification"]["witnessed"] is True
    assert certificate["verification"]["witness_sample"] is False


def test_constant_tail_from_config(tmp_path):
    config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "scales": ["1/4", "1/16"], "tail_ratio": None})
    out = tmp_path / "out"
    assert main(["construct-ginterp", "--config", str(config_path), "--out", str(out)]) == 1
    assert record(out)["summary"]["order_larger"] is False
    assert json.loads((out / "g.json").read_text(encoding="utf-8"))["spec"]["tail_ratio"] is None


def test_run_without_series_writes_no_plots(tmp_path):
    messages = []
    sink = logger.add(messages.append, level="WARNING", format="{message}")
    try:
        config_path = write_config(tmp_path / "c.yaml", {"h": SQRT, "scales": ["1/4", "1/16", "1/64"]})
        out = tmp_path / "out"
        assert main(["construct-ginterp", "--config", str(config_path), "--out", str(out)]) == 0
    finally:
        logger.remove(sink)
    assert not list(out.glob("plot_*.csv"))
    assert any("no plot series" in m for m in messages)
