import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emucap import cli
from emucap.channel import channels_equal, dephasing, identity, random_channel
from emucap.io import (
    ChannelFile,
    ParseError,
    RunConfig,
    channel_from_dict,
    channel_to_dict,
    fmt,
    load_channel,
    load_channel_file,
    report_json,
    save_channel,
)
from emucap.operator_core import DEFAULT_SEED


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_channel_roundtrip_is_bit_exact(seed, din, dout):
    c = random_channel(din, dout, seed=seed)
    back = ChannelFile.loads(ChannelFile(c, "x", (din,)).dumps())
    assert back.name == "x" and back.expected_shape == (din,)
    for a, b in zip(c.kraus, back.channel.kraus):
        assert np.array_equal(a, b)


def test_channel_dict_layout():
    d = channel_to_dict(identity(2))
    assert d["dim_in"] == 2 and d["dim_out"] == 2
    assert d["kraus"] == [[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]]


@pytest.mark.parametrize("text, match", [
    ("not json", "invalid JSON"),
    ("[1, 2]", "JSON object"),
    ('{"schema_version": "9", "channel": {}}', "schema_version"),
    ('{"schema_version": "1"}', "missing"),
    ('{"schema_version": "1", "channel": {"dim_in": 2, "dim_out": 2, "kraus": [[[1, 0]]]}}', "shape"),
])
def test_malformed_files_rejected(text, match):
    with pytest.raises(ParseError, match=match):
        ChannelFile.loads(text)


def test_non_cptp_kraus_is_a_parse_error():
    data = channel_to_dict(identity(2))
    data["kraus"][0][0][0] = [2.0, 0.0]
    with pytest.raises(ParseError, match="trace preserving"):
        channel_from_dict(data)


def test_save_and_load(tmp_path):
    p = tmp_path / "d.json"
    save_channel(p, dephasing(3), name="deph", expected_shape=(1, 1, 1))
    cf = load_channel_file(p)
    assert cf.name == "deph" and cf.expected_shape == (1, 1, 1)
    assert channels_equal(load_channel(p), dephasing(3))[0]
    with pytest.raises(ParseError, match="cannot read"):
        load_channel(tmp_path / "missing.json")


def test_fmt_and_report_json():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(float("inf")) == "inf" and fmt(7) == "7"
    out = json.loads(report_json({"a": 1 / 3, "b": [float("inf")], "c": np.float64(2.0)}))
    assert out["a"] == pytest.approx(1 / 3, abs=1e-12)


def test_run_config_precedence():
    env = {"EMUCAP_SEED": "0x10", "EMUCAP_TOL": "1e-7", "EMUCAP_BUDGET": "32"}
    cfg = RunConfig.resolve(env={})
    assert cfg.seed == DEFAULT_SEED and set(cfg.sources.values()) == {"default"}
    cfg = RunConfig.resolve(env=env)
    assert cfg.seed == 16 and cfg.tolerances.eq_tol == 1e-7 and cfg.budget_dim == 32
    assert cfg.sources["seed"] == "env"
    cfg = RunConfig.resolve(seed="5", budget=8, env=env)
    assert cfg.seed == 5 and cfg.budget_dim == 8 and cfg.sources["seed"] == "flag"
    cfg = RunConfig.resolve(tol="rank=1e-10,eq=1e-9,cluster=1e-5", env={})
    t = cfg.tolerances
    assert (t.rank_tol, t.eq_tol, t.cluster_tol) == (1e-10, 1e-9, 1e-5)


@pytest.mark.parametrize("kwargs", [
    {"budget": 0}, {"budget": 257}, {"seed": "-1"}, {"seed": "abc"}, {"delta_max": "0"},
    {"grid": 2}, {"tol": "eq=oops"}, {"tol": "bogus=1"}, {"tol": "2.0"},
])
def test_run_config_rejects(kwargs):
    with pytest.raises(ParseError):
        RunConfig.resolve(env={}, **kwargs)


@pytest.fixture
def files(tmp_path):
    def make(*argv):
        assert cli.main(["fixture", *argv]) == 0
        return argv[-1]
    return {
        "id2": make("identity", "--dim", "2", "-o", str(tmp_path / "id2.json")),
        "deph2": make("dephasing", "--dim", "2", "-o", str(tmp_path / "deph2.json")),
        "deph4": make("dephasing", "--dim", "4", "-o", str(tmp_path / "deph4.json")),
        "g21": make("blocks", "--blocks", "2x1,1x1", "--ambient", "4", "-o", str(tmp_path / "g21.json")),
        "rand": make("random", "--dim", "3", "-o", str(tmp_path / "rand.json")),
        "rep": make("replacer", "--dim", "2", "-o", str(tmp_path / "rep.json")),
    }


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_cli_analyze(files, capsys):
    assert cli.main(["analyze", files["g21"]]) == 0
    out = _json_out(capsys)
    assert out["shape"] == [2, 1] and out["shape_matches"] and out["ambient_dim"] == 4
    assert cli.main(["analyze", files["rep"]]) == 0
    assert _json_out(capsys)["shape"] == [1]


def test_cli_non_idempotent_exit(files, capsys):
    assert cli.main(["analyze", files["rand"]]) == cli.EXIT_NOT_IDEMPOTENT
    assert "residual" in capsys.readouterr().err


def test_cli_capacity(files, capsys, tmp_path):
    curve = tmp_path / "curve.csv"
    assert cli.main(["capacity", files["id2"], files["deph2"], "--curve", str(curve), "--grid", "16"]) == 0
    out = _json_out(capsys)
    # a qubit cannot be carried by a classical bit: the p=∞ ratio is 0
    assert out["value"] == 0 and out["argmin_p"] == "inf"
    lines = curve.read_text().splitlines()
    assert lines[0] == "p,s,log_norm_G,log_norm_F,ratio" and len(lines) == 17
    assert cli.main(["capacity", files["deph4"], files["id2"], "-o", str(tmp_path / "c.json")]) == 0
    out = _json_out(capsys)
    assert out["value"] == pytest.approx(0.5)  # matches the (k, n) = (1, 2) kit
    assert json.loads((tmp_path / "c.json").read_text())["value"] == pytest.approx(0.5)


def test_cli_emulate_and_audit(files, capsys, tmp_path):
    kit_dir = tmp_path / "kit"
    assert cli.main(["emulate", files["id2"], files["g21"], "--out-dir", str(kit_dir)]) == 0
    out = _json_out(capsys)
    assert out["feasible"] and out["residual"] <= 1e-8
    assert (kit_dir / "plan.csv").read_text() == "1\n0\n"
    enc, dec = str(kit_dir / "encoder.json"), str(kit_dir / "decoder.json")
    assert cli.main(["audit", files["id2"], files["g21"], enc, dec, "--samples", "20",
                     "--perturb", "1e-3", "1e-2"]) == 0
    out = _json_out(capsys)
    assert out["passed"] and out["below_threshold"] and len(out["scaling"]) == 2
    assert cli.main(["bound", files["id2"], files["g21"], "--encoder", enc, "--decoder", dec]) == 0
    cert = _json_out(capsys)["certificate"]
    assert abs(cert["gap_p1"]) < 1e-6 and abs(cert["gap_pinf"]) < 1e-6


def test_cli_emulate_infeasible_and_search(files, capsys, tmp_path):
    assert cli.main(["emulate", files["deph4"], files["id2"], "--out-dir", str(tmp_path)]) == cli.EXIT_INFEASIBLE
    assert _json_out(capsys)["feasible"] is False
    # scaling (k, n) together keeps the 4:1 block-count deficit
    code = cli.main(["emulate", files["deph4"], files["id2"], "--search", "2", "--out-dir", str(tmp_path)])
    assert code == cli.EXIT_INFEASIBLE
    capsys.readouterr()
    assert cli.main(["emulate", files["deph4"], files["id2"], "--n", "2", "--out-dir", str(tmp_path)]) == 0
    out = _json_out(capsys)
    assert (out["k"], out["n"]) == (1, 2) and out["residual"] <= 1e-8


def test_cli_budget_exit(files, capsys, tmp_path):
    code = cli.main(["emulate", files["id2"], files["id2"], "--k", "5", "--n", "5", "--budget", "16",
                     "--out-dir", str(tmp_path)])
    assert code == cli.EXIT_BUDGET
    assert "budget" in capsys.readouterr().err.lower()


def test_cli_bound_sweep(files, capsys, tmp_path):
    csv = tmp_path / "gaps.csv"
    assert cli.main(["bound", files["id2"], files["deph2"], "--k", "2", "--sweep", "5", "--csv", str(csv)]) == 0
    out = _json_out(capsys)
    assert out["theoretical_floor"] == pytest.approx(0.75)
    assert out["sweep"]["min_gap_pinf"] >= 0.75 - 1e-6
    assert len(csv.read_text().splitlines()) == 6


def test_cli_bound_needs_both_kit_files(files, capsys):
    assert cli.main(["bound", files["id2"], files["deph2"], "--encoder", files["id2"]]) == cli.EXIT_PARSE


def test_cli_examples(capsys, tmp_path):
    assert cli.main(["examples", "-o", str(tmp_path / "rows.json")]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text and text.count("PASS") >= 12
    rows = json.loads((tmp_path / "rows.json").read_text())
    assert all(r["pass"] for r in rows)


@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["analyze"],
    ["capacity", "a.json", "b.json", "--tol", "nope"],
    ["fixture", "blocks", "-o", "x.json"],
    ["fixture", "blocks", "--blocks", "2y1", "-o", "x.json"],
])
def test_cli_parse_errors(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == cli.EXIT_PARSE


def test_cli_dimension_mismatch_is_parse_error(files, capsys):
    code = cli.main(["audit", files["id2"], files["g21"], files["id2"], files["id2"]])
    assert code == cli.EXIT_PARSE


def test_cli_seed_flag_before_subcommand(files, capsys, monkeypatch):
    monkeypatch.setenv("EMUCAP_SEED", "7")
    assert cli.main(["--seed", "3", "analyze", files["id2"]]) == 0
