import csv
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from kvnlab.cli import main
from kvnlab.config import build_config
from kvnlab.errors import ConfigError
from kvnlab.io import emit_plot_data, read_projection_csv, read_sequence_csv, write_projection_csv, write_sequence_csv
from kvnlab.runner import run_experiment
from kvnlab.scalars import EXACT, FLOAT
from kvnlab.sequences import ProjectionSequence, VectorSequence

FOUR_CYCLE = {"weights": ["1/4"] * 4, "blocks": [[0, 1, 2, 3]], "sigma": [1, 2, 3, 0]}
HALF = [[0, "1/2"]]


def write_config(tmp_path: Path, data: dict, name: str = "config.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def run_cli(tmp_path, data, *flags):
    cfg = write_config(tmp_path, data)
    code = main(["run", str(cfg), "--out", str(tmp_path / "out"), *flags])
    report = None
    if code == 0:
        kind = data["kind"]
        report = json.loads((tmp_path / "out" / f"{kind}-report.json").read_text())
    return code, report


def read_plot(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "value"]
    return np.array([[float(a), float(b)] for a, b in rows[1:]])


def test_counterexample_p2_report(tmp_path, capsys):
    code, report = run_cli(tmp_path, {"kind": "counterexample", "params": {"p": 2, "horizon": 10 ** 6}})
    assert code == 0
    assert float(report["results"]["cesaro_tail"]) == pytest.approx(0.4995, abs=1e-12)
    assert report["config"]["params"]["horizon"] == 10 ** 6
    assert "counterexample-report.json" in capsys.readouterr().out


def test_classical_doubling_verdict(tmp_path, capsys):
    data = {"kind": "classical", "map": {"kind": "doubling"}, "A": HALF, "B": HALF, "params": {"horizon": 200}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["backend"] == "exact"
    assert report["results"]["verdict"] == "weak-mixing property: holds"
    assert "weak-mixing property: holds" in capsys.readouterr().out


def test_classical_golden_rotation_is_result_not_error(tmp_path):
    data = {"kind": "classical", "map": {"kind": "rotation", "alpha": "golden"}, "A": HALF, "B": HALF,
            "params": {"horizon": 5000}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["results"]["verdict"] == "weak-mixing property: fails"


def test_golden_alpha_rejected_in_exact_backend(tmp_path, capsys):
    data = {"kind": "classical", "backend": "exact", "map": {"kind": "rotation", "alpha": "golden"},
            "A": HALF, "B": HALF}
    code, _ = run_cli(tmp_path, data)
    assert code == 2
    assert "$.map.alpha" in capsys.readouterr().err


def test_ceps_four_cycle_and_ee_skip(tmp_path):
    data = {"kind": "ceps", "system": FOUR_CYCLE, "params": {"horizon": 300, "tolerance": 0.02},
            "ee_check": {"random_pairs": 3}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["results"]["verdict"] == "not weakly mixing"
    assert "skipped" in report["results"]["ee_check"]


def test_ceps_identity_on_atoms_runs_ee_check(tmp_path):
    system = {"weights": ["1/3", "2/3"], "blocks": [[0], [1]], "sigma": [0, 1]}
    data = {"kind": "ceps", "backend": "exact", "system": system, "params": {"horizon": 100},
            "ee_check": {"random_pairs": 4, "f": [1, 2]}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["results"]["verdict"] == "weakly mixing"
    assert report["results"]["ee_check"]["passed"]
    assert len(report["results"]["ee_check"]["checks"]) == 5


def test_invalid_ceps_system_exit_3(tmp_path, capsys):
    data = {"kind": "ceps", "system": {"weights": [0.5, 0.5], "blocks": [[0, 1]], "sigma": [0, 0]}}
    code, _ = run_cli(tmp_path, data)
    assert code == 3
    assert "precondition" in capsys.readouterr().err


def test_kvn_with_csv_dump(tmp_path):
    data = {"kind": "kvn", "backend": "exact",
            "input": {"generator": {"name": "spikes", "exponents": [1.6], "values": [1]}},
            "params": {"horizon": 400, "tolerance": 0.2}, "output": {"csv_dump": True}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    res = report["results"]
    assert res["audit"]["passed"]
    assert len(res["Q_masks"]) == 400
    assert res["density"]["verdict"] == "converges_to_zero"
    assert sorted(report["csv_dumps"]) == ["kvn-report-Q.csv", "kvn-report-density.csv", "kvn-report-residual.csv"]
    Q = read_projection_csv(tmp_path / "out" / "kvn-report-Q.csv")
    assert ["".join("1" if b else "0" for b in row) for row in Q.masks] == res["Q_masks"]
    dens = read_sequence_csv(tmp_path / "out" / "kvn-report-density.csv", expected_backend=EXACT)
    assert dens.horizon == 400


def test_kvn_from_csv_input(tmp_path):
    rows = [[Fraction(1, k + 1)] for k in range(60)]
    write_sequence_csv(VectorSequence.from_array(rows, EXACT), tmp_path / "seq.csv")
    data = {"kind": "kvn", "backend": "exact", "input": {"csv": "seq.csv"}, "params": {"level_cap": 8}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["results"]["horizon"] == 60
    assert report["config"]["params"]["horizon"] == 60


def test_cesaro_and_verify_forward(tmp_path):
    data = {"kind": "cesaro", "input": {"generator": {"name": "harmonic", "unit": [1, 2]}}, "params": {"horizon": 500}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["results"]["cesaro"]["verdict"] == "converges_to_zero"

    data = {"kind": "verify-forward",
            "input": {"generator": {"name": "spikes", "exponents": [1.5], "values": [1]}},
            "projections": {"generator": {"name": "spikes", "exponents": [1.5]}},
            "bound": [1], "params": {"horizon": 20000, "tolerance": 0.1}}
    code, report = run_cli(tmp_path, data)
    assert code == 0
    assert report["results"]["cesaro"]["verdict"] == "converges_to_zero"


def test_missing_csv_names_path(tmp_path, capsys):
    code, _ = run_cli(tmp_path, {"kind": "kvn", "input": {"csv": "nowhere.csv"}})
    assert code == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_schema_error_names_field(tmp_path, capsys):
    code, _ = run_cli(tmp_path, {"kind": "kvn", "input": {"csv": "x.csv"}, "params": {"horizon": -3}})
    assert code == 2
    assert "$.params.horizon" in capsys.readouterr().err
    code, _ = run_cli(tmp_path, {"kind": "nonsense"})
    assert code == 2


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.json")]) == 2
    assert "absent.json" in capsys.readouterr().err


def test_csv_parse_error_reports_line(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("dim=1,backend=float\n0,1\n1,abc\n")
    code, _ = run_cli(tmp_path, {"kind": "cesaro", "input": {"csv": "bad.csv"}})
    assert code == 2
    err = capsys.readouterr().err
    assert "bad.csv" in err and ":3" in err


def test_backend_mismatch(tmp_path, capsys):
    write_sequence_csv(VectorSequence.from_array([[0.5], [0.25]]), tmp_path / "f.csv")
    code, _ = run_cli(tmp_path, {"kind": "cesaro", "backend": "exact", "input": {"csv": "f.csv"}})
    assert code == 2


def test_horizon_beyond_csv_is_config_error(tmp_path):
    write_sequence_csv(VectorSequence.from_array([[0.5], [0.25]]), tmp_path / "f.csv")
    code, _ = run_cli(tmp_path, {"kind": "cesaro", "input": {"csv": "f.csv"}}, "--horizon", "10")
    assert code == 2


def test_flag_overrides(tmp_path):
    data = {"kind": "counterexample", "params": {"p": 3, "horizon": 1000, "tolerance": 0.5}}
    code, report = run_cli(tmp_path, data, "--horizon", "2000", "--tol", "0.25")
    assert code == 0
    assert report["config"]["params"]["horizon"] == 2000
    assert report["config"]["params"]["tolerance"] == 0.25
    assert report["results"]["horizon"] == 2000
    with pytest.raises(SystemExit):
        main(["run", "x.json", "--tol", "-1"])


def test_exact_reruns_are_byte_identical(tmp_path):
    data = {"kind": "ceps", "backend": "exact", "system": FOUR_CYCLE,
            "pairs": [[[1, 1, 0, 0], [1, 1, 0, 0]], [[1, 0, 0, 0], [0, 1, 1, 0]]], "params": {"horizon": 200}}
    cfg = write_config(tmp_path, data)
    out = str(tmp_path / "o")
    assert main(["run", str(cfg), "--out", out]) == 0
    first = (tmp_path / "o" / "ceps-report.json").read_bytes()
    assert main(["run", str(cfg), "--out", out]) == 0
    assert (tmp_path / "o" / "ceps-report.json").read_bytes() == first


def test_emit_plot_zero_trajectory(tmp_path):
    data = {"kind": "cesaro", "input": {"generator": {"name": "zero", "dim": 2}}, "params": {"horizon": 300}}
    code, _ = run_cli(tmp_path, data)
    assert code == 0
    report = tmp_path / "out" / "cesaro-report.json"
    assert main(["emit-plot", str(report), str(tmp_path / "z.csv"), "--trajectory", "cesaro"]) == 0
    col = read_plot(tmp_path / "z.csv")
    assert len(col) > 0 and np.all(col[:, 1] == 0)
    assert col[-1, 0] == 299


def test_emit_plot_one_file_per_trajectory(tmp_path):
    report = {"trajectories": {"a": {"horizon": 2, "indices": [0, 1], "values": ["1/2", "0"]},
                               "b": {"horizon": 1, "indices": [0], "values": ["3"]}}}
    files = emit_plot_data(report, tmp_path / "p.csv")
    assert [f.name for f in files] == ["p-a.csv", "p-b.csv"]
    assert read_plot(files[0]).tolist() == [[0, 0.5], [1, 0]]


def test_emit_plot_errors(tmp_path, capsys):
    with pytest.raises(ConfigError):
        emit_plot_data({"trajectories": {"a": {"horizon": 0, "indices": [], "values": []}}}, tmp_path / "e.csv")
    with pytest.raises(ConfigError):
        emit_plot_data({"trajectories": {}}, tmp_path / "e.csv")
    with pytest.raises(ConfigError):
        emit_plot_data({"trajectories": {"a": {"indices": [0], "values": ["1"]}}}, tmp_path / "e.csv", "b")
    assert main(["emit-plot", str(tmp_path / "none.json"), str(tmp_path / "e.csv")]) == 2
    assert "none.json" in capsys.readouterr().err


def test_emit_plot_counterexample_p2_approaches_half(tmp_path):
    code, _ = run_cli(tmp_path, {"kind": "counterexample", "params": {"p": 2, "horizon": 10 ** 5}})
    assert code == 0
    report = tmp_path / "out" / "counterexample-report.json"
    assert main(["emit-plot", str(report), str(tmp_path / "g.csv"), "--trajectory", "cesaro"]) == 0
    col = read_plot(tmp_path / "g.csv")
    tail = col[col[:, 0] >= 1000, 1]
    assert np.all(np.abs(tail - 0.5) <= 0.03)
    assert abs(col[-1, 1] - 0.5) <= 0.005


def test_emit_plot_rotation_mean_near_eighth(tmp_path):
    data = {"kind": "classical", "map": {"kind": "rotation", "alpha": "golden"}, "A": HALF, "B": HALF,
            "params": {"horizon": 20000}}
    code, _ = run_cli(tmp_path, data)
    assert code == 0
    report = json.loads((tmp_path / "out" / "classical-report.json").read_text())
    files = emit_plot_data(report, tmp_path / "r.csv")
    by_name = {f.name: read_plot(f) for f in files}
    means = by_name["r-cesaro.csv"]
    assert abs(means[-1, 1] - 0.125) <= 0.005
    terms = by_name["r-correlation.csv"]
    assert np.all((terms[:, 1] >= 0) & (terms[:, 1] <= 0.25))


def test_csv_round_trips(tmp_path):
    exact = VectorSequence.from_array([[Fraction(1, 3), 2], [0, Fraction(-5, 7)]], EXACT)
    write_sequence_csv(exact, tmp_path / "e.csv")
    back = read_sequence_csv(tmp_path / "e.csv", expected_backend=EXACT)
    assert np.all(back.array == exact.array)
    flt = VectorSequence.from_array(np.random.default_rng(0).random((20, 3)), FLOAT)
    write_sequence_csv(flt, tmp_path / "f.csv")
    assert np.array_equal(read_sequence_csv(tmp_path / "f.csv").array, flt.array)
    masks = ProjectionSequence.from_masks(np.array([[1, 0], [0, 0], [1, 1]], dtype=bool))
    write_projection_csv(masks, tmp_path / "m.csv")
    assert np.array_equal(read_projection_csv(tmp_path / "m.csv").masks, masks.masks)


def test_build_config_defaults(tmp_path):
    cfg = build_config({"kind": "classical", "map": {"kind": "doubling"}, "A": HALF, "B": HALF}, tmp_path)
    assert cfg.backend == EXACT
    assert cfg.report_path == tmp_path / "classical-report.json"
    cfg = build_config({"kind": "counterexample", "params": {"p": 2}}, tmp_path, horizon=50)
    assert cfg.backend == FLOAT and cfg.params["horizon"] == 50
    report, files = run_experiment(cfg)
    assert files == [tmp_path / "counterexample-report.json"]
    assert report["config"]["params"]["horizon"] == 50
