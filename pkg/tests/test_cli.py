import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from ciadmit import __version__
from ciadmit.cli import EXIT_FLAG, EXIT_INPUT, EXIT_OK, main
from ciadmit.io import (
    InputError,
    config_hash,
    gnuplot_script,
    load_config,
    load_design,
    load_interval,
    read_design_csv,
)
from ciadmit.intervals import naive_pretest
from ciadmit.numerics import t_quantile

FIX = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def data_rows(text):
    return list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))


class TestIO:
    def test_config(self):
        cfg = load_config(FIX / "textbook.toml")
        assert cfg["a"] == [1.0, 6.0] and cfg["response"] == "y"
        assert load_config(None) == {}

    def test_missing_files(self, tmp_path):
        with pytest.raises(InputError):
            load_config(tmp_path / "nope.toml")
        with pytest.raises(InputError):
            read_design_csv(tmp_path / "nope.csv", "y")
        with pytest.raises(InputError):
            load_interval(tmp_path / "nope.json")

    def test_bad_toml(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("a = [1,\n")
        with pytest.raises(InputError):
            load_config(p)

    def test_design(self):
        X, y, cols = read_design_csv(FIX / "textbook.csv", "y")
        assert cols == ["one", "x"] and X.shape == (8, 2) and y.shape == (8,)
        prob, y2 = load_design(FIX / "textbook.csv", load_config(FIX / "textbook.toml"))
        assert prob.m == 6 and np.array_equal(y, y2)

    def test_design_errors(self, tmp_path):
        with pytest.raises(InputError):
            read_design_csv(FIX / "textbook.csv", "z")
        with pytest.raises(InputError):
            read_design_csv(FIX / "textbook.csv", "y", ["one", "w"])
        p = tmp_path / "d.csv"
        p.write_text("one,y\n1,abc\n")
        with pytest.raises(InputError):
            read_design_csv(p, "y")
        with pytest.raises(InputError):
            load_design(FIX / "textbook.csv", {"response": "y", "a": [1, 0]})

    def test_config_hash_is_order_free(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_gnuplot(self):
        script = gnuplot_script("c.csv", "naive")
        assert "'c.csv' using 1:5" in script and "'c.csv' using 1:3" in script


class TestGeometry:
    def test_textbook_against_dense_inverse(self, capsys):
        code, out, _ = run(capsys, "geometry", "--design", FIX / "textbook.csv", "--config", FIX / "textbook.toml")
        assert code == EXIT_OK
        rep = json.loads(out)
        x = np.arange(1.0, 9.0)
        X = np.column_stack([np.ones(8), x])
        A = np.array([[1.0, 0.0], [6.0, 1.0]])
        V = A.T @ np.linalg.inv(X.T @ X) @ A
        assert rep["v11"] == pytest.approx(V[0, 0], rel=1e-12)
        assert rep["v22"] == pytest.approx(V[1, 1], rel=1e-12)
        assert rep["rho"] == pytest.approx(V[0, 1] / math.sqrt(V[0, 0] * V[1, 1]), rel=1e-12)
        assert rep["m"] == 6 and rep["t_m"] == pytest.approx(t_quantile(6, 0.05))
        assert rep["provenance"]["version"] == __version__

    def test_orthogonal(self, capsys):
        code, out, _ = run(capsys, "geometry", "--design", FIX / "orthogonal.csv", "--config", FIX / "orthogonal.toml")
        assert code == EXIT_OK and json.loads(out)["rho"] == 0.0

    def test_collinear(self, capsys):
        code, _, err = run(capsys, "geometry", "--design", FIX / "collinear.csv", "--config", FIX / "collinear.toml")
        assert code == EXIT_INPUT and "rank" in err

    def test_missing_design(self, capsys, tmp_path):
        code, _, err = run(capsys, "geometry", "--design", tmp_path / "x.csv", "--config", FIX / "textbook.toml")
        assert code == EXIT_INPUT and "not found" in err


class TestInterval:
    def test_usual_endpoints(self, capsys):
        code, out, _ = run(capsys, "interval", "--design", FIX / "textbook.csv", "--config", FIX / "textbook.toml")
        rep = json.loads(out)
        half = t_quantile(6, 0.05) * math.sqrt(1 / 8 + 1.5**2 / 42) * rep["sigma_hat"]
        assert code == EXIT_OK
        assert rep["lower"] == pytest.approx(rep["theta_hat"] - half, rel=1e-12)
        assert rep["upper"] == pytest.approx(rep["theta_hat"] + half, rel=1e-12)

    def test_naive_shorter(self, capsys):
        args = ["interval", "--design", FIX / "textbook.csv", "--config", FIX / "textbook.toml"]
        usual = json.loads(run(capsys, *args)[1])
        naive = json.loads(run(capsys, *args, "--interval", "naive")[1])
        x = naive["tau_hat"] / (naive["sigma_hat"] * math.sqrt(1 / 42))
        if abs(x) >= t_quantile(6, 0.05):
            # pretest rejects: the usual interval is reported
            assert naive["lower"] == usual["lower"] and naive["upper"] == usual["upper"]
        else:
            assert naive["length"] < usual["length"]

    def test_naive_after_accepted_pretest(self, capsys):
        args = ["interval", "--design", FIX / "orthogonal.csv", "--config", FIX / "orthogonal.toml"]
        usual = json.loads(run(capsys, *args)[1])
        naive = json.loads(run(capsys, *args, "--interval", "naive")[1])
        x = naive["tau_hat"] / (naive["sigma_hat"] * math.sqrt(1 / 12))
        assert abs(x) < t_quantile(10, 0.05)
        # orthogonal design: rho = 0, so only the width changes
        assert naive["length"] == pytest.approx(usual["length"])
        assert naive["lower"] == pytest.approx(usual["lower"])


class TestCurve:
    def test_usual_constant(self, capsys, tmp_path):
        out = tmp_path / "c.csv"
        code, _, _ = run(capsys, "curve", "--rho", 0.5, "--m", 5, "--grid-limit", 3, "--grid-step", 1, "--out", out)
        assert code == EXIT_OK
        text = out.read_text()
        assert text.startswith(f"# ciadmit {__version__}\n# config_hash ")
        rows = data_rows(text)
        assert len(rows) == 7
        for r in rows:
            assert float(r["e"]) == pytest.approx(1.0, abs=1e-11)
            assert float(r["coverage"]) == pytest.approx(0.95, abs=1e-10)

    def test_naive_dips_then_recovers(self, capsys, tmp_path):
        gp = tmp_path / "c.gp"
        code, out, _ = run(
            capsys, "curve", "--interval", "naive", "--rho", 0.7, "--m", 5, "--grid-limit", 8, "--grid-step", 1,
            "--gnuplot", gp,
        )
        e = np.array([float(r["e"]) for r in data_rows(out)])
        assert code == EXIT_OK and e[8] < 0.75 and e.max() < 1.0 and e[0] > 0.99
        assert gp.exists()

    def test_interval_from_json(self, capsys, tmp_path):
        p = tmp_path / "i.json"
        p.write_text(naive_pretest(1.0, 0.3, 5, 0.05).to_json())
        code, out, _ = run(capsys, "curve", "--interval", p, "--rho", 0.3, "--m", 5, "--grid-limit", 1, "--grid-step", 1)
        assert code == EXIT_OK and len(data_rows(out)) == 3

    def test_malformed_interval(self, capsys):
        code, _, err = run(capsys, "curve", "--interval", FIX / "bad_interval.json", "--rho", 0.7, "--m", 5)
        assert code == EXIT_INPUT
        assert "s must be strictly positive" in err

    def test_unparseable_interval(self, capsys, tmp_path):
        p = tmp_path / "i.json"
        p.write_text("{oops")
        code, _, err = run(capsys, "curve", "--interval", p, "--rho", 0.7, "--m", 5)
        assert code == EXIT_INPUT and "invalid JSON" in err

    @pytest.mark.parametrize("flags", [["--rho", 1.0, "--m", 5], ["--rho", 0.5, "--m", 2.5], ["--rho", 0.5], ["--rho", 0.5, "--m", 5, "--alpha", 0]])
    def test_parameter_domains(self, capsys, flags):
        code, _, err = run(capsys, "curve", *flags)
        assert code == EXIT_INPUT and err.startswith("error:")

    def test_config_supplies_and_flags_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('rho = 0.5\nm = 5\nalpha = 0.1\n[quadrature]\nnodes = 24\n')
        code, out, _ = run(capsys, "curve", "--config", cfg, "--grid-limit", 0, "--interval", "naive")
        base = float(data_rows(out)[0]["coverage"])
        code2, out2, _ = run(capsys, "curve", "--config", cfg, "--grid-limit", 0, "--interval", "naive", "--alpha", 0.05)
        assert code == code2 == EXIT_OK
        assert float(data_rows(out2)[0]["coverage"]) != base


class TestLambdaStar:
    def test_report(self, capsys):
        code, out, _ = run(capsys, "lambda-star", "--m", 5, "--alpha", 0.05)
        rep = json.loads(out)
        assert code == EXIT_OK
        assert rep["lambda_star"] == pytest.approx(0.09285986799543072, rel=1e-10)
        assert 0 < rep["ell_lambda_star"] < rep["ell_upper_bound"]

    @pytest.mark.parametrize("m, alpha", [(5, 0.05), (1, 0.01)])
    def test_verify_success(self, capsys, m, alpha):
        code, out, _ = run(capsys, "verify-minimizer", "--m", m, "--alpha", alpha, "--rho", 0.4)
        rep = json.loads(out)
        assert code == EXIT_OK and rep["success"]
        assert abs(rep["s_residual"]) < 1e-6 and abs(rep["b_opt"]) < 1e-6

    def test_other_lambda_is_reported_not_error(self, capsys):
        code, out, _ = run(capsys, "verify-minimizer", "--m", 5, "--rho", 0.4, "--lambda", 0.3)
        rep = json.loads(out)
        assert code == EXIT_OK and not rep["matches_usual_interval"]
        assert rep["s_opt"] == pytest.approx(1.6463260251451004, rel=1e-10)

    def test_degenerate_lambda(self, capsys):
        code, out, _ = run(capsys, "verify-minimizer", "--m", 5, "--rho", 0.4, "--lambda", 0.95)
        assert code == EXIT_OK and json.loads(out)["degenerate"]

    def test_infinite_m(self, capsys):
        code, out, _ = run(capsys, "verify-minimizer", "--m", "inf", "--rho", 0.0)
        assert code == EXIT_OK and json.loads(out)["t_m"] == pytest.approx(1.959963984540054)


class TestDominance:
    def test_small_run(self, capsys, tmp_path):
        out, summ = tmp_path / "d.jsonl", tmp_path / "s.csv"
        code, _, err = run(
            capsys, "dominance", "--n", 3, "--seed", 42, "--rho", 0.7, "--m", 5, "--grid-limit", 6, "--grid-step", 0.5,
            "--out", out, "--summary", summ,
        )
        assert code == EXIT_OK
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert [r["seed"] for r in records] == [[42, 0], [42, 1], [42, 2]]
        assert "# seed 42" in summ.read_text()
        assert json.loads(err)["n_dominators"] == 0

    def test_flag_exit(self, capsys, monkeypatch):
        import ciadmit.cli as cli

        class Fake:
            n_dominators = 1

            def to_jsonl(self):
                return ""

            def summary(self):
                return {"n_dominators": 1}

        monkeypatch.setattr(cli, "dominance_search", lambda *a, **k: Fake())
        code, _, _ = run(capsys, "dominance", "--n", 1, "--rho", 0.7, "--m", 5)
        assert code == EXIT_FLAG


class TestSimulate:
    def test_agreement(self, capsys):
        code, out, _ = run(
            capsys, "simulate", "--interval", "naive", "--rho", 0.7, "--m", 5, "--gamma", "0,1.5", "--reps", 50000,
            "--seed", 9,
        )
        rows = data_rows(out)
        assert code == EXIT_OK and [r["seed"] for r in rows] == ["9", "10"]
        assert all(r["agree"] == "1" for r in rows)
        assert "# seed 9" in out


class TestKnownVariance:
    def test_usual(self, capsys):
        code, out, _ = run(capsys, "known-variance", "--alpha", 0.05, "--grid-limit", 4, "--grid-step", 1)
        rep = json.loads(out)
        assert code == EXIT_OK
        assert rep["usual_half_width"] == pytest.approx(1.959964, abs=1e-6)
        assert rep["usual_length"] == pytest.approx(2 * 1.959963984540054)
        assert rep["min_e"] == pytest.approx(1.0) and rep["max_e"] == pytest.approx(1.0)
        assert rep["min_coverage"] == pytest.approx(0.95, abs=1e-12)

    def test_naive_curve(self, capsys, tmp_path):
        p = tmp_path / "kv.csv"
        code, out, _ = run(
            capsys, "known-variance", "--interval", "naive", "--rho", 0.7, "--grid-limit", 2, "--grid-step", 1,
            "--curve-out", p,
        )
        assert code == EXIT_OK and json.loads(out)["min_coverage"] < 0.95
        assert len(data_rows(p.read_text())) == 5


def test_length_compare(capsys):
    code, out, _ = run(capsys, "length-compare", "--interval", "naive", "--rho", 0.7, "--m", 5)
    assert code == EXIT_OK and json.loads(out) == {"never_longer": True, "strictly_shorter_somewhere": True}


def test_requires_command(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
