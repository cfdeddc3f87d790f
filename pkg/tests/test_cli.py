import json

import numpy as np
import pytest

import qdopt as q
from qdopt.cli import main

GT_SMALL = """
algorithm = gt
graph = random:10,0.5,3
problem = paper-suite
levels = 10
s0 = 2.0
mu = 0.995
beta = 0.02
delta = 0.02
iters = 150
x0 = uniform:-5,5,1
"""


@pytest.fixture()
def gt_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(GT_SMALL)
    return path


def test_run_writes_csv_and_figure(tmp_path, gt_config, capsys):
    out = tmp_path / "results.csv"
    code = main(["run", "--config", str(gt_config), "--out", str(out),
                 "--plot", "--plot-data", str(tmp_path / "plot.dat")])
    assert code == 0
    assert out.exists()
    assert (tmp_path / "results.png").exists()
    assert (tmp_path / "plot.dat").exists()
    assert "final lambda_norm" in capsys.readouterr().out


def test_sweep_writes_per_level_outputs(tmp_path, gt_config):
    prefix = tmp_path / "sweep"
    code = main(["sweep", "--config", str(gt_config),
                 "--levels", "1:8.0,10:2.0", "--out-prefix", str(prefix),
                 "--plot"])
    assert code == 0
    assert (tmp_path / "sweep_K1.csv").exists()
    assert (tmp_path / "sweep_K10.csv").exists()
    summary = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert summary[0].startswith("levels,s0,final_k")
    assert len(summary) == 3
    assert (tmp_path / "sweep.png").exists()


def test_certify_infeasible_exit_code(tmp_path, gt_config, capsys):
    code = main(["certify", "--algorithm", "gt", "--config", str(gt_config)])
    assert code == 2
    out = capsys.readouterr().out
    assert "INFEASIBLE" in out and "violated:" in out


def test_certify_feasible_json(tmp_path, capsys):
    # borrow the derived-feasible recipe from the harness tests
    suite = q.least_squares_suite(4, 1, ell2=1.0, seed=1, scale=0.3)
    spec = q.spectrum(q.random_connected_graph(4, 0.9, 2))
    from qdopt.certify import _gt_chain, _gt_delta_max

    beta = float(0.25 * np.sqrt(2) / (2 * spec.rho))
    delta = float(0.5 * _gt_delta_max(suite.lf, suite.nu, spec, beta, 0.5))
    chain = _gt_chain(suite.lf, suite.nu, spec, beta, delta, 0.5)
    mu = float(np.sqrt(chain["rate"] + 0.5 * (1 - chain["rate"])))
    probe = q.gt_certify(suite.lf, suite.nu, spec, beta, delta, mu, 10 ** 9)
    cfg = tmp_path / "feasible.cfg"
    cfg.write_text(
        "algorithm = gt\ngraph = random:4,0.9,2\nproblem = least-squares\n"
        "problem_m = 1\nproblem_ell2 = 1.0\nproblem_seed = 1\n"
        f"problem_scale = 0.3\nlevels = {int(np.ceil(probe.levels_min)) + 1}\n"
        f"s0 = 5.0\nmu = {mu!r}\nbeta = {beta!r}\ndelta = {delta!r}\n"
        "iters = 10\nx0 = uniform:-1,1,3\n")
    code = main(["certify", "--algorithm", "gt", "--config", str(cfg),
                 "--json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["feasible"]
    assert payload["certificate"]["envelope_coeff"] > 0


def test_certify_flat_report(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(GT_SMALL)
    main(["certify", "--algorithm", "gt", "--config", str(cfg)])
    capsys.readouterr()


def test_run_strict_saturation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "sat.cfg"
    cfg.write_text(GT_SMALL.replace("s0 = 2.0", "s0 = 0.001")
                   .replace("strict = false", "")
                   + "strict = true\n")
    code = main(["run", "--config", str(cfg), "--out",
                 str(tmp_path / "o.csv")])
    assert code == 3


def test_run_divergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "div.cfg"
    cfg.write_text(GT_SMALL.replace("beta = 0.02", "beta = 0.02")
                   .replace("delta = 0.02", "delta = 9.0"))
    code = main(["run", "--config", str(cfg), "--out",
                 str(tmp_path / "o.csv")])
    assert code == 4


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "broken.cfg"
    cfg.write_text("algorithm = gt\n")
    code = main(["run", "--config", str(cfg), "--out",
                 str(tmp_path / "o.csv")])
    assert code == 1


def test_oracle_command(capsys):
    code = main(["oracle", "--problem", "paper-suite", "--n", "100"])
    assert code == 0
    out = capsys.readouterr().out
    assert "f_star = " in out
    value = float(out.splitlines()[0].split("=")[1])
    assert abs(value) <= 1e-10


def test_verify_lemmas_command(capsys):
    code = main(["verify-lemmas", "--samples", "40", "--seed", "5",
                 "--k-max", "50"])
    assert code == 0
    out = capsys.readouterr().out
    assert "lmi_failures = 0" in out and "PASS" in out
