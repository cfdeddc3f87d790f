import io

import numpy as np
import pytest

import qdopt as q
from qdopt import harness
from qdopt.harness import (
    CSV_HEADER,
    RunConfig,
    Workspace,
    build_workspace,
    emit_plot_data,
    export_csv,
    fit_tail_slope,
    parse_config,
    parse_csv,
    resolve_s0,
    run,
    sweep_levels,
)

from conftest import quadratic_suite

GT_CONFIG = """
# gradient tracking, small and fast
algorithm = gt
graph = random:10,0.5,3
problem = paper-suite
levels = 10
s0 = 2.0
mu = 0.995
beta = 0.02
delta = 0.02
iters = 200
x0 = uniform:-5,5,1
stride = auto
strict = false
"""

PI_CONFIG = """
algorithm = pi
graph = random:10,0.5,3
problem = paper-suite
levels = 10
s0 = 2.0
mu = 0.995
xi = 0.02
phi = 0.01
sigma = 0.005
iters = 150
x0 = uniform:-5,5,1
"""


def cfg(text) -> RunConfig:
    return parse_config(io.StringIO(text))


def quadratic_workspace(config, n=4, centers=None):
    g = q.random_connected_graph(n, 0.8, seed=5)
    suite = quadratic_suite(np.zeros(n) if centers is None else centers)
    return Workspace(graph=g, suite=suite, f_star=suite.f_star,
                     x0=np.zeros((n, 1)), config=config)


def test_parse_config_roundtrip():
    config = cfg(GT_CONFIG)
    assert config.algorithm == "gt" and config.levels == 10
    assert config.beta == 0.02 and config.xi is None
    text = harness.config_to_text(config)
    again = parse_config(io.StringIO(text))
    assert again == config


@pytest.mark.parametrize("mutation,complaint", [
    ("levels = 10", "duplicate"),                 # appended duplicate key
    ("bogus = 3", "unknown"),
    ("xi = 0.1", "no pi gains"),
])
def test_parse_config_rejects(mutation, complaint):
    with pytest.raises(q.ConfigError, match=complaint):
        cfg(GT_CONFIG + mutation + "\n")


def test_parse_config_missing_required():
    with pytest.raises(q.ConfigError, match="missing required"):
        cfg("algorithm = gt\ngraph = random:4,0.5,1\n")


def test_gain_set_must_match_algorithm():
    with pytest.raises(q.ConfigError):
        RunConfig(algorithm="pi", graph="random:4,0.5,1",
                  problem="paper-suite", levels=2, mu=0.9, iters=10,
                  beta=0.1, delta=0.1)


def test_fixed_point_run_records_zero_everywhere():
    config = cfg(GT_CONFIG.replace("random:10,0.5,3", "random:4,0.8,5"))
    ws = quadratic_workspace(config)
    records = run(config, ws=ws, s0_override=2.0)
    assert all(r.lambda_norm == 0.0 for r in records)
    assert all(not r.saturated for r in records)


def test_run_is_byte_deterministic(tmp_path):
    config = cfg(GT_CONFIG)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    export_csv(run(config), pa)
    export_csv(run(config), pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_csv_schema_and_roundtrip(tmp_path):
    config = cfg(PI_CONFIG)
    records = run(config)
    path = tmp_path / "out.csv"
    export_csv(records[:3], path)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 4
    # tracking and tracker-channel columns stay empty on pi runs
    for line in lines[1:]:
        cells = line.split(",")
        assert cells[3] == "" and cells[6] == ""
    back = parse_csv(path)
    assert back == records[:3]


def test_csv_roundtrip_gt(tmp_path):
    records = run(cfg(GT_CONFIG))
    path = tmp_path / "out.csv"
    export_csv(records, path)
    assert parse_csv(path) == records


def test_plot_data_two_columns(tmp_path):
    records = run(cfg(PI_CONFIG))
    path = tmp_path / "plot.dat"
    emit_plot_data(records, path)
    first = path.read_text().splitlines()[0].split()
    assert len(first) == 2 and first[0] == "0"


def test_record_schedule_and_scale_column():
    config = cfg(GT_CONFIG.replace("iters = 200", "iters = 1300"))
    records = run(config)
    ks = [r.k for r in records]
    assert ks[0] == 0 and ks[-1] == 1300
    assert 1001 not in ks and 1010 in ks  # stride switches to 10 after 1000
    for r in records:
        assert r.s_k == pytest.approx(2.0 * config.mu ** r.k, rel=1e-12)
    bits = [r.bits_cumulative for r in records]
    assert all(b2 >= b1 for b1, b2 in zip(bits, bits[1:]))


def test_bits_accounting():
    config = cfg(GT_CONFIG)
    records = run(config)
    per_round = 10 * 1 * q.bits_for_level(config.levels) * 2  # n*m*bits*vars
    for r in records:
        assert r.bits_cumulative == r.k * per_round
    config_pi = cfg(PI_CONFIG)
    per_round_pi = 10 * 1 * q.bits_for_level(config_pi.levels) * 1
    for r in run(config_pi):
        assert r.bits_cumulative == r.k * per_round_pi


def test_sweep_shares_start_and_orders_levels():
    base = cfg(GT_CONFIG.replace("iters = 200", "iters = 400"))
    results = sweep_levels(base, [(1, 8.0), (10, 2.0), (100, 0.2)])
    assert [r.levels for r in results] == [1, 10, 100]
    # same k=0 residual for every level: shared graph, problem, start point
    first = {r.records[0].lambda_norm for r in results}
    assert len(first) == 1
    finals = {r.levels: r.final_lambda for r in results}
    assert finals[100] <= finals[10] <= finals[1]


def test_sweep_single_level_degenerates_to_run():
    base = cfg(GT_CONFIG)
    res = sweep_levels(base, [(10, 2.0)])
    assert len(res) == 1
    direct = run(base)
    assert res[0].records == direct


def test_auto_s0_uses_certified_floor():
    # derive a certifiable parameter set, then hand it to the harness
    suite = q.least_squares_suite(4, 1, ell2=1.0, seed=1, scale=0.3)
    spec = q.spectrum(__import__("qdopt").random_connected_graph(4, 0.9, 2))
    beta = 0.25 * np.sqrt(2) / (2 * spec.rho)
    from qdopt.certify import _gt_chain, _gt_delta_max

    delta = 0.5 * _gt_delta_max(suite.lf, suite.nu, spec, beta, 0.5)
    chain = _gt_chain(suite.lf, suite.nu, spec, beta, delta, 0.5)
    mu = float(np.sqrt(chain["rate"] + 0.5 * (1 - chain["rate"])))
    probe = q.gt_certify(suite.lf, suite.nu, spec, beta, delta, mu, 10 ** 9)
    levels = int(np.ceil(probe.levels_min)) + 1

    config = RunConfig(
        algorithm="gt", graph="random:4,0.9,2", problem="least-squares",
        levels=levels, mu=mu, iters=50, s0="auto", beta=beta, delta=delta,
        x0="uniform:-1,1,3",
        problem_params={"m": 1, "ell2": 1.0, "seed": 1, "scale": 0.3})
    ws = build_workspace(config)
    s0 = resolve_s0(config, ws)
    cert = harness.certify_config(config, ws)
    u0 = ws.suite.grad_all(ws.x0)
    lam0 = q.lambda_components(ws.x0, u0, ws.suite, ws.f_star, "gt")
    assert s0 == q.gt_s0_floor(cert, ws.suite, ws.x0, u0, lam0.lambda_norm)
    assert s0 > 0
    records = run(config, ws=ws)
    assert not any(r.saturated for r in records)


def test_workspace_curvature_prefers_overrides():
    config = cfg(GT_CONFIG + "lf = 9.0\nnu = 0.25\n")
    ws = build_workspace(config)
    assert ws.curvature() == (9.0, 0.25)


def test_fit_tail_slope_on_synthetic_decay():
    class R:
        def __init__(self, k, lam):
            self.k = k
            self.lambda_norm = lam

    records = [R(k, 10.0 * 0.99 ** k) for k in range(0, 500, 5)]
    slope, r2 = fit_tail_slope(records)
    assert slope == pytest.approx(np.log10(0.99), rel=1e-6)
    assert r2 > 0.999999
