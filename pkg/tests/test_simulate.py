import numpy as np
import pytest

import qdopt as q
from qdopt.simulate import gt_init, gt_step, lambda_components, pi_init, pi_step

from conftest import quadratic_suite
from reference_impl import UnweightedTracking


def small_setup(n=5, seed=0, spread=2.0, curvature=1.0):
    g = q.random_connected_graph(n, 0.7, seed=seed)
    rng = np.random.default_rng(seed + 1)
    centers = rng.uniform(-spread, spread, n)
    suite = quadratic_suite(centers, curvature)
    x0 = rng.uniform(-spread, spread, (n, 1))
    return g, suite, x0


# ---------------------------------------------------------------------------
# initialization

def test_gt_init_tracker_equals_gradients():
    g, suite, x0 = small_setup()
    st = gt_init(g, suite, x0, levels=4, s0=3.0, mu=0.9, beta=0.1, delta=0.05)
    assert np.array_equal(st.u, suite.grad_all(x0))
    assert np.allclose(st.u.mean(axis=0), suite.grad_all(x0).mean(axis=0))
    assert np.all(st.est_x.estimate == 0) and np.all(st.est_u.estimate == 0)
    assert st.k == 0


def test_gt_init_at_global_optimum_is_flat():
    g = q.build_graph(2, [(0, 1, 1.0)])
    suite = quadratic_suite([0.0, 0.0])
    st = gt_init(g, suite, np.zeros((2, 1)), levels=2, s0=1.0, mu=0.9,
                 beta=0.1, delta=0.1)
    assert np.all(st.u == 0)
    met = lambda_components(st.x, st.u, suite, suite.f_star, "gt")
    assert met.lambda_norm == 0.0


def test_gt_init_each_agent_at_local_minimizer():
    # two quadratics centered at 0 and 1, agents starting on their centers
    g = q.build_graph(2, [(0, 1, 1.0)])
    suite = quadratic_suite([0.0, 1.0])
    st = gt_init(g, suite, np.array([[0.0], [1.0]]), levels=2, s0=1.0,
                 mu=0.9, beta=0.1, delta=0.1)
    assert np.all(st.u == 0)


def test_gt_init_dimension_mismatch():
    g, suite, _ = small_setup()
    with pytest.raises(q.DimensionMismatch):
        gt_init(g, suite, np.zeros((suite.n, 2)), levels=2, s0=1.0, mu=0.9,
                beta=0.1, delta=0.1)
    with pytest.raises(q.DimensionMismatch):
        gt_init(g, quadratic_suite(np.zeros(3)), np.zeros((3, 1)), levels=2,
                s0=1.0, mu=0.9, beta=0.1, delta=0.1)


@pytest.mark.parametrize("u0,ok", [
    (np.zeros((2, 1)), True),
    (np.array([[3.0], [-3.0]]), True),
    (np.array([[1.0], [1.0]]), False),
])
def test_pi_init_integral_sum(u0, ok):
    g = q.build_graph(2, [(0, 1, 1.0)])
    suite = quadratic_suite([0.0, 1.0])
    x0 = np.zeros((2, 1))
    if ok:
        pi_init(g, suite, x0, u0, levels=2, s0=1.0, mu=0.9, xi=0.1, phi=0.05,
                sigma=0.05)
    else:
        with pytest.raises(q.IntegralSumNonzero):
            pi_init(g, suite, x0, u0, levels=2, s0=1.0, mu=0.9, xi=0.1,
                    phi=0.05, sigma=0.05)


# ---------------------------------------------------------------------------
# fixed points and conservation

def test_gt_fixed_point_zero_start():
    g = q.build_graph(3, [(0, 1, 1.0), (1, 2, 1.0)])
    suite = quadratic_suite(np.zeros(3))
    st = gt_init(g, suite, np.zeros((3, 1)), levels=3, s0=1.0, mu=0.9,
                 beta=0.1, delta=0.1, log_symbols=True)
    for _ in range(10):
        st, rep = gt_step(st)
        assert rep.theta_x_inf == 0.0 and rep.theta_u_inf == 0.0
    assert np.all(st.x == 0) and np.all(st.u == 0)
    for zx, zu in st.symbol_log:
        assert np.all(zx == 0) and np.all(zu == 0)


def test_gt_consensus_stationary_start_keeps_state():
    # all agents on the common optimum, but away from the codec origin:
    # states stay put because every Laplacian term cancels on consensus
    g = q.build_graph(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    suite = quadratic_suite(np.full(3, 1.5))
    x0 = np.full((3, 1), 1.5)
    st = gt_init(g, suite, x0, levels=8, s0=2.0, mu=0.9, beta=0.1, delta=0.1)
    for _ in range(30):
        st, _ = gt_step(st)
        assert np.array_equal(st.x, x0)
        assert np.all(st.u == 0)


def test_gt_mean_recursion_and_tracking():
    g, suite, x0 = small_setup(n=6, seed=3)
    st = gt_init(g, suite, x0, levels=6, s0=4.0, mu=0.97, beta=0.1,
                 delta=0.05)
    for _ in range(300):
        xbar = st.x.mean(axis=0)
        ubar = st.u.mean(axis=0)
        st, _ = gt_step(st)
        pred = xbar - st.delta * ubar
        assert np.linalg.norm(st.x.mean(axis=0) - pred) <= 1e-10 * (
            1 + np.linalg.norm(pred))
        grads = suite.grad_all(st.x)
        drift = np.linalg.norm(st.u.mean(axis=0) - grads.mean(axis=0))
        assert drift <= 1e-9 * (1 + np.linalg.norm(grads))


def test_pi_conservation_and_mean_recursion():
    g, suite, x0 = small_setup(n=6, seed=8)
    rng = np.random.default_rng(2)
    u0 = rng.standard_normal((6, 1))
    u0 -= u0.mean(axis=0)
    st = pi_init(g, suite, x0, u0, levels=6, s0=4.0, mu=0.99, xi=0.08,
                 phi=0.05, sigma=0.02)
    for _ in range(500):
        xbar = st.x.mean(axis=0)
        gbar = suite.grad_all(st.x).mean(axis=0)
        st, _ = pi_step(st)
        assert np.linalg.norm(st.u.sum(axis=0)) <= 1e-10 * (
            1 + np.linalg.norm(st.u))
        pred = xbar - st.sigma * gbar
        assert np.linalg.norm(st.x.mean(axis=0) - pred) <= 1e-10 * (
            1 + np.linalg.norm(pred))


def test_pi_fixed_point():
    g = q.build_graph(3, [(0, 1, 1.0), (1, 2, 1.0)])
    suite = quadratic_suite(np.zeros(3))
    st = pi_init(g, suite, np.zeros((3, 1)), np.zeros((3, 1)), levels=3,
                 s0=1.0, mu=0.9, xi=0.1, phi=0.05, sigma=0.05)
    for _ in range(10):
        st, rep = pi_step(st)
        assert rep.theta_x_inf == 0.0
    assert np.all(st.x == 0) and np.all(st.u == 0)


# ---------------------------------------------------------------------------
# codec coupling and determinism

def test_estimates_track_encoder_state_bitwise():
    g, suite, x0 = small_setup(n=5, seed=4)
    st = gt_init(g, suite, x0, levels=5, s0=3.0, mu=0.95, beta=0.1,
                 delta=0.05)
    for _ in range(100):
        st, _ = gt_step(st)
        assert np.array_equal(st.est_x.estimate, st.enc_x.internal)
        assert np.array_equal(st.est_u.estimate, st.enc_u.internal)


def test_bit_identical_reruns():
    def run_once():
        g, suite, x0 = small_setup(n=7, seed=12)
        st = gt_init(g, suite, x0, levels=4, s0=5.0, mu=0.96, beta=0.08,
                     delta=0.04, log_symbols=True)
        for _ in range(200):
            st, _ = gt_step(st)
        return st

    a, b = run_once(), run_once()
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)
    for (ax, au), (bx, bu) in zip(a.symbol_log, b.symbol_log):
        assert np.array_equal(ax, bx) and np.array_equal(au, bu)


def test_strict_mode_raises_on_saturation():
    g, suite, x0 = small_setup(n=4, seed=5, spread=50.0)
    st = gt_init(g, suite, x0, levels=1, s0=1e-3, mu=0.9, beta=0.1,
                 delta=0.05, strict=True)
    with pytest.raises(q.SaturationDetected):
        for _ in range(5):
            st, _ = gt_step(st)


def test_saturation_recorded_in_default_mode():
    g, suite, x0 = small_setup(n=4, seed=5, spread=50.0)
    st = gt_init(g, suite, x0, levels=1, s0=1e-3, mu=0.9, beta=0.1,
                 delta=0.05)
    st, rep = gt_step(st)
    assert rep.saturated and rep.theta_x_inf > rep.limit


def test_divergence_guard():
    g, suite, x0 = small_setup(n=4, seed=6, curvature=5.0)
    st = gt_init(g, suite, x0, levels=2, s0=1.0, mu=0.9, beta=0.4,
                 delta=3.0)  # far beyond the stable region
    with pytest.raises(q.NonFiniteState):
        for _ in range(2000):
            st, _ = gt_step(st)


# ---------------------------------------------------------------------------
# residual metrics

def test_lambda_components_hand_example():
    suite = quadratic_suite([1.0, 1.0])
    met = lambda_components(np.array([[0.0], [2.0]]), np.zeros((2, 1)),
                            suite, 0.0, "gt")
    assert met.consensus_err == pytest.approx(2.0)
    assert met.tracking_err == 0.0
    assert met.opt_gap == pytest.approx(0.0)
    assert met.lambda_norm >= max(met.consensus_err, met.opt_gap)


def test_lambda_components_zero_at_consensus_optimum():
    suite = quadratic_suite([0.5, 0.5, 0.5])
    x = np.full((3, 1), 0.5)
    met = lambda_components(x, np.zeros((3, 1)), suite, suite.f_star, "gt")
    assert met.lambda_norm == 0.0


def test_lambda_metric_on_states():
    g, suite, x0 = small_setup(n=4, seed=9)
    st = gt_init(g, suite, x0, levels=4, s0=3.0, mu=0.95, beta=0.1,
                 delta=0.05)
    met = q.lambda_metric(st, suite.f_star)
    assert met.tracking_err is not None
    u0 = np.zeros((4, 1))
    st2 = pi_init(g, suite, x0, u0, levels=4, s0=3.0, mu=0.95, xi=0.1,
                  phi=0.05, sigma=0.02)
    met2 = q.lambda_metric(st2, suite.f_star)
    assert met2.tracking_err is None
    assert met2.lambda_norm == pytest.approx(met2.consensus_err
                                             + met2.opt_gap)


def test_sender_stream_replays_bit_exact(tmp_path):
    from qdopt.quantization import read_stream, write_stream

    g, suite, x0 = small_setup(n=5, seed=14)
    st = gt_init(g, suite, x0, levels=4, s0=4.0, mu=0.95, beta=0.1,
                 delta=0.04, log_symbols=True)
    for _ in range(60):
        st, _ = gt_step(st)
    for sender in (0, 3):
        msgs = q.sender_stream(st, sender, "u")
        path = tmp_path / f"u{sender}.bin"
        write_stream(path, msgs)
        dec = q.Decoder(1, s0=4.0, mu=0.95)
        for msg in read_stream(path, 1, 4):
            dec.decode(msg)
        assert np.array_equal(dec.estimate, st.est_u.estimate[sender])


# ---------------------------------------------------------------------------
# unit-weight equivalence against the independent reference

def test_unit_weight_matches_reference_bit_for_bit():
    g = q.random_connected_graph(6, 0.5, seed=21)
    rng = np.random.default_rng(3)
    centers = rng.uniform(-2, 2, 6)
    curvature = 1.25
    suite = quadratic_suite(centers, curvature)
    x0 = rng.uniform(-3, 3, (6, 1))
    levels, s0, mu, beta, delta = 3, 4.0, 0.97, 0.08, 0.03

    st = gt_init(g, suite, x0, levels, s0, mu, beta, delta, log_symbols=True)

    grads = [
        (lambda x, ci=ci: [curvature * (x[0] - ci)]) for ci in centers
    ]
    ref = UnweightedTracking(g.weights.astype(int).tolist(), grads,
                             x0.tolist(), dim=1, levels=levels, s0=s0,
                             mu=mu, beta=beta, delta=delta)

    for step in range(100):
        st, _ = gt_step(st)
        ref.step()
        assert st.x.ravel().tolist() == [row[0] for row in ref.x], step
        assert st.u.ravel().tolist() == [row[0] for row in ref.u], step
        zx, zu = st.symbol_log[-1]
        for i in range(6):
            rx, ru = ref.symbols[-1][i]
            assert zx[i].tolist() == rx and zu[i].tolist() == ru
