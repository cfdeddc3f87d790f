"""Synchronized-round state machines for the two quantized algorithms.

Round structure is compute-then-communicate: the update at round k uses the
estimates decoded at the end of round k-1 (zeros at k=0), then every agent
broadcasts its fresh state once and all receivers decode the same symbol
stream. The saturation monitor is exact: it reports the largest quantizer
input of the round, which is the quantity the nonsaturation analysis bounds
by levels + 1/2.

Agent i's own row of the estimate matrix is its codec state, not its true
state; the Laplacian is applied to the full estimate matrix, so the diagonal
term multiplies the codec state as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IntegralSumNonzero,
    NonFiniteState,
    SaturationDetected,
)
from .graphs import UndirectedGraph
from .problems import ProblemSuite
from .quantization import DecoderBank, EncoderBank, UniformQuantizer

_STATE_CAP = 1e12


@dataclass
class SaturationReport:
    """Per-round saturation telemetry.

    ``theta_x_inf`` is the max-magnitude quantizer input on the state
    channel; ``theta_u_inf`` the same for the tracker channel (None for the
    proportional-integral algorithm, which transmits only states).
    """

    theta_x_inf: float
    theta_u_inf: float | None
    limit: float
    saturated: bool

    @property
    def theta_inf(self) -> float:
        if self.theta_u_inf is None:
            return self.theta_x_inf
        return max(self.theta_x_inf, self.theta_u_inf)


def _check_finite(label: str, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)) or np.abs(arr).max() > _STATE_CAP:
            raise NonFiniteState(f"{label} left the finite range; "
                                 "parameters are outside the stable region")


@dataclass
class GtState:
    """Full network state of the quantized gradient-tracking algorithm."""

    graph: UndirectedGraph
    problem: ProblemSuite
    x: np.ndarray
    u: np.ndarray
    prev_grad: np.ndarray
    enc_x: EncoderBank
    enc_u: EncoderBank
    est_x: DecoderBank
    est_u: DecoderBank
    quantizer: UniformQuantizer
    beta: float
    delta: float
    s0: float
    mu: float
    k: int = 0
    strict: bool = False
    symbol_log: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.problem.m


def _validate_shapes(graph: UndirectedGraph, problem: ProblemSuite,
                     x0: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (graph.n, problem.m):
        raise DimensionMismatch(
            f"x0 shape {x0.shape} != (n={graph.n}, m={problem.m})")
    if problem.n != graph.n:
        raise DimensionMismatch(
            f"problem has {problem.n} costs for {graph.n} agents")
    return x0


def gt_init(graph: UndirectedGraph, problem: ProblemSuite, x0: np.ndarray,
            levels: int, s0: float, mu: float, beta: float, delta: float,
            strict: bool = False, log_symbols: bool = False) -> GtState:
    """Start the gradient-tracking run: trackers at the local gradients,
    all codec states and estimates at zero."""
    x0 = _validate_shapes(graph, problem, x0)
    u0 = problem.grad_all(x0)
    quant = UniformQuantizer(levels)
    n, m = graph.n, problem.m
    return GtState(
        graph=graph, problem=problem, x=x0.copy(), u=u0.copy(),
        prev_grad=u0.copy(),
        enc_x=EncoderBank(n, m, quant, s0, mu),
        enc_u=EncoderBank(n, m, quant, s0, mu),
        est_x=DecoderBank(n, m, s0, mu),
        est_u=DecoderBank(n, m, s0, mu),
        quantizer=quant, beta=beta, delta=delta, s0=s0, mu=mu,
        strict=strict, symbol_log=[] if log_symbols else None)


def gt_step(state: GtState) -> tuple[GtState, SaturationReport]:
    """Advance one synchronized round; mutates and returns the state."""
    g = state.graph
    lap_x = g.laplacian_action(state.est_x.estimate)
    lap_u = g.laplacian_action(state.est_u.estimate)
    x_new = state.x - state.beta * lap_x - state.delta * state.u
    g_new = state.problem.grad_all(x_new)
    u_new = state.u - state.beta * lap_u + g_new - state.prev_grad
    _check_finite("tracking state", x_new, u_new)

    z_x, peak_x = state.enc_x.encode(x_new)
    z_u, peak_u = state.enc_u.encode(u_new)
    state.est_x.decode(z_x)
    state.est_u.decode(z_u)
    if state.symbol_log is not None:
        state.symbol_log.append((z_x, z_u))

    state.x, state.u, state.prev_grad = x_new, u_new, g_new
    state.k += 1

    limit = state.quantizer.levels + 0.5
    report = SaturationReport(
        theta_x_inf=peak_x, theta_u_inf=peak_u, limit=limit,
        saturated=max(peak_x, peak_u) > limit)
    if state.strict and report.saturated:
        raise SaturationDetected(
            f"round {state.k}: quantizer input {report.theta_inf:.6g} "
            f"exceeds {limit}")
    return state, report


@dataclass
class PiState:
    """Full network state of the quantized proportional-integral algorithm."""

    graph: UndirectedGraph
    problem: ProblemSuite
    x: np.ndarray
    u: np.ndarray
    enc_x: EncoderBank
    est_x: DecoderBank
    quantizer: UniformQuantizer
    xi: float
    phi: float
    sigma: float
    s0: float
    mu: float
    k: int = 0
    strict: bool = False
    symbol_log: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.problem.m


def pi_init(graph: UndirectedGraph, problem: ProblemSuite, x0: np.ndarray,
            u0: np.ndarray, levels: int, s0: float, mu: float, xi: float,
            phi: float, sigma: float, strict: bool = False,
            log_symbols: bool = False) -> PiState:
    """Start the proportional-integral run; the integral states must sum to
    zero across the network."""
    x0 = _validate_shapes(graph, problem, x0)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != x0.shape:
        raise DimensionMismatch(f"u0 shape {u0.shape} != x0 shape {x0.shape}")
    if np.linalg.norm(u0.sum(axis=0)) > 1e-12:
        raise IntegralSumNonzero(
            f"sum of integral states has norm {np.linalg.norm(u0.sum(axis=0)):.3e}")
    quant = UniformQuantizer(levels)
    return PiState(
        graph=graph, problem=problem, x=x0.copy(), u=u0.copy(),
        enc_x=EncoderBank(graph.n, problem.m, quant, s0, mu),
        est_x=DecoderBank(graph.n, problem.m, s0, mu),
        quantizer=quant, xi=xi, phi=phi, sigma=sigma, s0=s0, mu=mu,
        strict=strict, symbol_log=[] if log_symbols else None)


def pi_step(state: PiState) -> tuple[PiState, SaturationReport]:
    """Advance one synchronized round; mutates and returns the state."""
    lap = state.graph.laplacian_action(state.est_x.estimate)
    grad = state.problem.grad_all(state.x)
    x_new = state.x - state.xi * lap - state.phi * state.u - state.sigma * grad
    u_new = state.u + state.phi * lap
    _check_finite("proportional-integral state", x_new, u_new)

    z, peak = state.enc_x.encode(x_new)
    state.est_x.decode(z)
    if state.symbol_log is not None:
        state.symbol_log.append(z)

    state.x, state.u = x_new, u_new
    state.k += 1

    limit = state.quantizer.levels + 0.5
    report = SaturationReport(theta_x_inf=peak, theta_u_inf=None,
                              limit=limit, saturated=peak > limit)
    if state.strict and report.saturated:
        raise SaturationDetected(
            f"round {state.k}: quantizer input {peak:.6g} exceeds {limit}")
    return state, report


# ---------------------------------------------------------------------------
# Residual metrics.

@dataclass
class LambdaMetrics:
    """Residual components at one state.

    For gradient tracking, ``lambda_norm`` is the Euclidean norm of
    (consensus_err, tracking_err, opt_gap); for the proportional-integral
    algorithm it is consensus_err + opt_gap, the quantity its convergence
    bound controls (tracking_err is None there).
    """

    lambda_norm: float
    consensus_err: float
    tracking_err: float | None
    opt_gap: float


def lambda_components(x: np.ndarray, u: np.ndarray | None,
                      problem: ProblemSuite, f_star: float,
                      algorithm: str = "gt") -> LambdaMetrics:
    xbar = x.mean(axis=0)
    dev = x - xbar
    consensus = float(np.sum(dev * dev))
    gap = x.shape[0] * (problem.mean_value(xbar) - f_star)
    if algorithm == "gt":
        ubar = u.mean(axis=0)
        du = u - ubar
        tracking = float(np.sum(du * du))
        lam = float(np.sqrt(consensus ** 2 + tracking ** 2 + gap ** 2))
        return LambdaMetrics(lam, consensus, tracking, gap)
    if algorithm == "pi":
        return LambdaMetrics(consensus + gap, consensus, None, gap)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def lambda_metric(state: GtState | PiState, f_star: float) -> LambdaMetrics:
    """Residual metrics of a live state; ``f_star`` comes from the problem
    oracle."""
    if isinstance(state, GtState):
        return lambda_components(state.x, state.u, state.problem, f_star, "gt")
    return lambda_components(state.x, None, state.problem, f_star, "pi")


def sender_stream(state: GtState | PiState, sender: int,
                  variable: str = "x") -> list:
    """One sender's logged broadcast as wire-format messages.

    Requires the state to have been initialized with ``log_symbols=True``.
    Feeding the result to a fresh :class:`~qdopt.quantization.Decoder` (or
    writing it with :func:`~qdopt.quantization.write_stream` and replaying
    the file) reproduces the receiver estimate bit-for-bit.
    """
    from .quantization import QuantizedMessage, bits_for_level

    if state.symbol_log is None:
        raise ValueError("run was not started with log_symbols=True")
    levels = state.quantizer.levels
    bits = state.m * bits_for_level(levels)
    out = []
    for step, entry in enumerate(state.symbol_log, start=1):
        if isinstance(entry, tuple):
            symbols = entry[0 if variable == "x" else 1][sender]
        else:
            if variable != "x":
                raise ValueError("this algorithm only transmits states")
            symbols = entry[sender]
        peak = float(np.abs(symbols).max()) if symbols.size else 0.0
        out.append(QuantizedMessage(symbols=symbols.copy(), bits=bits,
                                    peak=peak, saturated=peak > levels + 0.5,
                                    step=step))
    return out
