"""Experiment orchestration: flat-text run configs, deterministic runs,
level sweeps, and delimited/plot exports.

Config files are one ``key = value`` per line with ``#`` comments. Keys:

    algorithm   gt | pi
    graph       random:<n>,<p>,<seed> | file:<path>
    problem     paper-suite | least-squares
    problem_n / problem_m / problem_ell2 / problem_seed / problem_scale
    levels      quantizer level count (integer >= 1)
    s0          initial scale, or "auto" to take the certified floor
    mu          scale decay in (0, 1)
    beta, delta             (gt gains)  -- exactly one gain set
    xi, phi, sigma          (pi gains)
    iters       round count
    x0          zeros | uniform:<lo>,<hi>,<seed>
    stride      record stride, or "auto" (every round to k=1000, then 10)
    strict      true | false  (abort on saturation)
    lf, nu      optional overrides for the curvature constants
    oracle_interval  lo,hi      oracle_points  integer
    est_box          lo,hi      est_samples    integer     est_seed  integer
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import certify
from .errors import ConfigError
from .graphs import UndirectedGraph, load_graph, random_connected_graph, spectrum
from .problems import (
    ProblemSuite,
    estimate_pl_constant,
    estimate_smoothness,
    global_optimum_oracle,
    make_suite,
)
from .quantization import bits_for_level
from .simulate import (
    GtState,
    PiState,
    gt_init,
    gt_step,
    lambda_components,
    pi_init,
    pi_step,
)

CSV_HEADER = ("k,lambda_norm,consensus_err,tracking_err,opt_gap,"
              "theta_x_inf,theta_u_inf,s_k,bits_cumulative,saturated")

_KNOWN_KEYS = {
    "algorithm", "graph", "problem", "problem_n", "problem_m", "problem_ell2",
    "problem_seed", "problem_scale", "levels", "s0", "mu", "beta", "delta",
    "xi", "phi", "sigma", "iters", "x0", "stride", "strict", "lf", "nu",
    "oracle_interval", "oracle_points", "est_box", "est_samples", "est_seed",
}


@dataclass
class RunConfig:
    algorithm: str
    graph: str
    problem: str
    levels: int
    mu: float
    iters: int
    s0: float | str = "auto"
    beta: float | None = None
    delta: float | None = None
    xi: float | None = None
    phi: float | None = None
    sigma: float | None = None
    x0: str = "uniform:-5,5,1"
    stride: int | str = "auto"
    strict: bool = False
    problem_params: dict = field(default_factory=dict)
    lf: float | None = None
    nu: float | None = None
    oracle_interval: tuple[float, float] = (-20.0, 20.0)
    oracle_points: int = 200_001
    est_box: tuple[float, float] = (-10.0, 10.0)
    est_samples: int = 2000
    est_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("gt", "pi"):
            raise ConfigError(f"algorithm must be gt or pi, got {self.algorithm!r}")
        gt_gains = [self.beta, self.delta]
        pi_gains = [self.xi, self.phi, self.sigma]
        if self.algorithm == "gt":
            if any(v is None for v in gt_gains) or any(v is not None for v in pi_gains):
                raise ConfigError("gt needs beta and delta, and no pi gains")
        else:
            if any(v is None for v in pi_gains) or any(v is not None for v in gt_gains):
                raise ConfigError("pi needs xi, phi, sigma, and no gt gains")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if not (0 < self.mu < 1):
            raise ConfigError("mu must lie in (0, 1)")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if isinstance(self.s0, str) and self.s0 != "auto":
            raise ConfigError(f"s0 must be a number or 'auto', got {self.s0!r}")
        if isinstance(self.s0, float) and self.s0 <= 0:
            raise ConfigError("s0 must be positive")


def parse_config(source) -> RunConfig:
    """Parse a config file path or an already-open text object."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    def fget(key):
        return float(raw[key]) if key in raw else None

    def pair(key, default):
        if key not in raw:
            return default
        lo, hi = (float(v) for v in raw[key].split(","))
        return (lo, hi)

    problem_params = {}
    for pkey, cast in (("problem_n", int), ("problem_m", int),
                       ("problem_ell2", float), ("problem_seed", int),
                       ("problem_scale", float)):
        if pkey in raw:
            problem_params[pkey.removeprefix("problem_")] = cast(raw[pkey])

    for required in ("algorithm", "graph", "problem", "levels", "mu", "iters"):
        if required not in raw:
            raise ConfigError(f"missing required key {required!r}")

    stride: int | str = raw.get("stride", "auto")
    if stride != "auto":
        stride = int(stride)
    s0: float | str = raw.get("s0", "auto")
    if s0 != "auto":
        s0 = float(s0)
    strict = raw.get("strict", "false").lower()
    if strict not in ("true", "false"):
        raise ConfigError(f"strict must be true or false, got {strict!r}")

    return RunConfig(
        algorithm=raw["algorithm"], graph=raw["graph"], problem=raw["problem"],
        levels=int(raw["levels"]), mu=float(raw["mu"]), iters=int(raw["iters"]),
        s0=s0, beta=fget("beta"), delta=fget("delta"), xi=fget("xi"),
        phi=fget("phi"), sigma=fget("sigma"), x0=raw.get("x0", "uniform:-5,5,1"),
        stride=stride, strict=strict == "true", problem_params=problem_params,
        lf=fget("lf"), nu=fget("nu"),
        oracle_interval=pair("oracle_interval", (-20.0, 20.0)),
        oracle_points=int(raw.get("oracle_points", 200_001)),
        est_box=pair("est_box", (-10.0, 10.0)),
        est_samples=int(raw.get("est_samples", 2000)),
        est_seed=int(raw.get("est_seed", 0)),
    )


def config_to_text(config: RunConfig) -> str:
    lines = [f"algorithm = {config.algorithm}", f"graph = {config.graph}",
             f"problem = {config.problem}"]
    for key, val in sorted(config.problem_params.items()):
        lines.append(f"problem_{key} = {val}")
    lines += [f"levels = {config.levels}", f"s0 = {config.s0}",
              f"mu = {config.mu!r}"]
    for gain in ("beta", "delta", "xi", "phi", "sigma"):
        val = getattr(config, gain)
        if val is not None:
            lines.append(f"{gain} = {val!r}")
    lines += [f"iters = {config.iters}", f"x0 = {config.x0}",
              f"stride = {config.stride}",
              f"strict = {'true' if config.strict else 'false'}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Workspace: the materialized graph / problem / start point of a config.

@dataclass
class Workspace:
    graph: UndirectedGraph
    suite: ProblemSuite
    f_star: float
    x0: np.ndarray
    config: RunConfig | None = None
    _spectrum: object = field(default=None, repr=False)
    _lf: float | None = field(default=None, repr=False)
    _nu: float | None = field(default=None, repr=False)

    def spectrum(self):
        if self._spectrum is None:
            self._spectrum = spectrum(self.graph)
        return self._spectrum

    def curvature(self) -> tuple[float, float]:
        """(lf, nu): config overrides, then exact suite constants, then the
        sampling estimators."""
        if self._lf is None:
            cfg = self.config
            if cfg is not None and cfg.lf is not None:
                self._lf = cfg.lf
            elif self.suite.lf is not None:
                self._lf = self.suite.lf
            else:
                self._lf = estimate_smoothness(
                    self.suite, cfg.est_box, cfg.est_samples, cfg.est_seed)
            if cfg is not None and cfg.nu is not None:
                self._nu = cfg.nu
            elif self.suite.nu is not None:
                self._nu = self.suite.nu
            else:
                self._nu = estimate_pl_constant(
                    self.suite, self.f_star, cfg.est_box, cfg.est_samples,
                    cfg.est_seed)
        return self._lf, self._nu


def _build_graph(spec_str: str) -> UndirectedGraph:
    kind, _, rest = spec_str.partition(":")
    if kind == "random":
        try:
            n_s, p_s, seed_s = rest.split(",")
            return random_connected_graph(int(n_s), float(p_s), int(seed_s))
        except ValueError as exc:
            raise ConfigError(f"bad random graph spec {spec_str!r}") from exc
    if kind == "file":
        return load_graph(rest)
    raise ConfigError(f"graph must be random:... or file:..., got {spec_str!r}")


def _build_x0(spec_str: str, n: int, m: int) -> np.ndarray:
    kind, _, rest = spec_str.partition(":")
    if kind == "zeros":
        return np.zeros((n, m))
    if kind == "uniform":
        try:
            lo_s, hi_s, seed_s = rest.split(",")
            rng = np.random.default_rng(int(seed_s))
            return rng.uniform(float(lo_s), float(hi_s), size=(n, m))
        except ValueError as exc:
            raise ConfigError(f"bad x0 spec {spec_str!r}") from exc
    raise ConfigError(f"x0 must be zeros or uniform:lo,hi,seed, got {spec_str!r}")


def build_workspace(config: RunConfig) -> Workspace:
    graph = _build_graph(config.graph)
    params = dict(config.problem_params)
    if config.problem == "paper-suite":
        params.setdefault("n", graph.n)
    elif config.problem == "least-squares":
        params.setdefault("n", graph.n)
        params.setdefault("m", 1)
        params.setdefault("ell2", 1.0)
        params.setdefault("seed", 0)
    suite = make_suite(config.problem, **params)
    if suite.n != graph.n:
        raise ConfigError(f"problem size {suite.n} != graph size {graph.n}")
    f_star, _ = global_optimum_oracle(suite, config.oracle_interval,
                                      config.oracle_points)
    x0 = _build_x0(config.x0, graph.n, suite.m)
    return Workspace(graph=graph, suite=suite, f_star=f_star, x0=x0,
                     config=config)


def certify_config(config: RunConfig, ws: Workspace | None = None):
    """Run the certification engine on a config; returns the certificate.

    Raises ``InfeasibleParameters`` when the parameters fail the chain.
    """
    ws = ws or build_workspace(config)
    lf, nu = ws.curvature()
    spec = ws.spectrum()
    if config.algorithm == "gt":
        return certify.gt_certify(lf, nu, spec, config.beta, config.delta,
                                  config.mu, config.levels)
    return certify.pi_certify(lf, nu, spec, config.xi, config.phi,
                              config.sigma, config.mu, config.levels,
                              ws.graph.n, ws.suite.m)


def resolve_s0(config: RunConfig, ws: Workspace) -> float:
    """Numeric s0, or the certified saturation floor for ``s0 = auto``."""
    if config.s0 != "auto":
        return float(config.s0)
    cert = certify_config(config, ws)
    if config.algorithm == "gt":
        u0 = ws.suite.grad_all(ws.x0)
        lam0 = lambda_components(ws.x0, u0, ws.suite, ws.f_star, "gt")
        floor = certify.gt_s0_floor(cert, ws.suite, ws.x0, u0,
                                    lam0.lambda_norm)
    else:
        u0 = np.zeros_like(ws.x0)
        floor = certify.pi_s0_floor(cert, ws.spectrum(), ws.suite, ws.f_star,
                                    ws.x0, u0)
    return floor if floor > 0 else 1.0


# ---------------------------------------------------------------------------
# Runs and records.

@dataclass
class RunRecord:
    """One recorded round of telemetry (one CSV row)."""

    k: int
    lambda_norm: float
    consensus_err: float
    tracking_err: float | None
    opt_gap: float
    theta_x_inf: float
    theta_u_inf: float | None
    s_k: float
    bits_cumulative: int
    saturated: bool


def _should_record(k: int, stride: int | str, total: int) -> bool:
    if k == 0 or k == total:
        return True
    if stride == "auto":
        return k <= 1000 or k % 10 == 0
    return k % int(stride) == 0


def run(config: RunConfig, ws: Workspace | None = None,
        s0_override: float | None = None) -> list[RunRecord]:
    """Execute one deterministic run and return its recorded telemetry.

    Saturation aborts with ``SaturationDetected`` only in strict mode;
    otherwise it is recorded and the run continues. Divergence always aborts
    with ``NonFiniteState``.
    """
    ws = ws or build_workspace(config)
    s0 = s0_override if s0_override is not None else resolve_s0(config, ws)
    alg = config.algorithm
    if alg == "gt":
        state = gt_init(ws.graph, ws.suite, ws.x0, config.levels, s0,
                        config.mu, config.beta, config.delta,
                        strict=config.strict)
        stepper, vars_per_round = gt_step, 2
    else:
        u0 = np.zeros((ws.graph.n, ws.suite.m))
        state = pi_init(ws.graph, ws.suite, ws.x0, u0, config.levels, s0,
                        config.mu, config.xi, config.phi, config.sigma,
                        strict=config.strict)
        stepper, vars_per_round = pi_step, 1

    bits_per_round = (ws.graph.n * ws.suite.m
                      * bits_for_level(config.levels) * vars_per_round)

    records: list[RunRecord] = []

    def snapshot(k, theta_x, theta_u, saturated, scale):
        met = lambda_components(state.x, state.u, ws.suite, ws.f_star, alg)
        records.append(RunRecord(
            k=k, lambda_norm=met.lambda_norm, consensus_err=met.consensus_err,
            tracking_err=met.tracking_err, opt_gap=met.opt_gap,
            theta_x_inf=theta_x, theta_u_inf=theta_u,
            s_k=scale, bits_cumulative=k * bits_per_round,
            saturated=saturated))

    snapshot(0, 0.0, 0.0 if alg == "gt" else None, False, s0)
    for k in range(1, config.iters + 1):
        state, report = stepper(state)
        if _should_record(k, config.stride, config.iters):
            snapshot(k, report.theta_x_inf, report.theta_u_inf,
                     report.saturated, state.enc_x.scale)
    return records


@dataclass
class SweepLevelResult:
    levels: int
    s0: float
    records: list[RunRecord]
    final_lambda: float
    final_k: int
    iters_to_threshold: int | None
    bits_total: int
    saturated_rounds: int


def sweep_levels(base: RunConfig, level_pairs: list[tuple[int, float | str]],
                 threshold: float = 1e-4) -> list[SweepLevelResult]:
    """Run the base config once per (levels, s0) pair on a shared graph,
    problem, and start point; summarize per-level outcomes."""
    if not level_pairs:
        raise ConfigError("sweep needs at least one levels:s0 pair")
    ws = build_workspace(base)
    out = []
    for levels, s0 in level_pairs:
        cfg = replace(base, levels=levels, s0=s0 if s0 == "auto" else float(s0))
        cfg.problem_params = dict(base.problem_params)
        records = run(cfg, ws=ws)
        hit = next((r.k for r in records if r.k > 0
                    and r.lambda_norm <= threshold), None)
        out.append(SweepLevelResult(
            levels=levels, s0=records[0].s_k, records=records,
            final_lambda=records[-1].lambda_norm, final_k=records[-1].k,
            iters_to_threshold=hit, bits_total=records[-1].bits_cumulative,
            saturated_rounds=sum(1 for r in records if r.saturated)))
    return out


# ---------------------------------------------------------------------------
# Delimited output.

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def export_csv(records: list[RunRecord], path) -> None:
    if not records:
        raise ValueError("no records to export")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(",".join(_fmt(v) for v in (
                r.k, r.lambda_norm, r.consensus_err, r.tracking_err,
                r.opt_gap, r.theta_x_inf, r.theta_u_inf, r.s_k,
                r.bits_cumulative, r.saturated)) + "\n")


def parse_csv(path) -> list[RunRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        out = []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            out.append(RunRecord(
                k=int(cells[0]),
                lambda_norm=float(cells[1]),
                consensus_err=float(cells[2]),
                tracking_err=float(cells[3]) if cells[3] else None,
                opt_gap=float(cells[4]),
                theta_x_inf=float(cells[5]),
                theta_u_inf=float(cells[6]) if cells[6] else None,
                s_k=float(cells[7]),
                bits_cumulative=int(cells[8]),
                saturated=cells[9] == "true",
            ))
    return out


def emit_plot_data(records: list[RunRecord], path) -> None:
    """Two-column (k, lambda_norm) text file for external plotting."""
    if not records:
        raise ValueError("no records to export")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.k} {r.lambda_norm!r}\n")


def fit_tail_slope(records: list[RunRecord], window: float = 0.5,
                   floor: float = 1e-14) -> tuple[float, float]:
    """Least-squares slope and R^2 of log10(lambda_norm) over the last
    ``window`` fraction of recorded rounds, excluding float-noise values."""
    pts = [(r.k, r.lambda_norm) for r in records if r.lambda_norm > floor]
    if len(pts) < 4:
        raise ValueError("too few usable records for a tail fit")
    tail = pts[int(len(pts) * (1.0 - window)):]
    ks = np.array([p[0] for p in tail], dtype=float)
    ys = np.log10([p[1] for p in tail])
    slope, intercept = np.polyfit(ks, ys, 1)
    pred = slope * ks + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(r2)
