"""Command-line interface.

Subcommands:

    run           execute one configured run, write the CSV (and a figure)
    sweep         rerun one config across quantizer levels, compare
    certify       evaluate the parameter certificate for a config
    verify-lemmas sample parameter space and check the analysis inequalities
    oracle        print the global optimum of a problem suite

Exit codes: 0 success, 2 infeasible parameters, 3 saturation in strict mode,
4 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import certify as cert_mod
from . import harness, plotting
from .errors import (
    ConfigError,
    InfeasibleParameters,
    NonFiniteState,
    QdoptError,
    SaturationDetected,
)
from .graphs import random_connected_graph, spectrum
from .problems import global_optimum_oracle, make_suite

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SATURATED = 3
EXIT_DIVERGED = 4


def _parse_levels(text: str) -> list[tuple[int, float | str]]:
    pairs = []
    for item in text.split(","):
        if ":" not in item:
            raise ConfigError(f"levels entry {item!r} must be K:s0")
        k_s, s0_s = item.split(":", 1)
        s0: float | str = "auto" if s0_s == "auto" else float(s0_s)
        pairs.append((int(k_s), s0))
    return pairs


def _plot_path(arg, out_path: Path) -> Path | None:
    if arg is None:
        return None
    if arg == "":
        return out_path.with_suffix(".png")
    return Path(arg)


def _cmd_run(args) -> int:
    config = harness.parse_config(args.config)
    ws = harness.build_workspace(config)
    records = harness.run(config, ws=ws)
    out = Path(args.out)
    harness.export_csv(records, out)
    print(f"wrote {out} ({len(records)} records, final lambda_norm = "
          f"{records[-1].lambda_norm:.6e})")
    if args.plot_data:
        harness.emit_plot_data(records, args.plot_data)
        print(f"wrote {args.plot_data}")
    fig_path = _plot_path(args.plot, out)
    if fig_path is not None:
        plotting.save_convergence_figure(
            [plotting.records_curve(records, f"levels={config.levels}")],
            fig_path, title=f"{config.algorithm} run")
        print(f"wrote {fig_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = harness.parse_config(args.config)
    pairs = _parse_levels(args.levels)
    results = harness.sweep_levels(config, pairs, threshold=args.threshold)
    prefix = Path(args.out_prefix)
    curves = []
    summary_lines = ["levels,s0,final_k,final_lambda,iters_to_threshold,"
                     "bits_total,saturated_rounds"]
    for res in results:
        path = prefix.with_name(f"{prefix.name}_K{res.levels}.csv")
        harness.export_csv(res.records, path)
        print(f"wrote {path}")
        curves.append(plotting.records_curve(res.records,
                                             f"levels={res.levels}"))
        summary_lines.append(
            f"{res.levels},{res.s0!r},{res.final_k},{res.final_lambda!r},"
            f"{'' if res.iters_to_threshold is None else res.iters_to_threshold},"
            f"{res.bits_total},{res.saturated_rounds}")
    summary_path = prefix.with_name(f"{prefix.name}_summary.csv")
    summary_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    print(f"wrote {summary_path}")
    fig_path = _plot_path(args.plot, prefix.with_suffix(".csv"))
    if fig_path is not None:
        plotting.save_convergence_figure(curves, fig_path,
                                         title=f"{config.algorithm} sweep")
        print(f"wrote {fig_path}")
    return EXIT_OK


def _cmd_certify(args) -> int:
    config = harness.parse_config(args.config)
    if args.algorithm != config.algorithm:
        raise ConfigError(f"--algorithm {args.algorithm} does not match "
                          f"config algorithm {config.algorithm}")
    ws = harness.build_workspace(config)
    try:
        certificate = harness.certify_config(config, ws)
    except InfeasibleParameters as exc:
        if args.json:
            print(json.dumps({"feasible": False, "violations": [
                {"name": n, "lhs": l, "rhs": r} for n, l, r in exc.violations]}))
        else:
            print("INFEASIBLE")
            for name, lhs, rhs in exc.violations:
                print(f"violated: {name}  (lhs = {lhs!r}, rhs = {rhs!r})")
        return EXIT_INFEASIBLE
    flat = certificate.as_flat()
    if config.algorithm == "gt":
        u0 = ws.suite.grad_all(ws.x0)
        lam0 = harness.lambda_components(ws.x0, u0, ws.suite, ws.f_star, "gt")
        flat["s0_floor"] = cert_mod.gt_s0_floor(certificate, ws.suite, ws.x0,
                                                u0, lam0.lambda_norm)
    else:
        flat["s0_floor"] = cert_mod.pi_s0_floor(
            certificate, ws.spectrum(), ws.suite, ws.f_star, ws.x0,
            np.zeros_like(ws.x0))
    if config.s0 != "auto":
        flat["s0"] = float(config.s0)
        flat["envelope_coeff"] = certificate.envelope_coeff(float(config.s0))
    if args.json:
        print(json.dumps({"feasible": True, "certificate": flat}))
    else:
        for name, value in flat.items():
            print(f"{name} = {value!r}")
    return EXIT_OK


def _cmd_verify_lemmas(args) -> int:
    report = verify_lemmas(args.samples, args.seed, k_max=args.k_max)
    for name, value in report.items():
        print(f"{name} = {value}")
    ok = (report["lmi_failures"] == 0 and report["perron_failures"] == 0
          and report["power_bound_worst"] <= 1.0 + 1e-10)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else 1


def _cmd_oracle(args) -> int:
    params = {}
    if args.n is not None:
        params["n"] = args.n
    if args.problem == "least-squares":
        params.setdefault("n", 100)
        params.setdefault("m", args.m)
        params.setdefault("ell2", args.ell2)
        params.setdefault("seed", args.seed)
    suite = make_suite(args.problem, **params)
    lo, hi = (float(v) for v in args.interval.split(","))
    f_star, x_hint = global_optimum_oracle(suite, (lo, hi), args.points)
    print(f"f_star = {f_star!r}")
    print(f"x_hint = {np.asarray(x_hint).ravel().tolist()}")
    return EXIT_OK


def verify_lemmas(samples: int, seed: int, n_graphs: int = 20,
                  k_max: int = 200) -> dict:
    """Sample (graph, lf, nu, beta, delta) sets and check the contraction
    inequalities: the componentwise linear matrix inequality, strict
    positivity of the squared shifted gain matrix and its eigenvector, the
    spectral-radius margin, and the matrix power bound up to ``k_max``."""
    rng = np.random.default_rng(seed)
    specs = []
    while len(specs) < n_graphs:
        n = int(rng.integers(3, 31))
        p = float(rng.uniform(0.15, 0.9))
        g_seed = int(rng.integers(0, 2 ** 31))
        try:
            specs.append(spectrum(random_connected_graph(n, p, g_seed)))
        except QdoptError:
            continue

    lmi_failures = 0
    perron_failures = 0
    radius_failures = 0
    power_worst = 0.0
    for idx in range(samples):
        spec = specs[idx % n_graphs]
        lf = 10.0 ** rng.uniform(-1, 1)
        nu = lf * 10.0 ** rng.uniform(-3, 0)
        beta_max = np.sqrt(2.0) / (2.0 * spec.rho)
        beta = beta_max * 10.0 ** rng.uniform(-4, 0) * 0.9999
        dmax = cert_mod._gt_delta_max(lf, nu, spec, beta, 0.5)
        delta = dmax * 10.0 ** rng.uniform(-4, 0) * 0.9999
        try:
            chain = cert_mod._gt_chain(lf, nu, spec, beta, delta, 0.5)
        except InfeasibleParameters:
            lmi_failures += 1
            continue
        gain, vec = chain["gain_matrix"], chain["lmi_vector"]
        slack = (1.0 - chain["iota"]) * vec - gain @ vec
        if slack.min() < -1e-12:
            lmi_failures += 1
        shifted = np.linalg.matrix_power(np.eye(3) + gain, 2)
        if not np.all(shifted > 0) or not np.all(chain["perron"] > 0):
            perron_failures += 1
        if chain["gain_rho"] > 1.0 - chain["iota"] + 1e-12:
            radius_failures += 1
        power_worst = max(power_worst, cert_mod.matrix_power_bound(
            gain, chain["power_coeff"], chain["gain_rho"], k_max))
    return {
        "samples": samples,
        "graphs": n_graphs,
        "k_max": k_max,
        "lmi_failures": lmi_failures,
        "perron_failures": perron_failures + radius_failures,
        "power_bound_worst": power_worst,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdopt",
        description="Quantized distributed optimization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default="results.csv")
    p_run.add_argument("--plot", nargs="?", const="", default=None,
                       help="render the residual figure (optional path)")
    p_run.add_argument("--plot-data", default=None,
                       help="also write two-column (k, residual) text")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="compare quantizer levels")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--levels", required=True,
                         help="comma list of K:s0 pairs, e.g. 1:10.198,10:1.4569")
    p_sweep.add_argument("--out-prefix", default="sweep")
    p_sweep.add_argument("--threshold", type=float, default=1e-4)
    p_sweep.add_argument("--plot", nargs="?", const="", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cert = sub.add_parser("certify", help="evaluate a parameter certificate")
    p_cert.add_argument("--algorithm", choices=("gt", "pi"), required=True)
    p_cert.add_argument("--config", required=True)
    p_cert.add_argument("--json", action="store_true")
    p_cert.set_defaults(func=_cmd_certify)

    p_ver = sub.add_parser("verify-lemmas",
                           help="sample and check the analysis inequalities")
    p_ver.add_argument("--samples", type=int, default=500)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--k-max", type=int, default=200)
    p_ver.set_defaults(func=_cmd_verify_lemmas)

    p_orc = sub.add_parser("oracle", help="print a suite's global optimum")
    p_orc.add_argument("--problem", required=True)
    p_orc.add_argument("--n", type=int, default=None)
    p_orc.add_argument("--m", type=int, default=1)
    p_orc.add_argument("--ell2", type=float, default=1.0)
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.add_argument("--interval", default="-20,20")
    p_orc.add_argument("--points", type=int, default=200_001)
    p_orc.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleParameters as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SaturationDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SATURATED
    except NonFiniteState as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except QdoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
