"""Parameter certification for both algorithms.

Certificates evaluate every constant of the convergence analysis from the
problem constants (smoothness ``lf``, gradient-dominance ``nu``) and the
graph spectrum, then test the full feasibility chain. A rejection names the
first violated inequality with both numeric sides.

Free constants that the analysis only constrains to open intervals are
pinned with small multiplicative margins (configurable keyword arguments) so
certificates are deterministic and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import EigensolverFailure, FeasibilityNotFound, InfeasibleParameters
from .graphs import LaplacianSpectrum, mixing_radius
from .problems import ProblemSuite


def perron_root(mat: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000
                ) -> tuple[float, np.ndarray]:
    """Spectral radius and positive eigenvector of a nonnegative irreducible
    matrix by power iteration with operator squaring.

    Squaring the (normalized) operator between steps applies powers 2^j of
    the matrix, so the dominant direction separates in logarithmically many
    steps even when the subdominant eigenvalue is close. Every candidate
    vector is validated on the original matrix through the Collatz-Wielandt
    sandwich ``min_i (Av)_i/v_i <= rho(A) <= max_i (Av)_i/v_i``; convergence
    means the sandwich is relatively tighter than ``tol``.
    """
    a = np.asarray(mat, dtype=float)
    powered = a / a.max()
    v = np.full(a.shape[0], 1.0 / a.shape[0])
    best = None
    for _ in range(min(max_iter, 200)):
        w = a @ v
        ratios = w / v
        hi = float(ratios.max())
        lo = float(ratios.min())
        if best is None or hi - lo < best[1] - best[0]:
            best = (lo, hi, v.copy())
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi), v / v.sum()
        v = powered @ v
        v = v / v.sum()
        powered = powered @ powered
        powered = powered / powered.max()
    lo, hi, v = best
    if hi - lo <= 1e-9 * hi:
        # sandwich stalled at the float-precision plateau; midpoint is still
        # a rigorous enclosure of the true radius
        return 0.5 * (lo + hi), v / v.sum()
    raise EigensolverFailure(
        f"power iteration did not reach tol={tol} "
        f"(sandwich [{lo:.17g}, {hi:.17g}])")


def matrix_power_bound(gain_matrix: np.ndarray, power_coeff: float,
                       gain_rho: float, k_max: int) -> float:
    """Worst ratio of ||M^k|| against power_coeff * gain_rho^k for k <= k_max."""
    m = np.asarray(gain_matrix, dtype=float)
    mk = np.eye(m.shape[0])
    geom = 1.0
    worst = np.linalg.norm(mk, 2) / (power_coeff * geom)
    for _ in range(k_max):
        mk = mk @ m
        geom = geom * gain_rho
        worst = max(worst, np.linalg.norm(mk, 2) / (power_coeff * geom))
    return float(worst)


class _Violations:
    """Collects (name, lhs, rhs) triples; raises grouped by stage."""

    def __init__(self):
        self.items: list[tuple[str, float, float]] = []

    def require(self, ok: bool, name: str, lhs: float, rhs: float) -> None:
        if not ok:
            self.items.append((name, float(lhs), float(rhs)))

    def raise_if_any(self) -> None:
        if self.items:
            raise InfeasibleParameters(self.items)


# ---------------------------------------------------------------------------
# Gradient-tracking certificates.

@dataclass
class GtCertificate:
    """Every derived constant of the gradient-tracking feasibility chain.

    ``lmi_vector`` is the positive comparison vector of the linear matrix
    inequality ``gain_matrix @ lmi_vector <= (1 - iota) * lmi_vector``;
    ``perron`` the positive eigenvector of ``gain_matrix`` at ``gain_rho``;
    ``power_coeff`` the constant h with ``||gain_matrix^k|| <= h * gain_rho^k``.
    ``levels_min_x`` / ``levels_min_u`` are the quantizer-level thresholds for
    the state and tracker channels; the run is certified when ``levels``
    reaches their max. ``envelope_base * s0**2`` multiplies ``mu**(2k)`` in
    the convergence envelope.
    """

    # problem and graph inputs
    lf: float
    nu: float
    n: int
    rho: float
    rho_min: float
    degree_max: float
    # algorithm parameters
    beta: float
    delta: float
    mu: float
    levels: int
    # contraction chain
    rho_mix: float
    sigma1: float
    c1: float
    c2: float
    c3: float
    c4: float
    iota: float
    rate: float                 # 1 - iota, the per-step contraction factor
    lmi_vector: np.ndarray      # shape (3,)
    gain_matrix: np.ndarray     # shape (3, 3)
    gain_rho: float
    perron: np.ndarray          # shape (3,)
    power_coeff: float
    # saturation chain
    sigma2: float
    sigma3: float
    sigma4: float
    sigma5: float
    sigma6: float
    sigma7: float
    sigma8: float
    envelope_base: float
    levels_min_x: float
    levels_min_u: float
    levels_min: float

    def envelope_coeff(self, s0: float) -> float:
        """Coefficient of mu**(2k) in the convergence bound for a given s0."""
        return self.envelope_base * s0 * s0

    def as_flat(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name in ("lf", "nu", "n", "rho", "rho_min", "degree_max",
                     "beta", "delta", "mu", "levels",
                     "rho_mix", "sigma1", "c1", "c2", "c3", "c4",
                     "iota", "rate"):
            out[name] = getattr(self, name)
        for i, val in enumerate(self.lmi_vector):
            out[f"lmi_vector_{i}"] = float(val)
        for i in range(3):
            for j in range(3):
                out[f"gain_matrix_{i}{j}"] = float(self.gain_matrix[i, j])
        out["gain_rho"] = self.gain_rho
        for i, val in enumerate(self.perron):
            out[f"perron_{i}"] = float(val)
        for name in ("power_coeff", "sigma2", "sigma3", "sigma4", "sigma5",
                     "sigma6", "sigma7", "sigma8", "envelope_base",
                     "levels_min_x", "levels_min_u", "levels_min"):
            out[name] = getattr(self, name)
        return out


def _gt_delta_max(lf: float, nu: float, spec: LaplacianSpectrum, beta: float,
                  c3_fraction: float) -> float:
    """Upper bound of the admissible step-size interval for one beta."""
    rho_mix = mixing_radius(spec, beta)
    gap = 1.0 - rho_mix * rho_mix
    c3 = c3_fraction * gap
    c4 = 1.0 / (16.0 * lf * lf)
    c2 = min(1.0 / 6.0, c4 * nu) / (lf * lf)
    c1 = (gap - c3) * gap / (1.0 + rho_mix * rho_mix)
    return min(c1 * np.sqrt(c2) / 4.0, 1.0 / (4.0 * lf), 2.0 / nu,
               1.0 / (8.0 + 2.0 * lf), np.sqrt(c1) / (8.0 * lf))


def _gt_chain(lf: float, nu: float, spec: LaplacianSpectrum, beta: float,
              delta: float, c3_fraction: float) -> dict:
    """Evaluate the mu-independent part of the chain; raises on infeasibility."""
    if lf <= 0 or nu <= 0:
        raise ValueError("lf and nu must be positive")
    if not (0 < c3_fraction < 1):
        raise ValueError("c3_fraction must lie in (0, 1)")
    rho = spec.rho

    checks = _Violations()
    beta_max = np.sqrt(2.0) / (2.0 * rho)
    checks.require(0 < beta < beta_max, "beta_upper[sqrt(2)/(2 rho)]", beta, beta_max)
    checks.raise_if_any()

    rho_mix = mixing_radius(spec, beta)
    gap = 1.0 - rho_mix * rho_mix
    c3 = c3_fraction * gap
    c4 = 1.0 / (16.0 * lf * lf)
    c2 = min(1.0 / 6.0, c4 * nu) / (lf * lf)
    c1 = (gap - c3) * gap / (1.0 + rho_mix * rho_mix)

    delta_bounds = {
        "c1*sqrt(c2)/4": c1 * np.sqrt(c2) / 4.0,
        "1/(4 lf)": 1.0 / (4.0 * lf),
        "2/nu": 2.0 / nu,
        "1/(8+2 lf)": 1.0 / (8.0 + 2.0 * lf),
        "sqrt(c1)/(8 lf)": np.sqrt(c1) / (8.0 * lf),
    }
    bind = min(delta_bounds, key=delta_bounds.get)
    checks.require(0 < delta < delta_bounds[bind],
                   f"delta_upper[{bind}]", delta, delta_bounds[bind])
    checks.raise_if_any()

    sigma1 = gap / (2.0 * rho_mix * rho_mix)
    inv1 = 1.0 + 1.0 / sigma1
    brho2 = beta * beta * rho * rho
    shrink = 1.0 - 2.0 * delta * lf
    chi1 = (1.0 + sigma1) * rho_mix * rho_mix
    chi2 = 2.0 * delta * delta * inv1
    chi3 = inv1 * 8.0 * lf * lf * (brho2 + 2.0 * delta * delta * lf * lf / shrink)
    chi4 = chi1 + inv1 * 8.0 * lf * lf * delta * delta
    chi5 = inv1 * 8.0 * lf * lf * 2.0 * delta * (2.0 - delta * nu) / shrink
    chi6 = 0.5 * delta * lf * lf
    chi7 = 1.0 - 0.5 * delta * nu
    gain = np.array([[chi1, chi2, 0.0],
                     [chi3, chi4, chi5],
                     [chi6, 0.0, chi7]])

    theta2 = 0.5 * c1 * c4
    theta1 = min(c1 * c2 / 4.0, c1 / (24.0 * lf * lf),
                 nu * theta2 / (2.0 * lf * lf))
    lmi_vector = np.array([theta1, 1.0, theta2])
    iota = min(0.5 * c3, 0.25 * delta * nu)

    lhs = gain @ lmi_vector
    rhs = (1.0 - iota) * lmi_vector
    for i in range(3):
        checks.require(lhs[i] <= rhs[i] + 1e-12, f"lmi_row_{i}", lhs[i], rhs[i])
    gain_rho, perron = perron_root(gain)
    checks.require(gain_rho <= 1.0 - iota + 1e-12,
                   "gain_rho <= 1 - iota", gain_rho, 1.0 - iota)
    checks.raise_if_any()

    power_coeff = 3.0 * float(perron.max() / perron.min())
    sigma5 = inv1 * 2.0 * brho2
    sigma2 = sigma5 * np.sqrt(1.0 + (1.0 + 4.0 * lf * lf) ** 2)
    sigma6 = np.sqrt(3.0) * max(beta * rho, delta)
    sigma7 = max(1.0 - 0.5 * delta * nu, 0.5 * delta * lf * lf)
    amp = np.sqrt(2.0 + 8.0 * sigma7 / (delta * shrink))
    sigma3 = sigma6 * amp
    sigma8 = np.sqrt(2.0) * max(np.sqrt(brho2 + 4.0 * lf * lf * delta * delta),
                                2.0 * lf * beta * rho)
    sigma4 = sigma8 * amp

    return dict(rho_mix=rho_mix, sigma1=sigma1, c1=c1, c2=c2, c3=c3, c4=c4,
                iota=iota, rate=1.0 - iota, lmi_vector=lmi_vector,
                gain_matrix=gain, gain_rho=gain_rho, perron=perron,
                power_coeff=power_coeff, sigma2=sigma2, sigma3=sigma3,
                sigma4=sigma4, sigma5=sigma5, sigma6=sigma6, sigma7=sigma7,
                sigma8=sigma8)


def _gt_thresholds(chain: dict, beta: float, mu: float, degree_max: float
                   ) -> tuple[float, float, float]:
    """(levels_min_x, levels_min_u, envelope_base) for one mu."""
    rate = chain["rate"]
    if mu * mu - rate <= 0.0:
        # mu is inside the envelope floor after float rounding
        return np.inf, np.inf, np.inf
    envelope_base = chain["power_coeff"] * chain["sigma2"] / (
        4.0 * mu * mu * (mu * mu - rate))
    common = np.sqrt(envelope_base)
    drift = (1.0 + 2.0 * beta * degree_max) / (2.0 * mu)
    lvl_x = chain["sigma3"] * common + drift - 0.5
    lvl_u = (common + 1.0 / (2.0 * mu)) * chain["sigma4"] + drift - 0.5
    return float(lvl_x), float(lvl_u), float(envelope_base)


def gt_certify(lf: float, nu: float, spec: LaplacianSpectrum, beta: float,
               delta: float, mu: float, levels: int,
               c3_fraction: float = 0.5) -> GtCertificate:
    """Certify a gradient-tracking parameter set or raise
    :class:`InfeasibleParameters` naming the first failed inequality."""
    chain = _gt_chain(lf, nu, spec, beta, delta, c3_fraction)

    checks = _Violations()
    mu_floor = np.sqrt(chain["rate"])
    checks.require(mu_floor < mu and mu * mu > chain["rate"],
                   "mu_lower[sqrt(1-iota)]", mu, mu_floor)
    checks.require(mu < 1.0, "mu_upper[1]", mu, 1.0)
    checks.raise_if_any()

    lvl_x, lvl_u, envelope_base = _gt_thresholds(chain, beta, mu, spec.max_degree)
    lvl_min = max(lvl_x, lvl_u)
    checks.require(levels >= lvl_min, "levels_min[max(theta_x, theta_u)]",
                   levels, lvl_min)
    checks.raise_if_any()

    return GtCertificate(
        lf=lf, nu=nu, n=spec.n, rho=spec.rho, rho_min=spec.rho_min,
        degree_max=spec.max_degree, beta=beta, delta=delta, mu=mu,
        levels=levels, envelope_base=envelope_base,
        levels_min_x=lvl_x, levels_min_u=lvl_u, levels_min=lvl_min, **chain)


def gt_s0_floor(cert: GtCertificate, problem: ProblemSuite, x0: np.ndarray,
                u0: np.ndarray, lambda0_norm: float) -> float:
    """Smallest admissible initial scale for a certified tracking run.

    Three-term max: the initial-state envelope, the first-step stacked
    gradient, and the envelope-matching term tied to the initial residual.
    """
    span = 2.0 * cert.levels + 1.0
    cx = float(np.abs(x0).max())
    cu = float(np.abs(u0).max())
    term1 = 2.0 * (cx + cert.delta * cu) / span
    g1 = problem.grad_all(x0 - cert.delta * u0)
    term2 = 2.0 * float(np.abs(g1).max()) / span
    term3 = np.sqrt(4.0 * lambda0_norm * cert.mu ** 2
                    * (cert.mu ** 2 - cert.rate) / cert.sigma2)
    return float(max(term1, term2, term3))


def _mu_grid(rate: float, count: int = 24) -> Iterator[float]:
    # mu^2 = rate + q (1 - rate), q sweeping toward 1: the envelope decays
    # fastest at small q, while the level thresholds relax as q grows.
    for q in np.concatenate([np.linspace(0.05, 0.9, count - 6),
                             1.0 - np.geomspace(1e-4, 0.1, 6)[::-1]]):
        mu = np.sqrt(rate + q * (1.0 - rate))
        if mu < 1.0:
            yield float(mu)


def gt_feasible_low_rate(lf: float, nu: float, spec: LaplacianSpectrum,
                         levels: int = 1, points: int = 64,
                         refinements: int = 2, c3_fraction: float = 0.5
                         ) -> tuple[float, float, float, GtCertificate]:
    """Search for (beta, delta, mu) certifiable at the given level count.

    Logarithmic grid over beta and over delta as a fraction of its upper
    bound, refined around the best hit; among feasible points the one with
    the smallest mu (fastest envelope) wins. Raises
    :class:`FeasibilityNotFound` when the budget is exhausted.
    """
    beta_max = np.sqrt(2.0) / (2.0 * spec.rho)
    beta_lo, beta_hi = beta_max * 1e-5, beta_max * 0.999
    frac_lo, frac_hi = 1e-5, 0.999
    best = None  # (mu, beta, delta)

    for _ in range(refinements + 1):
        for beta in np.geomspace(beta_lo, beta_hi, points):
            dmax = _gt_delta_max(lf, nu, spec, beta, c3_fraction)
            for frac in np.geomspace(frac_lo, frac_hi, points):
                try:
                    chain = _gt_chain(lf, nu, spec, beta, frac * dmax,
                                      c3_fraction)
                except InfeasibleParameters:
                    continue
                for mu in _mu_grid(chain["rate"]):
                    lvl_x, lvl_u, _ = _gt_thresholds(chain, beta, mu,
                                                     spec.max_degree)
                    if max(lvl_x, lvl_u) <= levels:
                        if best is None or mu < best[0]:
                            best = (mu, beta, frac * dmax)
                        break  # larger mu only slows the envelope
        if best is None:
            # shrink toward the origin, where the thresholds keep falling
            beta_hi = beta_lo * 10
            beta_lo = beta_lo * 1e-3
        else:
            _, beta_b, delta_b = best
            beta_lo = max(beta_b / 4, beta_max * 1e-12)
            beta_hi = min(beta_b * 4, beta_max * 0.999)
            dmax_b = _gt_delta_max(lf, nu, spec, beta_b, c3_fraction)
            frac_lo = max(delta_b / dmax_b / 4, 1e-12)
            frac_hi = min(delta_b / dmax_b * 4, 0.999)

    if best is None:
        raise FeasibilityNotFound(
            f"no certifiable (beta, delta, mu) at levels={levels}")
    mu, beta, delta = best
    return beta, delta, mu, gt_certify(lf, nu, spec, beta, delta, mu, levels,
                                       c3_fraction)


# ---------------------------------------------------------------------------
# Proportional-integral certificates.

@dataclass
class PiCertificate:
    """Derived constants of the proportional-integral feasibility chain.

    ``rate`` (= eps3) is the Lyapunov contraction factor; ``eps1``/``eps2``
    scale the saturation threshold; ``envelope_base * s0**2`` multiplies
    ``mu**(2k)`` in the convergence bound on consensus error plus optimality
    gap.
    """

    lf: float
    nu: float
    n: int
    m: int
    rho: float
    rho_min: float
    degree_max: float
    xi: float
    phi: float
    sigma: float
    mu: float
    levels: int
    kappa1: float
    kappa2: float
    kappa3: float
    eps_margin: float
    eta1: float
    eta2: float
    gamma1: float
    gamma2: float
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    eps5: float
    eps6: float
    eps7: float
    eps8: float
    eps10: float
    rate: float                 # = eps3
    envelope_base: float        # eps9 = envelope_base * s0**2
    levels_min: float

    def envelope_coeff(self, s0: float) -> float:
        return self.envelope_base * s0 * s0

    def as_flat(self) -> dict[str, float]:
        names = ("lf", "nu", "n", "m", "rho", "rho_min", "degree_max",
                 "xi", "phi", "sigma", "mu", "levels",
                 "kappa1", "kappa2", "kappa3", "eps_margin",
                 "eta1", "eta2", "gamma1", "gamma2",
                 "alpha1", "alpha2", "alpha3", "alpha4",
                 "eps1", "eps2", "eps3", "eps4", "eps5", "eps6", "eps7",
                 "eps8", "eps10", "rate", "envelope_base", "levels_min")
        return {name: getattr(self, name) for name in names}


def pi_structure(lf: float, nu: float, spec: LaplacianSpectrum, *,
                 kappa1_margin: float = 1.01, kappa2_margin: float = 1.01,
                 kappa3_factor: float = 2.0, eps_fraction: float = 0.99,
                 gamma_margin: float = 1.01) -> dict:
    """Pin the free structure constants (kappa1..3, eps, gamma1/2, eta1/2).

    The analysis only requires open ranges; the multiplicative margins make
    the choice deterministic.
    """
    rho, rho_min = spec.rho, spec.rho_min
    lf2 = lf * lf
    kappa1 = kappa1_margin * 5.0 / rho_min
    kappa2 = kappa2_margin * max(
        6.0 * lf2 * (kappa1 + 1.0) ** 2 * kappa1 ** 2 * rho,
        4.0 + 6.0 * lf2 * kappa1 ** 2 + lf2,
        6.0 * lf2 * (kappa1 + 1.0) ** 2,
        1.0 + (3.0 * lf2 + 8.0) / rho_min,
    )
    kappa3 = kappa3_factor * kappa2
    eta1 = (kappa3 ** 2 * rho + 2.0 / rho_min + 2.0 * kappa3 ** 2 * rho
            + 3.0 * kappa3 ** 2 * lf2 * ((kappa1 + 1.0) / kappa2 ** 2
                                         + 1.5 * rho))
    eta2 = (4.0 * kappa1 ** 2 * kappa3 ** 2 * rho ** 2
            + 2.0 * (kappa3 ** 2 * (kappa1 + 1.0) * rho + 1.0 + kappa3 ** 2)
            + 3.0 * kappa1 ** 2 * lf2 * ((kappa1 + 1.0) * rho
                                         + 1.5 * kappa3 ** 2 * rho ** 2))
    eps_margin = eps_fraction * min(
        0.5 * kappa2 - 2.0 - 3.0 * lf2 * kappa1 ** 2 - 0.5 * lf2,
        kappa2 - 1.0 - (3.0 * lf2 + 8.0) / rho_min,
    )
    return dict(kappa1=kappa1, kappa2=kappa2, kappa3=kappa3,
                eps_margin=eps_margin, eta1=eta1, eta2=eta2,
                gamma1=gamma_margin * eta1, gamma2=gamma_margin * eta2)


def _pi_chain(lf: float, nu: float, rho: float, rho_min: float, xi: float,
              phi: float, sigma: float) -> dict:
    """Contraction-factor chain shared by the certifier and the search."""
    lf2 = lf * lf
    alpha1 = (phi - 8.0 * sigma / rho_min
              - 6.0 * sigma ** 2 * phi ** 2 * lf2 * (xi + phi) ** 2 / phi ** 5
              - 3.0 * sigma * lf2 / rho_min)
    alpha2 = (phi ** 2 * rho + 2.0 * sigma ** 2 / rho_min
              + 2.0 * phi ** 2 * rho
              + 3.0 * phi ** 2 * lf2 * (sigma ** 2 * (xi + phi) / phi ** 3
                                        + 1.5 * rho))
    eps6 = alpha1 - alpha2
    alpha3 = (xi * rho_min - 4.5 * phi - sigma
              - 6.0 * sigma ** 2 * xi ** 2 * lf2 * (xi + phi) ** 2 * rho / phi ** 5
              - 3.0 * sigma * lf2 * xi ** 2 / phi ** 2)
    alpha4 = (4.0 * xi ** 2 * rho ** 2
              + 2.0 * (phi * (xi + phi) * rho + sigma ** 2 + phi ** 2)
              + 3.0 * xi ** 2 * lf2 * (sigma ** 2 * (xi + phi) * rho / phi ** 3
                                       + 1.5 * rho ** 2))
    eps8 = alpha3 - alpha4
    eps7 = eps8 - 0.5 * sigma * lf2
    eps5 = max((xi * rho_min + phi) / (xi * rho_min), 1.0 + 2.0 * xi / phi)
    eps4 = min(eps6, eps7, 0.5 * sigma * nu)
    eps3 = 1.0 - eps4 / eps5
    return dict(alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, alpha4=alpha4,
                eps3=eps3, eps4=eps4, eps5=eps5, eps6=eps6, eps7=eps7,
                eps8=eps8)


def pi_certify(lf: float, nu: float, spec: LaplacianSpectrum, xi: float,
               phi: float, sigma: float, mu: float, levels: int,
               n: int, m: int, **margins) -> PiCertificate:
    """Certify a proportional-integral parameter set or raise
    :class:`InfeasibleParameters`."""
    if lf <= 0 or nu <= 0:
        raise ValueError("lf and nu must be positive")
    rho, rho_min, d = spec.rho, spec.rho_min, spec.max_degree
    s = pi_structure(lf, nu, spec, **margins)
    kappa1, kappa2, kappa3 = s["kappa1"], s["kappa2"], s["kappa3"]
    eps_margin, gamma1, gamma2 = s["eps_margin"], s["gamma1"], s["gamma2"]

    checks = _Violations()
    sigma_max = min(eps_margin / gamma1, eps_margin / gamma2, 2.0 / nu,
                    1.0 / (4.0 * lf))
    checks.require(0 < sigma < sigma_max,
                   "sigma_upper[min(eps/gamma1, eps/gamma2, 2/nu, 1/(4 lf))]",
                   sigma, sigma_max)
    checks.require(sigma * kappa2 <= phi <= sigma * kappa3,
                   "phi_range[sigma kappa2, sigma kappa3]", phi, sigma * kappa2)
    checks.require(5.0 * phi / rho_min <= xi <= kappa1 * phi,
                   "xi_range[5 phi / rho_min, kappa1 phi]", xi,
                   5.0 * phi / rho_min)
    checks.raise_if_any()

    chain = _pi_chain(lf, nu, rho, rho_min, xi, phi, sigma)
    alpha1, alpha2 = chain["alpha1"], chain["alpha2"]
    alpha3, alpha4 = chain["alpha3"], chain["alpha4"]
    eps3, eps4, eps5 = chain["eps3"], chain["eps4"], chain["eps5"]
    eps6, eps7, eps8 = chain["eps6"], chain["eps7"], chain["eps8"]

    checks.require(eps6 > sigma ** 2 * (gamma1 - s["eta1"]),
                   "eps6 > sigma^2 (gamma1 - eta1)", eps6,
                   sigma ** 2 * (gamma1 - s["eta1"]))
    checks.require(eps8 > sigma ** 2 * (gamma2 - s["eta2"]),
                   "eps8 > sigma^2 (gamma2 - eta2)", eps8,
                   sigma ** 2 * (gamma2 - s["eta2"]))
    checks.require(eps7 > 0.0, "eps7 > 0", eps7, 0.0)
    checks.require(0.0 < eps3 < 1.0, "eps3 in (0, 1)", eps3, 1.0)
    checks.raise_if_any()

    mu_floor = np.sqrt(eps3)
    checks.require(mu_floor < mu and mu * mu > eps3,
                   "mu_lower[sqrt(eps3)]", mu, mu_floor)
    checks.require(mu < 1.0, "mu_upper[1]", mu, 1.0)
    checks.raise_if_any()

    eps1 = max(xi ** 2 * rho ** 2, phi ** 3 * rho / (phi + xi),
               xi * phi * rho ** 2)
    eps2 = (xi * rho + 2.0 * phi * rho + 4.0 * xi ** 2 * rho ** 2
            + 2.0 * (phi * (xi + phi) * rho + sigma ** 2 + phi ** 2
                     + 2.0 * phi))
    lvl_min = (eps1 * np.sqrt(eps2 * n * m / (4.0 * mu * mu * (mu * mu - eps3)))
               + (1.0 + 2.0 * xi * d) / (2.0 * mu) - 0.5)
    checks.require(levels >= lvl_min, "levels_min", levels, lvl_min)
    checks.raise_if_any()

    eps10 = min((xi * rho_min - phi) / (xi * rho_min), 1.0)
    envelope_base = n * m * eps2 / (4.0 * eps10 * mu * mu * (mu * mu - eps3))

    return PiCertificate(
        lf=lf, nu=nu, n=n, m=m, rho=rho, rho_min=rho_min, degree_max=d,
        xi=xi, phi=phi, sigma=sigma, mu=mu, levels=levels,
        kappa1=kappa1, kappa2=kappa2, kappa3=kappa3, eps_margin=eps_margin,
        eta1=s["eta1"], eta2=s["eta2"], gamma1=gamma1, gamma2=gamma2,
        alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, alpha4=alpha4,
        eps1=float(eps1), eps2=float(eps2), eps3=float(eps3),
        eps4=float(eps4), eps5=float(eps5), eps6=float(eps6),
        eps7=float(eps7), eps8=float(eps8), eps10=float(eps10),
        rate=float(eps3), envelope_base=float(envelope_base),
        levels_min=float(lvl_min))


def pi_lyapunov(spec: LaplacianSpectrum, xi: float, phi: float, sigma: float,
                problem: ProblemSuite, f_star: float, x: np.ndarray,
                u: np.ndarray) -> float:
    """Lyapunov value W = V + n (f(mean) - f*) at a state, with
    V built from the centering and pseudo-inverse quadratic forms."""
    g = problem.grad_all(x)
    w = u + (sigma / phi) * g
    k_mat, p_mat = spec.centering, spec.pseudo
    qk = float(np.sum(x * (k_mat @ x)))
    qp = float(np.sum(w * (p_mat @ w)))
    cross = float(np.sum(x * (k_mat @ (p_mat @ w))))
    xbar = x.mean(axis=0)
    gap = spec.n * (problem.mean_value(xbar) - f_star)
    return qk + (phi + xi) / phi * qp + 2.0 * cross + gap


def pi_s0_floor(cert: PiCertificate, spec: LaplacianSpectrum,
                problem: ProblemSuite, f_star: float, x0: np.ndarray,
                u0: np.ndarray) -> float:
    """Smallest admissible initial scale for a certified PI run."""
    g0 = problem.grad_all(x0)
    cx = float(np.abs(x0).max())
    cu = float(np.abs(u0).max())
    cg = float(np.abs(g0).max())
    term1 = (cx + cert.phi * cu + cert.sigma * cg) / (cert.levels + 0.5)
    w0 = pi_lyapunov(spec, cert.xi, cert.phi, cert.sigma, problem, f_star,
                     x0, u0)
    term2 = np.sqrt(4.0 * cert.mu ** 2 * (cert.mu ** 2 - cert.eps3)
                    * max(w0, 0.0) / (cert.eps2 * cert.n * cert.m))
    return float(max(term1, term2))


def pi_feasible_low_rate(lf: float, nu: float, spec: LaplacianSpectrum,
                         levels: int, n: int, m: int,
                         xi_over_phi: float | None = None,
                         phi_over_sigma: float | None = None,
                         points: int = 64, refinements: int = 2,
                         **margins) -> tuple[float, float, float, float,
                                             PiCertificate]:
    """Search (sigma, mu) with the gain ratios held fixed; returns
    (xi, phi, sigma, mu, certificate) or raises FeasibilityNotFound.

    Shrinking sigma drives the saturation threshold to its floor, so small
    level counts become feasible; among feasible points the smallest mu wins.
    """
    s = pi_structure(lf, nu, spec, **margins)
    if phi_over_sigma is None:
        phi_over_sigma = np.sqrt(s["kappa2"] * s["kappa3"])
    if xi_over_phi is None:
        xi_over_phi = np.sqrt(5.0 / spec.rho_min * s["kappa1"])
    sigma_max = min(s["eps_margin"] / s["gamma1"], s["eps_margin"] / s["gamma2"],
                    2.0 / nu, 1.0 / (4.0 * lf))
    lo, hi = sigma_max * 1e-8, sigma_max * 0.9999
    best = None  # (mu, sigma)

    for _ in range(refinements + 1):
        for sigma in np.geomspace(lo, hi, points):
            phi = phi_over_sigma * sigma
            xi = xi_over_phi * phi
            base = None
            for mu in _mu_grid_pi(lf, nu, spec, xi, phi, sigma):
                try:
                    cert = pi_certify(lf, nu, spec, xi, phi, sigma, mu,
                                      levels, n, m, **margins)
                except InfeasibleParameters:
                    continue
                base = cert
                break  # first (smallest) feasible mu for this sigma
            if base is not None and (best is None or base.mu < best[0]):
                best = (base.mu, sigma)
        if best is None:
            hi = lo * 10
            lo = lo * 1e-3
        else:
            _, sig_b = best
            lo = max(sig_b / 4, sigma_max * 1e-14)
            hi = min(sig_b * 4, sigma_max * 0.9999)

    if best is None:
        raise FeasibilityNotFound(f"no certifiable (sigma, mu) at levels={levels}")
    mu, sigma = best
    phi = phi_over_sigma * sigma
    xi = xi_over_phi * phi
    return xi, phi, sigma, mu, pi_certify(lf, nu, spec, xi, phi, sigma, mu,
                                          levels, n, m, **margins)


def _mu_grid_pi(lf, nu, spec, xi, phi, sigma) -> Iterator[float]:
    # probe the contraction factor once to anchor the mu grid
    chain = _pi_chain(lf, nu, spec.rho, spec.rho_min, xi, phi, sigma)
    if chain["eps4"] <= 0 or not (0.0 < chain["eps3"] < 1.0):
        return
    yield from _mu_grid(chain["eps3"])
