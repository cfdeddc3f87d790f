"""Cost-function suites, numeric curvature estimators, and the global
optimum oracle.

Two suites are registered for the harness: ``paper-suite`` (ten nonconvex
scalar families spread over the agents in consecutive blocks) and
``least-squares`` (a seeded strongly convex regression problem with exact
constants). Local costs elsewhere in the package only need ``eval``/``grad``
callables, so tests and callers can supply their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IndivisibleCount, UnsupportedDimension


@dataclass
class CostFunction:
    """One agent's local cost.

    ``eval`` maps an (m,) point to a float and ``grad`` to its (m,) gradient.
    The ``*_many`` variants take an (S, m) stack of points; when absent they
    fall back to a row loop.
    """

    dimension: int
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    eval_many: Callable[[np.ndarray], np.ndarray] | None = None
    grad_many: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""

    def values(self, points: np.ndarray) -> np.ndarray:
        if self.eval_many is not None:
            return np.asarray(self.eval_many(points), dtype=float)
        return np.array([self.eval(p) for p in points], dtype=float)

    def gradients(self, points: np.ndarray) -> np.ndarray:
        if self.grad_many is not None:
            return np.asarray(self.grad_many(points), dtype=float)
        return np.stack([np.asarray(self.grad(p), dtype=float) for p in points])


class ProblemSuite:
    """A network's local costs plus cached global quantities.

    ``f_star``/``x_star_hint`` are filled by :func:`global_optimum_oracle`
    (or exactly, for analytic suites); ``lf``/``nu`` by the estimators below.
    """

    def __init__(self, costs: list[CostFunction], *, f_star: float | None = None,
                 x_star_hint: np.ndarray | None = None,
                 lf: float | None = None, nu: float | None = None,
                 analytic: bool = False,
                 grad_all_fn=None, mean_value_many_fn=None, mean_grad_many_fn=None):
        if not costs:
            raise ValueError("need at least one cost")
        dims = {c.dimension for c in costs}
        if len(dims) != 1:
            raise ValueError(f"mixed cost dimensions {dims}")
        self.costs = costs
        self.f_star = f_star
        self.x_star_hint = x_star_hint
        self.lf = lf
        self.nu = nu
        self.analytic = analytic
        self._grad_all_fn = grad_all_fn
        self._mean_value_many_fn = mean_value_many_fn
        self._mean_grad_many_fn = mean_grad_many_fn

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def m(self) -> int:
        return self.costs[0].dimension

    def grad_all(self, x: np.ndarray) -> np.ndarray:
        """Per-agent gradients at per-agent points: (n, m) -> (n, m)."""
        if self._grad_all_fn is not None:
            return self._grad_all_fn(x)
        return np.stack([np.asarray(c.grad(x[i]), dtype=float)
                         for i, c in enumerate(self.costs)])

    def mean_value(self, x: np.ndarray) -> float:
        """Global cost (1/n) * sum of local costs at a common point."""
        return float(self.mean_value_many(np.asarray(x, dtype=float)[None, :])[0])

    def mean_grad(self, x: np.ndarray) -> np.ndarray:
        return self.mean_grad_many(np.asarray(x, dtype=float)[None, :])[0]

    def mean_value_many(self, points: np.ndarray) -> np.ndarray:
        if self._mean_value_many_fn is not None:
            return self._mean_value_many_fn(points)
        acc = np.zeros(points.shape[0])
        for c in self.costs:
            acc += c.values(points)
        return acc / self.n

    def mean_grad_many(self, points: np.ndarray) -> np.ndarray:
        if self._mean_grad_many_fn is not None:
            return self._mean_grad_many_fn(points)
        acc = np.zeros_like(points, dtype=float)
        for c in self.costs:
            acc += c.gradients(points)
        return acc / self.n


# ---------------------------------------------------------------------------
# Built-in nonconvex scalar families.

@dataclass(frozen=True)
class _Family:
    label: str
    f: Callable[[np.ndarray], np.ndarray]
    d: Callable[[np.ndarray], np.ndarray]


def _quartic_root(x):
    return np.sqrt(x ** 4 + 3.0)


def _cube_root_term(x):
    return np.cbrt(x * x + 2.0)


def _ratio(x):
    # x^2 / sqrt(x^2 + 1) and its derivative x (x^2 + 2) / (x^2 + 1)^(3/2)
    return x * x / np.sqrt(x * x + 1.0)


def _ratio_d(x):
    return x * (x * x + 2.0) / (x * x + 1.0) ** 1.5


_FAMILIES = [
    _Family("0.2*sqrt(x^4+3) + 0.7*cos^2 x",
            lambda x: 0.2 * _quartic_root(x) + 0.7 * np.cos(x) ** 2,
            lambda x: 0.4 * x ** 3 / _quartic_root(x) - 0.7 * np.sin(2 * x)),
    _Family("2*sin x - 0.1*(x^2+2)^(1/3)",
            lambda x: 2 * np.sin(x) - 0.1 * _cube_root_term(x),
            lambda x: 2 * np.cos(x) - (0.2 / 3.0) * x / _cube_root_term(x) ** 2),
    _Family("0.3*x^2/sqrt(x^2+1)",
            lambda x: 0.3 * _ratio(x),
            lambda x: 0.3 * _ratio_d(x)),
    _Family("-0.1*sqrt(x^4+3) - sin x",
            lambda x: -0.1 * _quartic_root(x) - np.sin(x),
            lambda x: -0.2 * x ** 3 / _quartic_root(x) - np.cos(x)),
    _Family("-0.2*x^2/sqrt(x^2+1) + 2*sin^2 x",
            lambda x: -0.2 * _ratio(x) + 2 * np.sin(x) ** 2,
            lambda x: -0.2 * _ratio_d(x) + 2 * np.sin(2 * x)),
    _Family("-0.1*sqrt(x^4+3) - 0.1*x^2/sqrt(x^2+1)",
            lambda x: -0.1 * _quartic_root(x) - 0.1 * _ratio(x),
            lambda x: -0.2 * x ** 3 / _quartic_root(x) - 0.1 * _ratio_d(x)),
    _Family("-sin x - 1",
            lambda x: -np.sin(x) - 1.0,
            lambda x: -np.cos(x)),
    _Family("x^2 + 0.3*cos^2 x",
            lambda x: x * x + 0.3 * np.cos(x) ** 2,
            lambda x: 2 * x - 0.3 * np.sin(2 * x)),
    _Family("2*sin^2 x + 0.2*(x^2+2)^(1/3)",
            lambda x: 2 * np.sin(x) ** 2 + 0.2 * _cube_root_term(x),
            lambda x: 2 * np.sin(2 * x) + (0.4 / 3.0) * x / _cube_root_term(x) ** 2),
    _Family("-0.1*(x^2+2)^(1/3)",
            lambda x: -0.1 * _cube_root_term(x),
            lambda x: -(0.2 / 3.0) * x / _cube_root_term(x) ** 2),
]


def _family_cost(fam: _Family) -> CostFunction:
    f, d = fam.f, fam.d
    return CostFunction(
        dimension=1,
        eval=lambda x: float(f(np.asarray(x, dtype=float).ravel()[0])),
        grad=lambda x: np.array([d(np.asarray(x, dtype=float).ravel()[0])]),
        eval_many=lambda pts: f(np.asarray(pts, dtype=float)[:, 0]),
        grad_many=lambda pts: d(np.asarray(pts, dtype=float)[:, 0])[:, None],
        label=fam.label,
    )


def nonconvex_suite(n: int = 100) -> ProblemSuite:
    """Ten scalar nonconvex families, one per consecutive block of n/10 agents.

    Requires ``n`` divisible by 10. The blockwise layout makes the suite-level
    batch operations ten vectorized slices instead of n scalar calls.
    """
    if n % 10 != 0 or n <= 0:
        raise IndivisibleCount(f"agent count {n} not a positive multiple of 10")
    block = n // 10
    costs = []
    for fam in _FAMILIES:
        costs.extend(_family_cost(fam) for _ in range(block))

    def grad_all_fn(x):
        out = np.empty_like(x, dtype=float)
        col = np.asarray(x, dtype=float)[:, 0]
        for j, fam in enumerate(_FAMILIES):
            sl = slice(j * block, (j + 1) * block)
            out[sl, 0] = fam.d(col[sl])
        return out

    def mean_value_many_fn(points):
        col = np.asarray(points, dtype=float)[:, 0]
        acc = np.zeros_like(col)
        for fam in _FAMILIES:
            acc += fam.f(col)
        return acc / 10.0

    def mean_grad_many_fn(points):
        col = np.asarray(points, dtype=float)[:, 0]
        acc = np.zeros_like(col)
        for fam in _FAMILIES:
            acc += fam.d(col)
        return (acc / 10.0)[:, None]

    return ProblemSuite(costs, grad_all_fn=grad_all_fn,
                        mean_value_many_fn=mean_value_many_fn,
                        mean_grad_many_fn=mean_grad_many_fn)


def least_squares_suite(n: int, m: int, ell2: float, seed: int,
                        scale: float = 1.0) -> ProblemSuite:
    """Seeded regression suite: agent i owns (u_i' x - z_i)^2 + (ell2/n)|x|^2.

    Strongly convex for ell2 > 0 (and generically for ell2 = 0), so the
    global minimum, smoothness, and gradient-dominance constants come from
    the normal equations instead of sampling. ``scale`` multiplies the drawn
    data, scaling both curvature constants by scale^2.
    """
    if ell2 < 0:
        raise ValueError("ell2 must be nonnegative")
    rng = np.random.default_rng(seed)
    u_rows = rng.standard_normal((n, m)) * scale
    z = rng.standard_normal(n) * scale
    reg = ell2 / n

    def make_cost(i):
        ui = u_rows[i]
        zi = z[i]

        def f(x):
            x = np.asarray(x, dtype=float)
            r = float(ui @ x - zi)
            return r * r + reg * float(x @ x)

        def g(x):
            x = np.asarray(x, dtype=float)
            r = float(ui @ x - zi)
            return 2.0 * r * ui + 2.0 * reg * x

        def f_many(pts):
            r = pts @ ui - zi
            return r * r + reg * np.einsum("ij,ij->i", pts, pts)

        def g_many(pts):
            r = pts @ ui - zi
            return 2.0 * r[:, None] * ui + 2.0 * reg * pts

        return CostFunction(m, f, g, f_many, g_many, label=f"least-squares[{i}]")

    hessian = (2.0 / n) * (u_rows.T @ u_rows + ell2 * np.eye(m))
    x_star = np.linalg.solve(u_rows.T @ u_rows + ell2 * np.eye(m), u_rows.T @ z)
    residual = u_rows @ x_star - z
    f_star = (float(residual @ residual) + ell2 * float(x_star @ x_star)) / n
    eigs = np.linalg.eigvalsh(hessian)
    lf = float(max(2.0 * np.einsum("ij,ij->i", u_rows, u_rows) + 2.0 * reg))

    def grad_all_fn(x):
        r = np.einsum("ij,ij->i", u_rows, x) - z
        return 2.0 * r[:, None] * u_rows + 2.0 * reg * x

    def mean_value_many_fn(points):
        r = points @ u_rows.T - z
        return (np.einsum("ij,ij->i", r, r)
                + ell2 * np.einsum("ij,ij->i", points, points)) / n

    def mean_grad_many_fn(points):
        r = points @ u_rows.T - z
        return (2.0 * (r @ u_rows) + 2.0 * ell2 * points) / n

    return ProblemSuite(
        [make_cost(i) for i in range(n)],
        f_star=f_star, x_star_hint=x_star,
        lf=lf, nu=float(eigs[0]), analytic=True,
        grad_all_fn=grad_all_fn,
        mean_value_many_fn=mean_value_many_fn,
        mean_grad_many_fn=mean_grad_many_fn,
    )


SUITES = {
    "paper-suite": nonconvex_suite,
    "least-squares": least_squares_suite,
}


def make_suite(name: str, **params) -> ProblemSuite:
    try:
        builder = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(SUITES)}") from None
    return builder(**params)


# ---------------------------------------------------------------------------
# Global optimum oracle: coarse grid plus golden-section refinement.

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(fun, lo: float, hi: float, tol: float = 1e-10
                    ) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def global_optimum_oracle(suite: ProblemSuite,
                          search_interval: tuple[float, float] = (-20.0, 20.0),
                          grid_points: int = 200_001
                          ) -> tuple[float, np.ndarray]:
    """Locate the global minimum of the suite's average cost.

    Analytic suites return their exact optimum. One-dimensional suites get a
    dense grid over ``search_interval`` followed by golden-section refinement
    of the five best local-minimum brackets down to 1e-10 bracket width; ties
    break toward the smallest minimizer. Anything else is unsupported.
    """
    if suite.analytic and suite.f_star is not None:
        return suite.f_star, suite.x_star_hint
    if suite.m != 1:
        raise UnsupportedDimension(
            f"grid oracle needs m == 1 (got m={suite.m}) or an analytic suite")
    lo, hi = search_interval
    xs = np.linspace(lo, hi, grid_points)
    vals = suite.mean_value_many(xs[:, None])

    interior = np.zeros(grid_points, dtype=bool)
    interior[1:-1] = (vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])
    interior[0] = vals[0] <= vals[1]
    interior[-1] = vals[-1] <= vals[-2]
    cand = np.nonzero(interior)[0]
    best = cand[np.lexsort((xs[cand], vals[cand]))][:5]

    def scalar_mean(x):
        return float(suite.mean_value_many(np.asarray([[x]]))[0])

    winners = []
    for idx in best:
        a = xs[max(idx - 1, 0)]
        b = xs[min(idx + 1, grid_points - 1)]
        x_ref, f_ref = _golden_section(scalar_mean, a, b)
        # keep whichever of the grid point / refined point is lower
        if vals[idx] < f_ref:
            x_ref, f_ref = xs[idx], vals[idx]
        winners.append((float(f_ref), float(x_ref)))
    winners.sort(key=lambda t: (t[0], t[1]))
    f_star, x_star = winners[0]
    return f_star, np.array([x_star])


# ---------------------------------------------------------------------------
# Curvature estimators. Both bias their output so that certification built on
# top errs conservative: smoothness is inflated, gradient dominance deflated.

def estimate_smoothness(suite: ProblemSuite,
                        sample_box: tuple[float, float] = (-10.0, 10.0),
                        samples: int = 2000, seed: int = 0) -> float:
    """Largest sampled gradient difference quotient over all agents, x 1.2."""
    if samples < 1000:
        raise ValueError("need at least 1000 sample pairs")
    rng = np.random.default_rng(seed)
    lo, hi = sample_box
    xs = rng.uniform(lo, hi, size=(samples, suite.m))
    ys = rng.uniform(lo, hi, size=(samples, suite.m))
    dist = np.linalg.norm(xs - ys, axis=1)
    keep = dist > 1e-12
    xs, ys, dist = xs[keep], ys[keep], dist[keep]
    worst = 0.0
    for cost in suite.costs:
        diff = np.linalg.norm(cost.gradients(xs) - cost.gradients(ys), axis=1)
        worst = max(worst, float((diff / dist).max()))
    return 1.2 * worst


def estimate_pl_constant(suite: ProblemSuite, f_star: float,
                         sample_box: tuple[float, float] = (-10.0, 10.0),
                         samples: int = 2000, seed: int = 0) -> float:
    """Smallest sampled ratio |grad f|^2 / (2 (f - f*)), x 0.8.

    Points with gap below 1e-12 are excluded: the ratio is 0/0 at the
    optimum and the bound is about everything away from it.
    """
    rng = np.random.default_rng(seed)
    lo, hi = sample_box
    xs = rng.uniform(lo, hi, size=(samples, suite.m))
    gaps = suite.mean_value_many(xs) - f_star
    grads = suite.mean_grad_many(xs)
    sq = np.einsum("ij,ij->i", grads, grads)
    keep = gaps > 1e-12
    if not np.any(keep):
        raise ValueError("all samples sit at the optimum; widen the box")
    ratios = 0.5 * sq[keep] / gaps[keep]
    return 0.8 * float(ratios.min())
