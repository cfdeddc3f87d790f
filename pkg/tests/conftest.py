import numpy as np
import pytest

import qdopt as q


@pytest.fixture(scope="session")
def path3():
    return q.build_graph(3, [(0, 1, 1.0), (1, 2, 1.0)])


@pytest.fixture(scope="session")
def complete6():
    edges = [(i, j, 1.0) for i in range(6) for j in range(i + 1, 6)]
    return q.build_graph(6, edges)


def quadratic_suite(centers, curvature=1.0):
    """Identical-curvature scalar quadratics: agent i owns
    curvature/2 * (x - centers[i])^2.

    Exact constants: lf = nu = curvature; the average is minimized at the
    center mean with value curvature/2 * Var(centers).
    """
    centers = np.asarray(centers, dtype=float)
    a = float(curvature)

    def make(ci):
        return q.CostFunction(
            dimension=1,
            eval=lambda x: 0.5 * a * float((x[0] - ci) ** 2),
            grad=lambda x: np.array([a * (x[0] - ci)]),
            eval_many=lambda pts: 0.5 * a * (pts[:, 0] - ci) ** 2,
            grad_many=lambda pts: a * (pts[:, 0] - ci)[:, None],
        )

    mean = centers.mean()
    f_star = 0.5 * a * float(np.mean((centers - mean) ** 2))
    return q.ProblemSuite(
        [make(c) for c in centers],
        f_star=f_star, x_star_hint=np.array([mean]),
        lf=a, nu=a, analytic=True,
        grad_all_fn=lambda x: a * (x - centers[:, None]),
        mean_value_many_fn=lambda pts: 0.5 * a * np.mean(
            (pts[:, 0][:, None] - centers) ** 2, axis=1),
        mean_grad_many_fn=lambda pts: a * (pts[:, 0][:, None]
                                           - centers).mean(axis=1)[:, None],
    )
