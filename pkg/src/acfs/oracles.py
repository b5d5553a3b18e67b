"""Synthetic test oracles with known optima.

``QuadraticOracle`` has the same interface as :class:`~acfs.scenarios.DgpSpec`
(``sample``, ``sample_each``, ``from_normals``, ``cost``) so any optimiser
in the package can run against it unchanged.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, as_generator, check_positive_int
from .scenarios import N_W, ScenarioMatrix, _draw_normals, check_decision, is_feasible


@dataclass(frozen=True)
class QuadraticOracle:
    """Cost ``offset + curvature * ||x - x_opt||^2 + sum(W)`` with ``W = noise * Z``.

    With ``noise = 0`` every draw of W is zero and the oracle is
    deterministic; its spectral risk is then ``(1 + lam)`` times the cost.
    """

    x_opt: tuple = (0.10, 0.15, 0.20, 0.12, 0.08, 0.55)
    curvature: float = 10.0
    offset: float = 1.0
    noise: float = 0.0
    kind: str = "QUAD"

    def __post_init__(self):
        x = np.asarray(self.x_opt, dtype=float)
        if x.shape != (6,) or not is_feasible(x):
            raise DomainError("x_opt must be a feasible decision")
        object.__setattr__(self, "x_opt", tuple(float(v) for v in x))

    @property
    def name(self):
        return "quad"

    @property
    def optimum(self):
        return np.array(self.x_opt)

    def from_normals(self, normals, x, seed=None, antithetic=False):
        x = check_decision(x)
        z = np.vstack([normals, -normals]) if antithetic else normals
        return ScenarioMatrix(self.noise * z, z, normals, x.copy(), seed, bool(antithetic), self)

    def sample(self, x, n, seed=None, antithetic=False):
        n = check_positive_int(n, "n")
        normals = _draw_normals(n, as_generator(seed), antithetic)
        return self.from_normals(normals, x, seed=None, antithetic=antithetic)

    def sample_each(self, X, seed=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.noise * as_generator(seed).standard_normal((X.shape[0], N_W))

    def cost(self, scenarios, x):
        W = scenarios.w if isinstance(scenarios, ScenarioMatrix) else np.atleast_2d(scenarios)
        x = np.asarray(x, dtype=float)
        base = self.offset + self.curvature * float(np.sum((x - self.optimum) ** 2))
        return base + W.sum(axis=1)
