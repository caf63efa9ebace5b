"""Implicit compute cells: local discretization rows for the interface problem

    k u - div(mu grad u) = f      on each side of the interface,
    [u] = alpha,  [mu du/dn] = beta   across it (n points from minus to plus),
    u = g                         on the cube boundary.

A cell of width ``h`` is centered at a collocation point ``p``. Each of the six
arms toward ``q = p +/- h e_i`` contributes a face flux. Uncrossed arms use the
standard variable-coefficient two-point flux with ``mu`` at the arm midpoint.
Arms that cross the interface at fraction ``theta`` use a jump-corrected flux

    F = mu_hat * ((u_far(q) - u_near(p) - a) / h - (1 - theta) * b_a / mu_far)
    mu_hat = mu_near * mu_far / (theta * mu_far + (1 - theta) * mu_near)

where ``a`` and ``b_a`` are the solution jump and the flux jump along the arm,
both measured far-minus-near. The flux is exact for piecewise-linear
solutions. The known jump terms move to the right-hand side, so a row reads

    sum_j coef_j * u_{side_j}(x_j) = rhs,   diagonal = coef of u(p).

The point residual is preconditioned by the diagonal (Jacobi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomain
from .expr import Expression, parse
from .geometry import LevelSet, Side
from .surrogate import SolutionPair, backward, evaluate_solution

THETA_SNAP = 1e-6
# Sign with which crossed-arm jump terms enter the right-hand side. Only
# verification fixtures change it, to show the exactness oracle catches it.
JUMP_CORRECTION_SIGN = -1.0

# arm order: +x, -x, +y, -y, +z, -z
ARM_DIRECTIONS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
)


def _expr(e):
    return parse(str(e)) if not isinstance(e, Expression) else e


@dataclass(frozen=True)
class ProblemSpec:
    mu_minus: Expression
    mu_plus: Expression
    k_minus: Expression
    k_plus: Expression
    f_minus: Expression
    f_plus: Expression
    alpha: Expression
    beta: Expression
    g: Expression
    level_set: LevelSet
    domain: tuple = (-1.0, 1.0)

    @classmethod
    def from_strings(cls, level_set, domain=(-1.0, 1.0), **fields):
        return cls(level_set=level_set, domain=tuple(float(d) for d in domain),
                   **{k: _expr(v) for k, v in fields.items()})

    @property
    def extent(self) -> float:
        return self.domain[1] - self.domain[0]

    def sided(self, name: str, points, is_plus):
        """Evaluate ``<name>_minus`` / ``<name>_plus`` by side flag."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        flag = np.asarray(is_plus, dtype=bool).reshape(-1)
        out = np.empty(len(pts))
        if np.any(~flag):
            out[~flag] = getattr(self, f"{name}_minus")(pts[~flag])
        if np.any(flag):
            out[flag] = getattr(self, f"{name}_plus")(pts[flag])
        return out

    def check_coefficients(self, samples: int = 4096, seed: int = 0):
        """Sample mu on each subdomain; raise ValueError if it is not positive."""
        rng = np.random.default_rng(seed)
        lo, hi = self.domain
        pts = rng.uniform(lo, hi, size=(samples, 3))
        axis = np.linspace(lo, hi, 9)
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
        pts = np.concatenate([pts, grid])
        plus = self.level_set.is_plus(pts)
        for name, sel in (("mu_minus", ~plus), ("mu_plus", plus)):
            if not np.any(sel):
                continue
            vals = getattr(self, name)(pts[sel])
            if np.any(vals <= 0):
                i = int(np.argmin(vals))
                raise ValueError(
                    f"{name} must be positive on its subdomain; {name}{tuple(pts[sel][i])} = {vals[i]:.6g}"
                )


@dataclass(frozen=True)
class StencilAssembly:
    """One collocation point's residual row."""

    center: np.ndarray
    h: float
    terms: list  # (evaluation point, Side, coefficient)
    rhs: float
    diagonal: float


@dataclass(frozen=True)
class PointResidual:
    r: float
    raw: float


@dataclass
class StencilBatch:
    """Rows for ``n`` centers. Column 0 is the center; columns 1..6 the arms in
    ``ARM_DIRECTIONS`` order.

    ``plus[i, j]`` selects which network evaluates ``points[i, j]``.
    """

    centers: np.ndarray  # (n, 3)
    h: float
    points: np.ndarray  # (n, 7, 3)
    plus: np.ndarray  # (n, 7) bool
    coef: np.ndarray  # (n, 7)
    rhs: np.ndarray  # (n,)
    diagonal: np.ndarray  # (n,)
    crossed: np.ndarray = field(default=None)  # (n, 6) bool, arm treated as crossed
    theta: np.ndarray = field(default=None)  # (n, 6), NaN where uncrossed

    def __len__(self):
        return len(self.centers)

    @property
    def any_crossed(self):
        return self.crossed.any(axis=1)

    def take(self, idx) -> "StencilBatch":
        return StencilBatch(
            self.centers[idx], self.h, self.points[idx], self.plus[idx], self.coef[idx],
            self.rhs[idx], self.diagonal[idx], self.crossed[idx], self.theta[idx],
        )

    def row(self, i) -> StencilAssembly:
        terms = [
            (self.points[i, j].copy(), Side(int(self.plus[i, j])), float(self.coef[i, j]))
            for j in range(7)
        ]
        return StencilAssembly(self.centers[i].copy(), self.h, terms, float(self.rhs[i]), float(self.diagonal[i]))


def crossed_arm_terms(mu_near, mu_far, theta, a, b_a, h: float, correction_sign: float | None = None):
    """Coefficient weight and right-hand-side change of one crossed arm.

    The row gains ``+w`` on the center and ``-w`` on the far point (evaluated
    on the far side); ``d_rhs`` carries the known jump terms.
    """
    if correction_sign is None:
        correction_sign = JUMP_CORRECTION_SIGN
    mu_hat = mu_near * mu_far / (theta * mu_far + (1.0 - theta) * mu_near)
    w = mu_hat / (h * h)
    d_rhs = correction_sign * mu_hat * (a / (h * h) + (1.0 - theta) * b_a / (h * mu_far))
    return w, d_rhs


def assemble_batch(problem: ProblemSpec, centers, h: float, *, correction_sign: float | None = None) -> StencilBatch:
    """Vectorized assembly at many centers for one cell width."""
    if correction_sign is None:
        correction_sign = JUMP_CORRECTION_SIGN
    c = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    n = len(c)
    h = float(h)
    lo, hi = problem.domain
    tol = 1e-12 * max(1.0, hi - lo)
    if np.any(c - h < lo - tol) or np.any(c + h > hi + tol):
        bad = np.flatnonzero(np.any((c - h < lo - tol) | (c + h > hi + tol), axis=1))[0]
        raise OutOfDomain(f"cell of width {h} at {tuple(c[bad])} leaves the domain [{lo}, {hi}]^3")

    ls = problem.level_set
    s_plus = ls.is_plus(c)
    sigma = np.where(s_plus, -1.0, 1.0)

    points = np.empty((n, 7, 3))
    plus = np.empty((n, 7), dtype=bool)
    coef = np.zeros((n, 7))
    crossed_all = np.zeros((n, 6), dtype=bool)
    theta_all = np.full((n, 6), np.nan)
    points[:, 0] = c
    plus[:, 0] = s_plus
    rhs = problem.sided("f", c, s_plus)
    diag = problem.sided("k", c, s_plus)
    inv_h2 = 1.0 / (h * h)

    for arm, e in enumerate(ARM_DIRECTIONS):
        j = arm + 1
        q = c + h * e
        points[:, j] = q
        q_plus = ls.is_plus(q)
        crossed = q_plus != s_plus
        if np.any(crossed):
            cb = ls.crossings(c[crossed], q[crossed])
            theta = cb.theta
            snapped = (theta < THETA_SNAP) | (theta > 1.0 - THETA_SNAP)
            idx = np.flatnonzero(crossed)
            crossed[idx[snapped]] = False
            keep = ~snapped
            idx, theta = idx[keep], theta[keep]
            xg, nrm = cb.location[keep], cb.normal[keep]
        uncrossed = ~crossed

        # uncrossed (or snapped) arm: far point evaluated on the center's side
        if np.any(uncrossed):
            face = c[uncrossed] + 0.5 * h * e
            mu_f = problem.sided("mu", face, s_plus[uncrossed])
            coef[uncrossed, 0] += mu_f * inv_h2
            coef[uncrossed, j] = -mu_f * inv_h2
            plus[uncrossed, j] = s_plus[uncrossed]

        if np.any(crossed):
            near_plus = s_plus[idx]
            mu_near = problem.sided("mu", xg, near_plus)
            mu_far = problem.sided("mu", xg, ~near_plus)
            sg = sigma[idx]
            a = sg * problem.alpha(xg)
            b_a = sg * problem.beta(xg) * (nrm @ e)
            w, d_rhs = crossed_arm_terms(mu_near, mu_far, theta, a, b_a, h, correction_sign)
            coef[idx, 0] += w
            coef[idx, j] = -w
            plus[idx, j] = ~near_plus
            rhs[idx] += d_rhs
            crossed_all[idx, arm] = True
            theta_all[idx, arm] = theta

    diag = diag + coef[:, 0]
    coef[:, 0] = diag
    return StencilBatch(c, h, points, plus, coef, rhs, diag, crossed_all, theta_all)


def assemble(problem: ProblemSpec, p, h: float) -> StencilAssembly:
    return assemble_batch(problem, np.asarray(p, dtype=np.float64).reshape(1, 3), h).row(0)


def _as_batch(assembly) -> StencilBatch:
    if isinstance(assembly, StencilBatch):
        return assembly
    pts = np.array([t[0] for t in assembly.terms])[None]
    plus = np.array([int(t[1]) == Side.PLUS for t in assembly.terms])[None]
    coef = np.array([t[2] for t in assembly.terms])[None]
    return StencilBatch(
        np.asarray(assembly.center)[None], assembly.h, pts, plus, coef,
        np.array([assembly.rhs]), np.array([assembly.diagonal]),
        np.zeros((1, 6), dtype=bool), np.full((1, 6), np.nan),
    )


def row_values(batch: StencilBatch, pair: SolutionPair) -> np.ndarray:
    """Network evaluations at every stencil point, shape (n, 7)."""
    vals = pair.evaluate(batch.points.reshape(-1, 3), batch.plus.reshape(-1))
    return vals.reshape(batch.coef.shape)


def residuals_from_values(batch: StencilBatch, values):
    """(r, raw) for rows given stencil-point values of shape (n, 7)."""
    raw = np.einsum("nj,nj->n", batch.coef, values) - batch.rhs
    return raw / batch.diagonal, raw


def residual(assembly, pair: SolutionPair):
    batch = _as_batch(assembly)
    r, raw = residuals_from_values(batch, row_values(batch, pair))
    if isinstance(assembly, StencilAssembly):
        return PointResidual(float(r[0]), float(raw[0]))
    return r, raw


def residual_cotangents(assembly, pair: SolutionPair):
    """Cotangents of ``r**2`` with respect to each stencil evaluation."""
    batch = _as_batch(assembly)
    r, _ = residuals_from_values(batch, row_values(batch, pair))
    cot = 2.0 * r[:, None] * batch.coef / batch.diagonal[:, None]
    if isinstance(assembly, StencilAssembly):
        return [(batch.points[0, j].copy(), Side(int(batch.plus[0, j])), float(cot[0, j])) for j in range(7)]
    return cot


def point_loss_gradient(assembly: StencilAssembly, pair: SolutionPair) -> np.ndarray:
    """Gradient of r**2 for one row, assembled from per-term cotangents."""
    g_minus = np.zeros(pair.net_minus.parameter_count)
    g_plus = np.zeros(pair.net_plus.parameter_count)
    for point, side, ct in residual_cotangents(assembly, pair):
        if side == Side.PLUS:
            g_plus += backward(pair.net_plus, point, ct)
        else:
            g_minus += backward(pair.net_minus, point, ct)
    return np.concatenate([g_minus, g_plus])


def boundary_residual(problem: ProblemSpec, pair: SolutionPair, p_b):
    p = np.asarray(p_b, dtype=np.float64)
    res = evaluate_solution(pair, problem.level_set, p) - problem.g(p)
    return float(res) if p.ndim == 1 else res


def exact_row_residual(batch: StencilBatch, exact_minus: Expression, exact_plus: Expression):
    """(r, raw) with an analytic solution substituted for the networks."""
    pts = batch.points.reshape(-1, 3)
    flag = batch.plus.reshape(-1)
    vals = np.empty(len(pts))
    if np.any(~flag):
        vals[~flag] = exact_minus(pts[~flag])
    if np.any(flag):
        vals[flag] = exact_plus(pts[flag])
    return residuals_from_values(batch, vals.reshape(batch.coef.shape))


__all__ = [
    "ProblemSpec",
    "StencilAssembly",
    "StencilBatch",
    "PointResidual",
    "assemble",
    "assemble_batch",
    "crossed_arm_terms",
    "residual",
    "residual_cotangents",
    "point_loss_gradient",
    "boundary_residual",
    "row_values",
    "residuals_from_values",
    "exact_row_residual",
]
