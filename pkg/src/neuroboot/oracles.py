"""Verification oracles for the kernel, gradients, and determinism.

Each oracle returns an ``OracleResult``; ``run_all`` is what ``neuroboot check``
executes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import AnalyticLevelSet
from .kernel import ProblemSpec, assemble_batch, crossed_arm_terms, exact_row_residual
from .surrogate import flatten, init_pair, unflatten
from .training import Batch, TrainConfig, _evaluate_rows, _prepare, loss_and_grad, random_boundary_points, train

JUMP_THETAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
JUMP_MUS = (0.5, 1.0, 3.0)
JUMP_VALUES = (-1.0, 0.0, 2.0)
JUMP_TOL = 1e-12

TRUNCATION_RESOLUTIONS = (8, 16, 32, 64)
TRUNCATION_POINTS = 10_000
ORDER_TARGET, ORDER_TOL = 2.0, 0.25

GRADIENT_TOL = 1e-5
FD_STEP = 1e-6


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# --------------------------------------------------------------------------
# 1D jump exactness

def _jump_rows(h, cases):
    """Residuals of the two x-arm rows adjacent to a planar interface
    ``x = theta*h`` for every case, using the kernel's crossed-arm terms.

    Row A is centered at the origin (minus side, +x arm crossed at fraction
    theta); row B at x = h (plus side, -x arm crossed at 1 - theta). The
    uncrossed opposite arm uses the center side's coefficient; the y and z arms
    see equal values of the x-only solution and contribute nothing.
    """
    theta, mu_m, mu_p, a, b = (np.asarray(c, dtype=np.float64) for c in zip(*cases))
    xg = theta * h
    slope_m = 0.7
    slope_p = (b + mu_m * slope_m) / mu_p

    def u_minus(x):
        return 0.3 + slope_m * x

    def u_plus(x):
        return 0.3 + slope_m * xg + a + slope_p * (x - xg)

    # row A: sigma = +1, arm direction +x, normal +x
    w, d_rhs = crossed_arm_terms(mu_m, mu_p, theta, a, b, h)
    res_a = w * (u_minus(0.0) - u_plus(h)) + mu_m / h**2 * (u_minus(0.0) - u_minus(-h)) - d_rhs
    # row B: sigma = -1, arm direction -x, so a -> -alpha and b_a -> -beta*(-1)
    w, d_rhs = crossed_arm_terms(mu_p, mu_m, 1.0 - theta, -a, b, h)
    res_b = w * (u_plus(h) - u_minus(0.0)) + mu_p / h**2 * (u_plus(h) - u_plus(2 * h)) - d_rhs
    return res_a, res_b, (u_minus, u_plus)


def _assembled_case(theta, mu_m, mu_p, a, b, h):
    """Raw residuals of the two rows from full assembly of one case."""
    xg = theta * h
    problem = ProblemSpec.from_strings(
        AnalyticLevelSet(f"x-{xg!r}"), (-2.0, 2.0),
        mu_minus=repr(mu_m), mu_plus=repr(mu_p), k_minus="0", k_plus="0",
        f_minus="0", f_plus="0", alpha=repr(a), beta=repr(b), g="0",
    )
    _, _, (u_minus, u_plus) = _jump_rows(h, [(theta, mu_m, mu_p, a, b)])
    rows = assemble_batch(problem, [[0.0, 0.0, 0.0], [h, 0.0, 0.0]], h)
    x = rows.points[..., 0]
    vals = np.where(rows.plus, u_plus(x), u_minus(x))
    raw = np.einsum("nj,nj->n", rows.coef, vals) - rows.rhs
    if not rows.crossed.any(axis=1).all():
        return math.inf
    return float(np.max(np.abs(raw)))


def jump_exactness(h: float = 0.5) -> OracleResult:
    """Every crossed-arm row reproduces a piecewise-linear solution exactly.

    All parameter combinations go through the kernel's crossed-arm terms in
    one vectorized pass; a few of them are also pushed through full assembly
    (root finding, normals, sides) to check the wiring.
    """
    cases = list(itertools.product(JUMP_THETAS, JUMP_MUS, JUMP_MUS, JUMP_VALUES, JUMP_VALUES))
    res_a, res_b, _ = _jump_rows(h, cases)
    per_case = np.maximum(np.abs(res_a), np.abs(res_b))
    i = int(np.argmax(per_case))
    worst, worst_case = float(per_case[i]), cases[i]
    for case in cases[:: len(cases) // 8]:
        m = _assembled_case(*case, h)
        if m > worst:
            worst, worst_case = m, case
    count = 2 * len(cases)
    passed = worst < JUMP_TOL
    return OracleResult(
        "jump exactness",
        passed,
        f"max |residual| = {worst:.3e} over {count} rows (tol {JUMP_TOL:g})",
        {"max_residual": worst, "worst_case": worst_case},
    )


# --------------------------------------------------------------------------
# manufactured-solution truncation

def truncation_sweep(problem: ProblemSpec, exact_minus, exact_plus, resolutions=TRUNCATION_RESOLUTIONS,
                     n_points: int = TRUNCATION_POINTS, seed: int = 0) -> OracleResult:
    """Substitute the exact solution into assembled rows at random centers.

    The same centers are used at every width; they lie inside the margin of
    the coarsest cell. Uncrossed rows are judged on the unpreconditioned
    residual (the local truncation error, expected O(h^2)); crossed rows on
    the preconditioned residual, which must not grow as h shrinks.
    """
    lo, hi = problem.domain
    extent = hi - lo
    h_max = extent / min(resolutions)
    rng = np.random.default_rng(seed)
    centers = rng.uniform(lo + h_max, hi - h_max, size=(n_points, 3))
    rows = []
    for n in sorted(resolutions):
        h = extent / n
        batch = assemble_batch(problem, centers, h)
        r, raw = exact_row_residual(batch, exact_minus, exact_plus)
        crossed = batch.any_crossed
        rows.append({
            "N": n,
            "h": h,
            "uncrossed_raw": float(np.max(np.abs(raw[~crossed]))) if np.any(~crossed) else 0.0,
            "uncrossed_r": float(np.max(np.abs(r[~crossed]))) if np.any(~crossed) else 0.0,
            "crossed_r": float(np.max(np.abs(r[crossed]))) if np.any(crossed) else 0.0,
            "crossed_raw": float(np.max(np.abs(raw[crossed]))) if np.any(crossed) else 0.0,
            "n_crossed": int(crossed.sum()),
        })
    exact_scheme = all(row["uncrossed_raw"] < 1e-10 for row in rows)
    orders = []
    for a, b in zip(rows, rows[1:]):
        if a["uncrossed_raw"] > 0 and b["uncrossed_raw"] > 0:
            orders.append(math.log2(a["uncrossed_raw"] / b["uncrossed_raw"]))
        else:
            orders.append(math.nan)
    order_ok = exact_scheme or all(abs(o - ORDER_TARGET) <= ORDER_TOL for o in orders)
    crossed_vals = [row["crossed_r"] for row in rows if row["n_crossed"]]
    crossed_ok = all(b <= a for a, b in zip(crossed_vals, crossed_vals[1:])) and all(
        math.isfinite(v) for v in crossed_vals
    )
    if exact_scheme:
        detail = "uncrossed rows exact to rounding"
    else:
        detail = "uncrossed orders " + ", ".join(f"{o:.2f}" for o in orders)
    detail += "; crossed max r " + ", ".join(f"{v:.2e}" for v in crossed_vals) if crossed_vals else ""
    return OracleResult("truncation", order_ok and crossed_ok, detail,
                        {"rows": rows, "orders": orders, "order_ok": order_ok, "crossed_ok": crossed_ok})


# --------------------------------------------------------------------------
# gradient vs finite differences

def mixed_batch(problem: ProblemSpec, config: TrainConfig, n_crossed=4, n_uncrossed=3, n_boundary=3, seed=0) -> Batch:
    """Interior centers with and without interface crossings at the coarsest
    width, plus boundary points."""
    rng = np.random.default_rng(seed)
    lo, hi = problem.domain
    h0 = config.cell_widths(problem.extent)[0]
    cand = rng.uniform(lo + h0, hi - h0, size=(4000, 3))
    crossed = assemble_batch(problem, cand, h0).any_crossed
    pick_c = cand[crossed][:n_crossed]
    pick_u = cand[~crossed][: n_uncrossed + (n_crossed - len(pick_c))]
    interior = np.concatenate([pick_c, pick_u])
    boundary = random_boundary_points(rng, n_boundary, (lo, hi))
    return Batch(interior, boundary)


def finite_difference_gradient(fun, params, step=FD_STEP):
    g = np.empty_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = step
        g[i] = (fun(params + e) - fun(params - e)) / (2 * step)
    return g


def gradient_check(problem: ProblemSpec, config: TrainConfig, batch: Batch | None = None, seed: int = 0) -> OracleResult:
    """Analytic loss gradient against central differences over all parameters.

    The error is measured as ``||g - g_fd|| / ||g_fd||`` (2-norm).
    """
    pair = init_pair(config.layer_sizes, seed, config.omega0)
    if batch is None:
        batch = mixed_batch(problem, config, seed=seed)
    theta0 = flatten(pair)
    rows = _prepare(problem, batch, config)  # assembly does not depend on the parameters
    _, grad = _evaluate_rows(pair, rows, config)
    fd = finite_difference_gradient(lambda th: _evaluate_rows(unflatten(pair, th), rows, config)[0], theta0)
    rel = float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-300))
    return OracleResult(
        "gradient",
        rel < GRADIENT_TOL,
        f"relative error {rel:.2e} over {theta0.size} parameters (tol {GRADIENT_TOL:g})",
        {"relative_error": rel, "n_params": theta0.size, "grad": grad, "fd": fd},
    )


# --------------------------------------------------------------------------
# determinism

def determinism_check(problem: ProblemSpec, config: TrainConfig, epochs: int = 5) -> OracleResult:
    """Repeated runs give bitwise-identical histories; sharded gradients agree."""
    short = replace(config, epochs=epochs, workers=1, base_resolution=min(config.base_resolution, 8))
    h1 = [row[1] for row in train(problem, short).history]
    h2 = [row[1] for row in train(problem, short).history]
    same_history = h1 == h2

    batch = mixed_batch(problem, short, n_crossed=8, n_uncrossed=12, n_boundary=10, seed=1)
    pair = init_pair(short.layer_sizes, short.seed, short.omega0)
    ref_loss, ref_grad = loss_and_grad(problem, pair, batch, short)
    worst = 0.0
    losses_equal = True
    for w in (2, 4):
        loss, grad = loss_and_grad(problem, pair, batch, replace(short, workers=w))
        losses_equal &= loss == ref_loss
        worst = max(worst, float(np.max(np.abs(grad - ref_grad)) / np.max(np.abs(ref_grad))))
    passed = same_history and losses_equal and worst <= 1e-14
    return OracleResult(
        "determinism",
        passed,
        f"history identical: {same_history}; shard losses equal: {losses_equal}; max grad rel diff {worst:.1e}",
        {"same_history": same_history, "losses_equal": losses_equal, "grad_rel_diff": worst},
    )


def run_all(problem: ProblemSpec, config: TrainConfig, exact_minus, exact_plus) -> list[OracleResult]:
    results = [jump_exactness()]
    if exact_minus is not None and exact_plus is not None:
        results.append(truncation_sweep(problem, exact_minus, exact_plus))
    else:
        results.append(OracleResult("truncation", False, "config provides no exact solution"))
    grad_cfg = replace(config, refinement_levels=2)
    results.append(gradient_check(problem, grad_cfg))
    results.append(determinism_check(problem, config))
    return results
