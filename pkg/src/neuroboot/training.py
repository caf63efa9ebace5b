"""Collocation sampling, the preconditioned residual loss, and Adam training.

Loss for a batch with interior centers ``P`` and boundary points ``B``::

    L = (1/|P|) sum_p sum_l w_l r_p(h_l)^2 + lam_b (1/|B|) sum_b (u(b) - g(b))^2

with ``h_l = h0 / 2**l``. Every row is affine in network outputs, so the
gradient is one vector-Jacobian product per network with per-point cotangents.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalFailure
from .kernel import ProblemSpec, StencilBatch, assemble_batch
from .surrogate import PAPER_LAYER_SIZES, SolutionPair, flatten, init_pair, linearize, unflatten

log = logging.getLogger(__name__)

GRID_NODES = "grid"
UNIFORM_RANDOM = "uniform"
SAMPLER_ALIASES = {
    "grid": GRID_NODES, "gridnodes": GRID_NODES, "grid_nodes": GRID_NODES,
    "uniform": UNIFORM_RANDOM, "uniformrandom": UNIFORM_RANDOM, "uniform_random": UNIFORM_RANDOM,
}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10_000
    batch_size: int = 32 * 32 * 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    base_resolution: int = 16
    refinement_levels: int = 1
    level_weights: tuple | None = None
    boundary_weight: float = 1.0
    sampler_mode: str = GRID_NODES
    seed: int = 0
    workers: int = 1
    layer_sizes: tuple = PAPER_LAYER_SIZES
    omega0: float = 1.0
    # evaluate each distinct grid-node stencil point once per batch (GridNodes
    # only); exact, and several times cheaper at small N
    share_stencil_points: bool = True

    def __post_init__(self):
        mode = SAMPLER_ALIASES.get(str(self.sampler_mode).lower())
        if mode is None:
            raise ValueError(f"unknown sampler_mode {self.sampler_mode!r}")
        object.__setattr__(self, "sampler_mode", mode)
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        n = self.base_resolution
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if n < 4 or n & (n - 1):
            raise ValueError(f"base_resolution must be a power of two >= 4, got {n}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.refinement_levels < 1:
            raise ValueError("refinement_levels must be >= 1")
        # None means all ones; it stays None so that changing
        # refinement_levels with dataclasses.replace keeps working
        if self.level_weights is not None:
            w = tuple(float(v) for v in self.level_weights)
            if len(w) != self.refinement_levels:
                raise ValueError(f"need {self.refinement_levels} level weights, got {len(w)}")
            object.__setattr__(self, "level_weights", w)

    @property
    def weights(self) -> tuple:
        """Per-level loss weights with the default filled in."""
        if self.level_weights is None:
            return (1.0,) * self.refinement_levels
        return self.level_weights

    def cell_widths(self, extent: float):
        h0 = extent / self.base_resolution
        return [h0 / 2**level for level in range(self.refinement_levels)]


@dataclass
class OptimizerState:
    t: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int):
        return cls(0, np.zeros(n), np.zeros(n))


@dataclass
class Batch:
    interior: np.ndarray  # (n, 3)
    boundary: np.ndarray  # (m, 3)
    # Row indices into a precomputed point set (grid mode), else None.
    interior_ids: np.ndarray | None = None
    boundary_ids: np.ndarray | None = None


@dataclass
class TrainResult:
    pair: SolutionPair
    history: list = field(default_factory=list)  # (epoch, loss, seconds)

    @property
    def losses(self):
        return np.array([row[1] for row in self.history])

    @property
    def seconds_per_epoch(self) -> float:
        return float(np.mean([row[2] for row in self.history])) if self.history else 0.0


# --------------------------------------------------------------------------
# sampling

def grid_nodes(n: int, domain=(-1.0, 1.0)):
    """Interior and boundary nodes of the (n+1)^3 nodal grid, x fastest."""
    lo, hi = domain
    axis = np.linspace(lo, hi, n + 1)
    Z, Y, X = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    idx = np.stack(np.meshgrid(*(np.arange(n + 1),) * 3, indexing="ij"), -1).reshape(-1, 3)[:, ::-1]
    on_face = np.any((idx == 0) | (idx == n), axis=1)
    return pts[~on_face], pts[on_face]


def _split(n_items: int, n_batches: int):
    return np.array_split(np.arange(n_items), n_batches)


def _epoch_rng(seed: int, epoch_index: int):
    return np.random.default_rng([int(seed), int(epoch_index)])


def sample_epoch(config: TrainConfig, domain, epoch_index: int) -> list[Batch]:
    """Shuffled batches for one epoch, determined by ``(seed, epoch_index)``.

    Interior points are split into ``ceil(n_interior / batch_size)`` batches
    and boundary points are spread over the same number of batches.
    """
    lo, hi = map(float, domain)
    n = config.base_resolution
    rng = _epoch_rng(config.seed, epoch_index)
    if config.sampler_mode == GRID_NODES:
        interior, boundary = grid_nodes(n, (lo, hi))
    else:
        h0 = (hi - lo) / n
        interior = rng.uniform(lo + h0, hi - h0, size=(n**3, 3))
        boundary = random_boundary_points(rng, 6 * (n + 1) ** 2, (lo, hi))
    perm_i = rng.permutation(len(interior))
    perm_b = rng.permutation(len(boundary))
    n_batches = max(1, math.ceil(len(interior) / config.batch_size))
    batches = []
    for bi, bb in zip(_split(len(interior), n_batches), _split(len(boundary), n_batches)):
        ii, ib = perm_i[bi], perm_b[bb]
        if config.sampler_mode == GRID_NODES:
            batches.append(Batch(interior[ii], boundary[ib], ii, ib))
        else:
            batches.append(Batch(interior[ii], boundary[ib]))
    return batches


def random_boundary_points(rng, count: int, domain=(-1.0, 1.0)):
    lo, hi = domain
    pts = rng.uniform(lo, hi, size=(count, 3))
    face = rng.integers(0, 6, size=count)
    axis = face // 2
    pts[np.arange(count), axis] = np.where(face % 2 == 0, lo, hi)
    return pts


# --------------------------------------------------------------------------
# loss and gradient

@dataclass
class _Rows:
    """Everything about a batch that does not depend on network parameters."""

    levels: list  # StencilBatch per level
    boundary: np.ndarray
    boundary_plus: np.ndarray
    boundary_g: np.ndarray
    # optional deduplication data: compact node ids per level (n, 7) and per
    # boundary point, plus the coordinates and side of every node id
    keys: list | None = None
    boundary_keys: np.ndarray | None = None
    node_points: np.ndarray | None = None
    node_plus: np.ndarray | None = None


def _prepare(problem: ProblemSpec, batch: Batch, config: TrainConfig) -> _Rows:
    widths = config.cell_widths(problem.extent)
    levels = [assemble_batch(problem, batch.interior, h) for h in widths]
    bnd = np.asarray(batch.boundary, dtype=np.float64).reshape(-1, 3)
    bplus = problem.level_set.is_plus(bnd) if len(bnd) else np.zeros(0, dtype=bool)
    bg = problem.g(bnd) if len(bnd) else np.zeros(0)
    return _Rows(levels, bnd, bplus, bg)


def _take(rows: _Rows, ii, ib) -> _Rows:
    return _Rows(
        [lv.take(ii) for lv in rows.levels],
        rows.boundary[ib],
        rows.boundary_plus[ib],
        rows.boundary_g[ib],
        None if rows.keys is None else [k[ii] for k in rows.keys],
        None if rows.boundary_keys is None else rows.boundary_keys[ib],
        rows.node_points,
        rows.node_plus,
    )


def _lattice_keys(points, plus, lo, spacing, m):
    """Integer keys for points on a lattice of the given spacing, or None."""
    f = (points - lo) / spacing
    i = np.rint(f)
    if np.max(np.abs(f - i), initial=0.0) > 1e-6:
        return None
    i = i.astype(np.int64)
    return ((i[..., 0] * (m + 1) + i[..., 1]) * (m + 1) + i[..., 2]) * 2 + plus.astype(np.int64)


def _attach_keys(rows: _Rows, problem: ProblemSpec, config: TrainConfig):
    lo = problem.domain[0]
    finest = config.cell_widths(problem.extent)[-1]
    m = int(round(problem.extent / finest))
    keys = []
    for lv in rows.levels:
        k = _lattice_keys(lv.points, lv.plus, lo, finest, m)
        if k is None:
            return
        keys.append(k)
    bk = _lattice_keys(rows.boundary, rows.boundary_plus, lo, finest, m)
    if bk is None:
        return
    flat = np.concatenate([k.reshape(-1) for k in keys] + [bk])
    _, first, ids = np.unique(flat, return_index=True, return_inverse=True)
    all_pts = np.concatenate([lv.points.reshape(-1, 3) for lv in rows.levels] + [rows.boundary])
    all_plus = np.concatenate([lv.plus.reshape(-1) for lv in rows.levels] + [rows.boundary_plus])
    bounds = np.cumsum([0] + [k.size for k in keys])
    rows.keys = [ids[a:b].reshape(k.shape) for a, b, k in zip(bounds, bounds[1:], keys)]
    rows.boundary_keys = ids[bounds[-1]:]
    rows.node_points, rows.node_plus = all_pts[first], all_plus[first]


@dataclass
class _ShardOut:
    r: list  # per level preconditioned residuals
    b: np.ndarray  # boundary residuals
    grad: np.ndarray


def _shard_loss_terms(pair: SolutionPair, rows: _Rows, level_scale, boundary_scale) -> _ShardOut:
    """Residuals and the gradient of this shard's share of the global loss."""
    n_levels = len(rows.levels)
    pts = [lv.points.reshape(-1, 3) for lv in rows.levels] + [rows.boundary]
    plus = [lv.plus.reshape(-1) for lv in rows.levels] + [rows.boundary_plus]
    if rows.keys is not None:
        # each distinct node is evaluated once; a bitmap over node ids keeps
        # this linear in the batch size and the order sorted by id
        all_ids = np.concatenate([k.reshape(-1) for k in rows.keys] + [rows.boundary_keys])
        used = np.zeros(len(rows.node_points), dtype=bool)
        used[all_ids] = True
        uniq = np.flatnonzero(used)
        lookup = np.empty(len(used), dtype=np.intp)
        lookup[uniq] = np.arange(len(uniq))
        inverse = lookup[all_ids]
        eval_pts, eval_plus = rows.node_points[uniq], rows.node_plus[uniq]
    else:
        inverse = None
        eval_pts, eval_plus = np.concatenate(pts), np.concatenate(plus)

    vals_u = np.empty(len(eval_pts))
    vjps = []
    for flag, net in ((False, pair.net_minus), (True, pair.net_plus)):
        sel = eval_plus == flag
        out, vjp = linearize(net, eval_pts[sel])
        vals_u[sel] = out
        vjps.append((sel, vjp))
    vals = vals_u if inverse is None else vals_u[inverse]

    rs, cots = [], []
    k = 0
    for level, lv in enumerate(rows.levels):
        n7 = lv.coef.size
        v = vals[k : k + n7].reshape(lv.coef.shape)
        k += n7
        raw = np.einsum("nj,nj->n", lv.coef, v) - lv.rhs
        r = raw / lv.diagonal
        rs.append(r)
        cots.append((level_scale[level] * 2.0 * r / lv.diagonal)[:, None] * lv.coef)
    bres = vals[k:] - rows.boundary_g
    cots = [c.reshape(-1) for c in cots] + [boundary_scale * 2.0 * bres]
    cot = np.concatenate(cots)
    if inverse is not None:
        cot = np.bincount(inverse, weights=cot, minlength=len(eval_pts))
    grads = [vjp(cot[sel]) for sel, vjp in vjps]
    assert n_levels == len(rs)
    return _ShardOut(rs, bres, np.concatenate(grads))


def _loss_from_residuals(rs_per_level, bres, weights, boundary_weight):
    n_int = len(rs_per_level[0]) if rs_per_level else 0
    loss = 0.0
    if n_int:
        for w, r in zip(weights, rs_per_level):
            loss += w * float(np.dot(r, r)) / n_int
    if len(bres) and boundary_weight:
        loss += boundary_weight * float(np.dot(bres, bres)) / len(bres)
    return loss


def _evaluate_rows(pair, rows: _Rows, config: TrainConfig, executor=None):
    n_int = len(rows.levels[0]) if rows.levels else 0
    n_b = len(rows.boundary)
    level_scale = [w / n_int if n_int else 0.0 for w in config.weights]
    boundary_scale = config.boundary_weight / n_b if n_b else 0.0
    workers = config.workers
    if workers == 1:
        shards = [_shard_loss_terms(pair, rows, level_scale, boundary_scale)]
    else:
        parts = [
            _take(rows, ii, ib)
            for ii, ib in zip(np.array_split(np.arange(n_int), workers), np.array_split(np.arange(n_b), workers))
        ]
        if executor is None:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                shards = list(pool.map(lambda p: _shard_loss_terms(pair, p, level_scale, boundary_scale), parts))
        else:
            shards = list(executor.map(lambda p: _shard_loss_terms(pair, p, level_scale, boundary_scale), parts))
    rs = [np.concatenate([s.r[level] for s in shards]) for level in range(len(rows.levels))]
    bres = np.concatenate([s.b for s in shards])
    grad = shards[0].grad.copy()
    for s in shards[1:]:
        grad += s.grad
    loss = _loss_from_residuals(rs, bres, config.weights, config.boundary_weight)
    return loss, grad


def loss_and_grad(problem: ProblemSpec, pair: SolutionPair, batch: Batch, config: TrainConfig):
    """Loss of one batch and its gradient in flat parameter order."""
    rows = _prepare(problem, batch, config)
    return _evaluate_rows(pair, rows, config)


# --------------------------------------------------------------------------
# optimizer

def adam_step(state: OptimizerState, params, grad, config: TrainConfig):
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new_params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return OptimizerState(t, m, v), new_params


# --------------------------------------------------------------------------
# training loop

class _GridCache:
    """Assemblies for the fixed grid-node point set, built once per run."""

    def __init__(self, problem: ProblemSpec, config: TrainConfig):
        interior, boundary = grid_nodes(config.base_resolution, problem.domain)
        self.rows = _prepare(problem, Batch(interior, boundary), config)
        if config.share_stencil_points:
            _attach_keys(self.rows, problem, config)

    def rows_for(self, batch: Batch) -> _Rows:
        return _take(self.rows, batch.interior_ids, batch.boundary_ids)


def train(problem: ProblemSpec, config: TrainConfig, pair: SolutionPair | None = None, callback=None) -> TrainResult:
    """Train a solution pair; deterministic for a fixed seed and ``workers=1``.

    ``callback(epoch, loss, seconds, pair)`` is called after every epoch.
    """
    if pair is None:
        pair = init_pair(config.layer_sizes, config.seed, config.omega0)
    params = flatten(pair)
    state = OptimizerState.zeros(params.size)
    cache = _GridCache(problem, config) if config.sampler_mode == GRID_NODES else None
    result = TrainResult(pair)
    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            losses = []
            for batch in sample_epoch(config, problem.domain, epoch):
                rows = cache.rows_for(batch) if cache is not None else _prepare(problem, batch, config)
                loss, grad = _evaluate_rows(pair, rows, config, executor)
                if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                    raise NumericalFailure(f"non-finite loss {loss} at epoch {epoch}")
                state, params = adam_step(state, params, grad, config)
                pair = unflatten(pair, params)
                losses.append(loss)
            seconds = time.perf_counter() - t0
            epoch_loss = float(np.mean(losses))
            result.history.append((epoch, epoch_loss, seconds))
            if callback is not None:
                callback(epoch, epoch_loss, seconds, pair)
    finally:
        if executor is not None:
            executor.shutdown()
    result.pair = pair
    return result


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(config, **changes)
