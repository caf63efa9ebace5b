"""Sine-activated MLP surrogates for the solution on each side of the interface.

Hidden layers apply ``sin(omega0 * (W h + b))``; the output layer is affine.
Gradients are reverse accumulation written out for this fixed structure: the
training loss is affine in network outputs, so every gradient reduces to a
weighted sum of per-point output gradients, i.e. ``backward`` with a vector of
cotangents.

Forward passes use ``np.einsum`` rather than BLAS ``matmul`` so that each
point's output is bitwise independent of how a batch is split (BLAS blocking
changes the summation order per row).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArchitecture
from .fileio import atomic_write_text

PAPER_LAYER_SIZES = (3, 10, 10, 10, 10, 10, 1)


@dataclass
class SineMlp:
    layer_sizes: tuple
    weights: list  # weights[l] has shape (fan_out, fan_in)
    biases: list
    omega0: float = 1.0

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def __call__(self, points):
        return forward(self, points)


@dataclass
class SolutionPair:
    net_minus: SineMlp
    net_plus: SineMlp
    seed: int | None = None

    @property
    def parameter_count(self) -> int:
        return self.net_minus.parameter_count + self.net_plus.parameter_count

    def nets(self):
        return (self.net_minus, self.net_plus)

    def evaluate(self, points, is_plus):
        """Evaluate net_plus where ``is_plus`` is True, net_minus elsewhere."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        flag = np.asarray(is_plus, dtype=bool).reshape(-1)
        out = np.empty(len(pts))
        if np.any(~flag):
            out[~flag] = forward(self.net_minus, pts[~flag])
        if np.any(flag):
            out[flag] = forward(self.net_plus, pts[flag])
        return out


def _check_sizes(layer_sizes):
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or sizes[0] != 3 or sizes[-1] != 1 or min(sizes) < 1:
        raise InvalidArchitecture(f"layer sizes must start with 3, end with 1, all positive: {sizes}")
    return sizes


def init(layer_sizes, seed, omega0: float = 1.0) -> SineMlp:
    """Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights and zero biases.

    ``[3, 1]`` (no hidden layer) is accepted as a purely affine model.
    """
    sizes = _check_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return SineMlp(sizes, weights, biases, float(omega0))


def init_pair(layer_sizes=PAPER_LAYER_SIZES, seed=0, omega0: float = 1.0) -> SolutionPair:
    ss_minus, ss_plus = np.random.SeedSequence(seed).spawn(2)
    return SolutionPair(init(layer_sizes, ss_minus, omega0), init(layer_sizes, ss_plus, omega0), seed)


def _affine(h, w, b):
    return np.einsum("nk,jk->nj", h, w) + b


def _forward_trace(net: SineMlp, pts):
    hs, zs = [pts], []
    h = pts
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = _affine(h, w, b)
        zs.append(z)
        h = np.sin(net.omega0 * z)
        hs.append(h)
    out = _affine(h, net.weights[-1], net.biases[-1])[:, 0]
    return out, hs, zs


def forward(net: SineMlp, points):
    p = np.asarray(points, dtype=np.float64)
    out, _, _ = _forward_trace(net, p.reshape(-1, 3))
    if p.ndim == 1:
        return float(out[0])
    return out.reshape(p.shape[:-1])


# Rows per chunk in ``linearize``. Keeping per-layer temporaries small keeps
# them in cache, so cost stays linear in the number of points.
CHUNK_ROWS = 2048


def _chunk_vjp(net: SineMlp, hs, zs, ct):
    grads = []
    delta = ct[:, None]
    for layer in range(len(net.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append((delta.T @ hs[layer]).ravel())
        if layer == 0:
            break
        delta = (delta @ net.weights[layer]) * (net.omega0 * np.cos(net.omega0 * zs[layer - 1]))
    return np.concatenate(grads[::-1])


def linearize(net: SineMlp, points):
    """Forward pass that keeps its trace.

    Returns ``(outputs, vjp)`` where ``vjp(cotangents)`` gives the flat gradient
    of ``sum_i cotangents[i] * outputs[i]``. Rows are processed in chunks of
    ``CHUNK_ROWS``; chunk gradients are added in order.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    bounds = list(range(0, len(p), CHUNK_ROWS)) + [len(p)]
    traces = [_forward_trace(net, p[a:b]) for a, b in zip(bounds, bounds[1:])]
    out = np.concatenate([t[0] for t in traces]) if traces else np.zeros(0)

    def vjp(cotangent):
        ct = np.broadcast_to(np.asarray(cotangent, dtype=np.float64), (len(p),))
        grad = np.zeros(net.parameter_count)
        for (a, b), (_, hs, zs) in zip(zip(bounds, bounds[1:]), traces):
            grad += _chunk_vjp(net, hs, zs, ct[a:b])
        return grad

    return out, vjp


def backward(net: SineMlp, points, cotangent) -> np.ndarray:
    """Gradient of ``sum_i cotangent[i] * forward(net, points[i])`` with respect
    to the parameters of ``net``, flattened in canonical order."""
    return linearize(net, points)[1](cotangent)


# --------------------------------------------------------------------------
# flat parameter vectors

def flatten_net(net: SineMlp) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(net.weights, net.biases)])


def unflatten_net(template: SineMlp, vec) -> SineMlp:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != template.parameter_count:
        raise ValueError(f"expected {template.parameter_count} parameters, got {vec.size}")
    weights, biases, k = [], [], 0
    for w, b in zip(template.weights, template.biases):
        weights.append(vec[k : k + w.size].reshape(w.shape).copy())
        k += w.size
        biases.append(vec[k : k + b.size].copy())
        k += b.size
    return SineMlp(template.layer_sizes, weights, biases, template.omega0)


def flatten(pair: SolutionPair) -> np.ndarray:
    return np.concatenate([flatten_net(pair.net_minus), flatten_net(pair.net_plus)])


def unflatten(template: SolutionPair, vec) -> SolutionPair:
    vec = np.asarray(vec, dtype=np.float64)
    n_minus = template.net_minus.parameter_count
    if vec.size != template.parameter_count:
        raise ValueError(f"expected {template.parameter_count} parameters, got {vec.size}")
    return SolutionPair(
        unflatten_net(template.net_minus, vec[:n_minus]),
        unflatten_net(template.net_plus, vec[n_minus:]),
        template.seed,
    )


def evaluate_solution(pair: SolutionPair, ls, p):
    """Value of the surrogate at ``p``, choosing the network by level-set side."""
    p = np.asarray(p, dtype=np.float64)
    out = pair.evaluate(p.reshape(-1, 3), ls.is_plus(p.reshape(-1, 3)))
    return float(out[0]) if p.ndim == 1 else out.reshape(p.shape[:-1])


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(pair: SolutionPair, path, problem_hash: str = "") -> None:
    nm = pair.net_minus
    if tuple(nm.layer_sizes) != tuple(pair.net_plus.layer_sizes):
        raise ValueError("checkpoint format requires identical architectures")
    doc = {
        "layer_sizes": list(nm.layer_sizes),
        "omega0": nm.omega0,
        "seed": pair.seed,
        "problem_hash": problem_hash,
        "params": [float(f"{v:.17g}") for v in flatten(pair)],
    }
    # json emits repr(float), which round-trips exactly
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Returns ``(pair, problem_hash)``."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    sizes = doc["layer_sizes"]
    template = init_pair(sizes, 0, doc.get("omega0", 1.0))
    pair = unflatten(template, np.array(doc["params"], dtype=np.float64))
    pair.seed = doc.get("seed")
    return pair, doc.get("problem_hash", "")


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
