"""Error measurement against exact solutions, convergence orders, field export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveError
from .expr import Expression
from .fileio import atomic_write_text, write_csv


@dataclass
class ErrorReport:
    resolution: int
    rmse: float
    linf: float
    order_rmse: float | None = None
    order_linf: float | None = None
    epochs: int = 0
    seconds_per_epoch: float = 0.0


REPORT_HEADER = ("N", "rmse", "order_rmse", "linf", "order_linf", "seconds_per_epoch", "epochs")


def nodal_grid(m: int, domain=(-1.0, 1.0)) -> np.ndarray:
    """All (m+1)^3 nodes, x fastest."""
    lo, hi = domain
    axis = np.linspace(lo, hi, m + 1)
    Z, Y, X = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def exact_values(points, is_plus, exact_minus: Expression, exact_plus: Expression):
    out = np.empty(len(points))
    if np.any(~is_plus):
        out[~is_plus] = exact_minus(points[~is_plus])
    if np.any(is_plus):
        out[is_plus] = exact_plus(points[is_plus])
    return out


def evaluate_errors(pair, problem, exact_minus: Expression, exact_plus: Expression, m: int = 64):
    """(rmse, linf) over the (m+1)^3 nodal grid on both subdomains.

    ``pair`` is anything with ``evaluate(points, is_plus) -> values``.
    """
    if m < 2:
        raise ValueError("evaluation grid needs M >= 2")
    pts = nodal_grid(m, problem.domain)
    plus = problem.level_set.is_plus(pts)
    err = pair.evaluate(pts, plus) - exact_values(pts, plus, exact_minus, exact_plus)
    return float(np.sqrt(np.mean(err * err))), float(np.max(np.abs(err)))


def convergence_order(e_coarse: float, e_fine: float) -> float:
    if not (e_coarse > 0 and e_fine > 0):
        raise NonPositiveError(f"errors must be positive, got {e_coarse}, {e_fine}")
    return math.log2(e_coarse / e_fine)


def fill_orders(reports: list[ErrorReport]) -> list[ErrorReport]:
    """Set orders from each report's predecessor (sorted by resolution)."""
    reports = sorted(reports, key=lambda r: r.resolution)
    for prev, cur in zip(reports, reports[1:]):
        cur.order_rmse = convergence_order(prev.rmse, cur.rmse)
        cur.order_linf = convergence_order(prev.linf, cur.linf)
    return reports


def write_report_csv(reports, path):
    rows = [
        (r.resolution, r.rmse, r.order_rmse, r.linf, r.order_linf, r.seconds_per_epoch, r.epochs)
        for r in reports
    ]
    return write_csv(path, REPORT_HEADER, rows)


def read_report_csv(path) -> list[ErrorReport]:
    def opt(s):
        return float(s) if s != "" else None

    with open(path, newline="", encoding="utf-8") as fh:
        return [
            ErrorReport(int(row["N"]), float(row["rmse"]), float(row["linf"]), opt(row["order_rmse"]),
                        opt(row["order_linf"]), int(row["epochs"]), float(row["seconds_per_epoch"]))
            for row in csv.DictReader(fh)
        ]


# --------------------------------------------------------------------------
# field export

def sample_field(pair, problem, m: int):
    pts = nodal_grid(m, problem.domain)
    plus = problem.level_set.is_plus(pts)
    return pts, pair.evaluate(pts, plus), np.asarray(problem.level_set.phi(pts))


def export_field(pair, problem, m: int, path):
    """Legacy VTK STRUCTURED_POINTS (ASCII) with arrays ``u`` and ``phi``."""
    if m < 2:
        raise ValueError("export grid needs M >= 2")
    lo, hi = problem.domain
    spacing = (hi - lo) / m
    _, u, phi = sample_field(pair, problem, m)
    n = m + 1
    lines = [
        "# vtk DataFile Version 3.0",
        "neuroboot solution field",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n} {n} {n}",
        f"ORIGIN {lo!r} {lo!r} {lo!r}",
        f"SPACING {spacing!r} {spacing!r} {spacing!r}",
        f"POINT_DATA {n**3}",
    ]
    for name, arr in (("u", u), ("phi", phi)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(" ".join(f"{v:.17g}" for v in arr[i : i + 9]) for i in range(0, arr.size, 9))
    try:
        return atomic_write_text(path, "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write field to {path}: {exc}") from exc


def export_field_csv(pair, problem, m: int, path):
    if m < 2:
        raise ValueError("export grid needs M >= 2")
    pts, u, phi = sample_field(pair, problem, m)
    rows = np.column_stack([pts, u, phi])
    try:
        return write_csv(path, ("x", "y", "z", "u", "phi"), rows.tolist())
    except OSError as exc:
        raise OSError(f"cannot write field to {path}: {exc}") from exc


def read_field_csv(path):
    """Returns (points, u, phi)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :3], data[:, 3], data[:, 4]


def read_vtk_scalars(path) -> dict:
    """Minimal reader for files written by :func:`export_field`."""
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split("\n")
    out, dims = {}, None
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("DIMENSIONS"):
            dims = tuple(int(v) for v in line.split()[1:])
        if line.startswith("SCALARS"):
            name = line.split()[1]
            count = int(np.prod(dims))
            vals = []
            i += 2
            while len(vals) < count:
                vals.extend(float(v) for v in tokens[i].split())
                i += 1
            out[name] = np.array(vals)
            continue
        i += 1
    out["dimensions"] = dims
    return out


# --------------------------------------------------------------------------
# interface jump probe

def jump_probe(pair, problem, n_probes: int = 256, offset: float = 1e-3, seed: int = 0):
    """Measured solution jumps across the interface.

    Random segments through the domain are intersected with the interface;
    at each crossing the surrogate is evaluated at ``x -/+ offset * n``.
    Returns ``(measured_jump, alpha_at_crossing, locations)``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = problem.domain
    ls = problem.level_set
    found_loc, found_n = [], []
    total = 0
    for _ in range(64):
        a = rng.uniform(lo, hi, size=(4 * n_probes, 3))
        b = rng.uniform(lo, hi, size=(4 * n_probes, 3))
        cb = ls.crossings(a, b)
        found_loc.append(cb.location[cb.mask])
        found_n.append(cb.normal[cb.mask])
        total += int(cb.mask.sum())
        if total >= n_probes:
            break
    loc = np.concatenate(found_loc)[:n_probes]
    nrm = np.concatenate(found_n)[:n_probes]
    p_minus = np.clip(loc - offset * nrm, lo, hi)
    p_plus = np.clip(loc + offset * nrm, lo, hi)
    u_plus = pair.evaluate(p_plus, ls.is_plus(p_plus))
    u_minus = pair.evaluate(p_minus, ls.is_plus(p_minus))
    return u_plus - u_minus, problem.alpha(loc) if len(loc) else np.zeros(0), loc
