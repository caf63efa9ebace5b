"""Level-set geometry: side classification, normals, and segment crossings.

Two variants share one interface. ``AnalyticLevelSet`` wraps an expression;
``SampledLevelSet`` trilinearly interpolates nodal values on a coarse uniform
grid. All queries accept a single point ``(3,)`` or a batch ``(n, 3)``.

Sign convention: phi < 0 is the interior subdomain (minus side), phi > 0 the
exterior (plus side), and phi == 0 is classified as minus.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DegenerateGradient, OutOfDomain
from .expr import Expression, parse

ANALYTIC_FD_STEP = 1e-5
GRADIENT_FLOOR = 1e-12
BISECTION_MAX_ITER = 100


class Side(enum.IntEnum):
    MINUS = 0
    PLUS = 1


@dataclass(frozen=True)
class Crossing:
    theta: float
    location: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class CrossingBatch:
    """Vectorized crossings for segments a[i] -> b[i].

    ``mask[i]`` is False where both endpoints lie on the same side; the other
    arrays hold NaN there.
    """

    mask: np.ndarray
    theta: np.ndarray
    location: np.ndarray
    normal: np.ndarray


def _as_points(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1:] != (3,):
        raise ValueError(f"expected points with trailing dimension 3, got {p.shape}")
    return p


class LevelSet:
    """Common query logic; subclasses implement ``_phi`` on ``(n, 3)`` arrays."""

    def _phi(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _gradient(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def phi(self, p):
        p = _as_points(p)
        out = self._phi(p.reshape(-1, 3)).reshape(p.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def is_plus(self, p):
        """Boolean side flag, True on the plus side."""
        return np.asarray(self.phi(p)) > 0.0

    def side(self, p):
        flag = self.is_plus(p)
        if flag.ndim == 0:
            return Side.PLUS if flag else Side.MINUS
        return flag.astype(np.int8)

    def normal(self, p):
        p = _as_points(p)
        g = self._gradient(p.reshape(-1, 3))
        norm = np.linalg.norm(g, axis=1)
        if np.any(norm < GRADIENT_FLOOR):
            i = int(np.flatnonzero(norm < GRADIENT_FLOOR)[0])
            raise DegenerateGradient(
                f"|grad phi| = {norm[i]:.3e} below {GRADIENT_FLOOR} at {tuple(p.reshape(-1, 3)[i])}"
            )
        return (g / norm[:, None]).reshape(p.shape)

    def crossings(self, a, b) -> CrossingBatch:
        a = _as_points(a).reshape(-1, 3)
        b = _as_points(b).reshape(-1, 3)
        pa = self._phi(a)
        pb = self._phi(b)
        mask = (pa > 0) != (pb > 0)
        n = len(a)
        theta = np.full(n, np.nan)
        loc = np.full((n, 3), np.nan)
        nrm = np.full((n, 3), np.nan)
        if np.any(mask):
            t = self._root(a[mask], b[mask], pa[mask], pb[mask])
            tiny = np.finfo(float).eps
            t = np.clip(t, tiny, 1.0 - tiny)
            x = a[mask] + t[:, None] * (b[mask] - a[mask])
            theta[mask] = t
            loc[mask] = x
            nrm[mask] = self.normal(x)
        return CrossingBatch(mask, theta, loc, nrm)

    def find_crossing(self, a, b) -> Crossing | None:
        cb = self.crossings(a, b)
        if not cb.mask[0]:
            return None
        return Crossing(float(cb.theta[0]), cb.location[0].copy(), cb.normal[0].copy())

    def _root(self, a, b, pa, pb):
        raise NotImplementedError


class AnalyticLevelSet(LevelSet):
    def __init__(self, expression: Expression | str):
        self.expression = parse(expression) if isinstance(expression, str) else expression

    def __repr__(self):
        return f"AnalyticLevelSet({str(self.expression)!r})"

    def _phi(self, pts):
        return np.asarray(self.expression(pts), dtype=np.float64).reshape(len(pts))

    def _gradient(self, pts):
        g = np.empty_like(pts)
        d = ANALYTIC_FD_STEP
        for i in range(3):
            e = np.zeros(3)
            e[i] = d
            g[:, i] = (self._phi(pts + e) - self._phi(pts - e)) / (2 * d)
        return g

    def _root(self, a, b, pa, pb):
        # Bisection on the segment parameter. The bracket is halved until it
        # collapses to rounding level, which also drives |phi| far below 1e-12.
        lo = np.zeros(len(a))
        hi = np.ones(len(a))
        a_plus = pa > 0
        d = b - a
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            active = (mid > lo) & (mid < hi)
            if not np.any(active):
                break
            pm = self._phi(a + mid[:, None] * d)
            exact = pm == 0.0
            same_as_a = (pm > 0) == a_plus
            lo = np.where(active & same_as_a & ~exact, mid, lo)
            hi = np.where(active & ~same_as_a & ~exact, mid, hi)
            lo = np.where(active & exact, mid, lo)
            hi = np.where(active & exact, mid, hi)
        return 0.5 * (lo + hi)


class SampledLevelSet(LevelSet):
    """Trilinear interpolant of nodal phi values on an (nc+1)^3 grid over a cube."""

    def __init__(self, values, domain=(-1.0, 1.0)):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or len(set(values.shape)) != 1 or values.shape[0] < 2:
            raise ValueError(f"expected cubic (nc+1)^3 nodal array, got {values.shape}")
        self.values = values
        self.values.setflags(write=False)
        self.nc = values.shape[0] - 1
        self.lo, self.hi = float(domain[0]), float(domain[1])
        self.hc = (self.hi - self.lo) / self.nc
        axis = np.linspace(self.lo, self.hi, self.nc + 1)
        self._interp = RegularGridInterpolator((axis, axis, axis), values, method="linear")
        self._tol = 1e-12 * max(1.0, self.hi - self.lo)

    def __repr__(self):
        return f"SampledLevelSet(nc={self.nc}, domain=({self.lo}, {self.hi}))"

    @classmethod
    def from_level_set(cls, ls: LevelSet, nc: int, domain=(-1.0, 1.0)):
        axis = np.linspace(domain[0], domain[1], nc + 1)
        X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1)
        return cls(ls.phi(pts), domain)

    @classmethod
    def load(cls, path):
        """Read the raw format: header ``NC <int> DOMAIN <xmin> <xmax>`` then
        (nc+1)^3 whitespace-separated values, x fastest."""
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 5 or header[0] != "NC" or header[2] != "DOMAIN":
                raise ValueError(f"{path}: bad header {' '.join(header)!r}")
            nc = int(header[1])
            lo, hi = float(header[3]), float(header[4])
            data = np.array(fh.read().split(), dtype=np.float64)
        if data.size != (nc + 1) ** 3:
            raise ValueError(f"{path}: expected {(nc + 1) ** 3} values, found {data.size}")
        # file is x-fastest, i.e. C order over (z, y, x)
        values = data.reshape(nc + 1, nc + 1, nc + 1).transpose(2, 1, 0)
        return cls(np.ascontiguousarray(values), (lo, hi))

    def save(self, path):
        from .fileio import atomic_write_text

        flat = self.values.transpose(2, 1, 0).ravel()
        lines = [f"NC {self.nc} DOMAIN {self.lo!r} {self.hi!r}"]
        lines += [" ".join(f"{v:.17g}" for v in flat[i : i + 8]) for i in range(0, flat.size, 8)]
        atomic_write_text(path, "\n".join(lines) + "\n")

    def _check(self, pts):
        bad = np.any((pts < self.lo - self._tol) | (pts > self.hi + self._tol), axis=1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise OutOfDomain(f"point {tuple(pts[i])} outside [{self.lo}, {self.hi}]^3")
        return np.clip(pts, self.lo, self.hi)

    def _phi(self, pts):
        return self._interp(self._check(pts))

    def _gradient(self, pts):
        pts = self._check(pts)
        g = np.empty_like(pts)
        d = 0.5 * self.hc
        for i in range(3):
            fwd = pts.copy()
            bwd = pts.copy()
            fwd[:, i] = np.minimum(pts[:, i] + d, self.hi)
            bwd[:, i] = np.maximum(pts[:, i] - d, self.lo)
            g[:, i] = (self._interp(fwd) - self._interp(bwd)) / (fwd[:, i] - bwd[:, i])
        return g

    def _root(self, a, b, pa, pb):
        return pa / (pa - pb)


def sphere(radius=0.5, center=(0.0, 0.0, 0.0)) -> AnalyticLevelSet:
    cx, cy, cz = (repr(float(c)) for c in center)
    dx = "x" if cx == "0.0" else f"(x-{cx})"
    dy = "y" if cy == "0.0" else f"(y-{cy})"
    dz = "z" if cz == "0.0" else f"(z-{cz})"
    return AnalyticLevelSet(f"sqrt({dx}^2+{dy}^2+{dz}^2)-{float(radius)!r}")


def load_level_set(path: str | os.PathLike) -> SampledLevelSet:
    return SampledLevelSet.load(path)
