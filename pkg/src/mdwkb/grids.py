"""Computational grids and small finite-difference helpers.

Two modes: ``reduced-1d`` (fields vary along the first axis only, spinors
keep 4 components, vectors keep 3) and ``full-3d``.  Scalar fields have the
grid shape, vector fields append a trailing 3, spinor fields a trailing 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REDUCED_1D = "reduced-1d"
FULL_3D = "full-3d"


@dataclass(frozen=True)
class GridSpec:
    dim_mode: str
    extents: tuple  # per active axis: (lo, hi)
    points: tuple  # per active axis
    periodic: tuple  # per active axis

    def __post_init__(self):
        if self.dim_mode not in (REDUCED_1D, FULL_3D):
            raise ValueError(f"unknown dim_mode {self.dim_mode!r}")
        n = self.ndim
        if not (len(self.extents) == len(self.points) == len(self.periodic) == n):
            raise ValueError("extents/points/periodic must match the active rank")
        for (lo, hi), m in zip(self.extents, self.points):
            if not lo < hi:
                raise ValueError("extent min must be < max")
            if m < 8:
                raise ValueError("need at least 8 points per active axis")

    @property
    def ndim(self) -> int:
        return 1 if self.dim_mode == REDUCED_1D else 3

    @property
    def shape(self) -> tuple:
        return tuple(self.points)

    @property
    def dx(self) -> tuple:
        out = []
        for (lo, hi), m, per in zip(self.extents, self.points, self.periodic):
            # periodic grids omit the duplicate endpoint
            out.append((hi - lo) / (m if per else m - 1))
        return tuple(out)

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.extents[i]
        m = self.points[i]
        if self.periodic[i]:
            return lo + (hi - lo) * np.arange(m) / m
        return np.linspace(lo, hi, m)

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.ndim)]

    def mesh(self) -> np.ndarray:
        """Coordinates as an array of shape grid.shape + (ndim,)."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(grids, axis=-1)

    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    def momentum_3(self, vec: np.ndarray) -> np.ndarray:
        """Pad a (..., ndim) vector field to (..., 3) with zeros."""
        if self.ndim == 3:
            return vec
        out = np.zeros(vec.shape[:-1] + (3,), dtype=vec.dtype)
        out[..., 0] = vec[..., 0]
        return out


def reduced_1d(lo: float, hi: float, n: int, periodic: bool = True) -> GridSpec:
    return GridSpec(REDUCED_1D, ((lo, hi),), (n,), (periodic,))


def full_3d(lo: float, hi: float, n: int, periodic: bool = False) -> GridSpec:
    return GridSpec(FULL_3D, ((lo, hi),) * 3, (n,) * 3, (periodic,) * 3)


def grad(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Centered gradient of a scalar field, shape grid.shape + (ndim,).

    Periodic axes wrap; aperiodic axes use numpy's one-sided second-order
    stencils at the ends.
    """
    comps = []
    for i in range(grid.ndim):
        h = grid.dx[i]
        if grid.periodic[i]:
            comps.append((np.roll(f, -1, axis=i) - np.roll(f, 1, axis=i)) / (2 * h))
        else:
            comps.append(np.gradient(f, h, axis=i, edge_order=2))
    return np.stack(comps, axis=-1)


def divergence(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Divergence of a (..., ndim or 3) vector field (extra components ignored
    in reduced mode since fields do not vary along the inactive axes)."""
    out = np.zeros(v.shape[:-1], dtype=v.dtype)
    for i in range(grid.ndim):
        h = grid.dx[i]
        if grid.periodic[i]:
            out += (np.roll(v[..., i], -1, axis=i) - np.roll(v[..., i], 1, axis=i)) / (2 * h)
        else:
            out += np.gradient(v[..., i], h, axis=i, edge_order=2)
    return out


def laplacian(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Second-order Laplacian. Aperiodic axes copy the neighbouring interior
    value at the ends (homogeneous Neumann-like closure)."""
    out = np.zeros_like(f)
    for i in range(grid.ndim):
        h2 = grid.dx[i] ** 2
        n = f.shape[i]
        if grid.periodic[i]:
            out += (np.roll(f, -1, axis=i) - 2 * f + np.roll(f, 1, axis=i)) / h2
        else:
            # reflective ghosts: f[-1] := f[1], f[n] := f[n-2]
            up = np.concatenate([f.take(range(1, n), axis=i), f.take([-2], axis=i)], axis=i)
            dn = np.concatenate([f.take([1], axis=i), f.take(range(0, n - 1), axis=i)], axis=i)
            out += (up - 2 * f + dn) / h2
    return out


def l2_norm(f: np.ndarray, grid: GridSpec) -> float:
    """L2 norm with the cell measure; trailing component axes are summed."""
    mag2 = np.abs(f) ** 2
    while mag2.ndim > grid.ndim:
        mag2 = mag2.sum(axis=-1)
    return float(np.sqrt(mag2.sum() * grid.cell_volume()))


@dataclass
class NamedForm:
    """A named analytic form with parameters (phase or amplitude profile)."""

    name: str
    params: dict = field(default_factory=dict)


def phase_init(form: NamedForm, grid: GridSpec):
    """Evaluate a named initial phase; returns (phi, grad_phi) on the grid.

    Shipped forms: zero, plane(kx[,ky,kz]), quadratic(a).
    """
    x = grid.mesh()
    if form.name == "zero":
        return np.zeros(grid.shape), np.zeros(grid.shape + (grid.ndim,))
    if form.name == "plane":
        k = np.array([float(form.params.get(c, 0.0)) for c in ("kx", "ky", "kz")][: grid.ndim])
        phi = np.tensordot(x, k, axes=([-1], [0]))
        g = np.broadcast_to(k, grid.shape + (grid.ndim,)).copy()
        return phi, g
    if form.name == "quadratic":
        a = float(form.params.get("a", 1.0))
        phi = 0.5 * a * np.sum(x * x, axis=-1)
        return phi, a * x
    raise ValueError(f"unknown phase form {form.name!r}")


def amplitude_init(form: NamedForm, grid: GridSpec) -> np.ndarray:
    """Evaluate a named scalar amplitude profile on the grid.

    Shipped form: gaussian(center, width, height).
    """
    x = grid.mesh()
    if form.name == "zero":
        return np.zeros(grid.shape)
    if form.name == "gaussian":
        c = np.array([float(form.params.get(k, 0.0)) for k in ("cx", "cy", "cz")][: grid.ndim])
        w = float(form.params.get("width", 0.5))
        h = float(form.params.get("height", 1.0))
        r2 = np.sum((x - c) ** 2, axis=-1)
        return h * np.exp(-r2 / (2.0 * w * w))
    raise ValueError(f"unknown amplitude form {form.name!r}")
