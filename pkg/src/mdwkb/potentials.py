"""Self-consistent potentials of the scaled Maxwell-Dirac system.

Two backends solve Box u = f with zero Cauchy data:

* ``retarded_convolve``: direct light-cone quadrature of the 3d retarded
  kernel (full-3d mode only; matches the closed-form convolution), and
* ``wave_fdtd`` / ``WaveMarcher``: second-order leapfrog, the only backend
  in reduced-1d and the oracle the quadrature is verified against.

Also: the non-oscillating mean potentials generated by polarized principal
amplitudes, the Zitterbewegung current amplitude, the algebraic response
amplitudes of the oscillatory forcing, and the projected cubic nonlinearity
coefficients feeding the transport system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dirac
from .errors import (CFLViolation, CharacteristicPhase, HistoryTooShort,
                     ModeMismatch)
from .grids import FULL_3D, REDUCED_1D, GridSpec, laplacian
from ._kernels import retarded_shell


@dataclass
class SourceHistory:
    """Uniformly sampled source slices starting at t = 0 (zero wave data)."""

    grid: GridSpec
    times: list = field(default_factory=lambda: [0.0])
    values: list = field(default_factory=list)

    def __post_init__(self):
        if not self.values:
            self.values = [np.zeros(self.grid.shape)]
        if abs(self.times[0]) > 0:
            raise ValueError("source history must start at t = 0")

    @property
    def dt(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return self.times[1] - self.times[0]

    def append(self, t: float, slc: np.ndarray):
        if self.times and len(self.times) > 1:
            if abs((t - self.times[-1]) - self.dt) > 1e-9 * max(1.0, self.dt):
                raise ValueError("source history requires a uniform time step")
        self.times.append(t)
        self.values.append(np.asarray(slc))

    def stacked(self) -> np.ndarray:
        return np.stack(self.values)


@dataclass
class PotentialState:
    V: np.ndarray
    A: np.ndarray  # (..., 3)
    dtV: np.ndarray
    dtA: np.ndarray
    time: float

    @staticmethod
    def zero(grid: GridSpec, time: float = 0.0) -> "PotentialState":
        z = np.zeros(grid.shape)
        zv = np.zeros(grid.shape + (3,))
        return PotentialState(z, zv, z.copy(), zv.copy(), time)


@dataclass
class OscillatoryPotential:
    """Leading algebraic response amplitudes of the +-2 phase harmonics."""

    order: int
    amp_plus: np.ndarray  # coefficient of exp(+2i phi / eps), (..., 3)
    amp_minus: np.ndarray  # coefficient of exp(-2i phi / eps)


def retarded_convolve(source: SourceHistory, t: float, grid: GridSpec,
                      dr: float | None = None,
                      angular: str = "lebedev26") -> np.ndarray:
    """(1/4pi) integral over |x-y| <= t of source(t - |x-y|, y)/|x-y| dy.

    Spherical-shell midpoint quadrature (dr = h/2 by default) with 26-point
    octahedral angular nodes, linear interpolation in space and time.
    """
    if grid.dim_mode != FULL_3D:
        raise ModeMismatch("retarded_convolve requires full-3d mode; use wave_fdtd")
    if t > source.times[-1] + 1e-12:
        raise HistoryTooShort(f"history ends at {source.times[-1]} < t = {t}")
    if t <= 0:
        return np.zeros(grid.shape)
    if dr is None:
        dr = min(grid.dx) / 2.0
    lo = np.array([e[0] for e in grid.extents])
    return retarded_shell(
        source.stacked().astype(np.float64),
        np.asarray(source.times, dtype=np.float64),
        lo, np.array(grid.dx), grid.mesh(), float(t), float(dr), angular,
    )


class WaveMarcher:
    """Leapfrog marcher for Box u = f with zero initial data.

    One ``push(f_n)`` advances from t_n to t_{n+1} using the source slice at
    t_n only, so potentials never see sources from their own future.  Values
    may be scalar or carry a trailing component axis.
    """

    def __init__(self, grid: GridSpec, dt: float, components: tuple = ()):
        cmax = dt * np.sqrt(sum(1.0 / h ** 2 for h in grid.dx))
        if cmax > 1.0 + 1e-12:
            raise CFLViolation(f"dt={dt} violates the wave CFL bound (c={cmax:.3f})")
        self.grid = grid
        self.dt = dt
        self.shape = grid.shape + components
        self.u_prev = np.zeros(self.shape)
        self.u = np.zeros(self.shape)
        self.t = 0.0
        self.n = 0

    def _lap(self, u):
        if u.ndim == self.grid.ndim:
            return laplacian(u, self.grid)
        out = np.empty_like(u)
        for c in range(u.shape[-1]):
            out[..., c] = laplacian(u[..., c], self.grid)
        return out

    def push(self, source_slice: np.ndarray) -> np.ndarray:
        dt2 = self.dt * self.dt
        rhs = self._lap(self.u) + source_slice
        if self.n == 0:
            # Taylor start consistent with u(0) = u_t(0) = 0
            u_next = 0.5 * dt2 * rhs
        else:
            u_next = 2.0 * self.u - self.u_prev + dt2 * rhs
        self.u_prev, self.u = self.u, u_next
        self.n += 1
        self.t = self.n * self.dt
        return self.u

    def dt_u(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(self.shape)
        return (self.u - self.u_prev) / self.dt


@dataclass
class WaveTrajectory:
    grid: GridSpec
    times: np.ndarray
    values: np.ndarray  # (nt,) + shape(+comps)
    dt_values: np.ndarray


def wave_fdtd(source: SourceHistory, n_steps: int, cfl: float = 0.9) -> WaveTrajectory:
    """March Box u = source with zero data for n_steps of the source's dt."""
    dt = source.dt
    if dt <= 0:
        raise ValueError("source history needs at least two time slices")
    if n_steps > len(source.times) - 1:
        raise HistoryTooShort("fewer source slices than requested steps")
    grid = source.grid
    limit = cfl / np.sqrt(sum(1.0 / h ** 2 for h in grid.dx))
    if dt > limit + 1e-12:
        raise CFLViolation(f"source dt {dt} exceeds CFL limit {limit}")
    comps = source.values[0].shape[len(grid.shape):]
    m = WaveMarcher(grid, dt, comps)
    rec = [m.u.copy()]
    rec_dt = [np.zeros(m.shape)]
    for n in range(n_steps):
        m.push(source.values[n])
        rec.append(m.u.copy())
        rec_dt.append(m.dt_u())
    times = np.arange(n_steps + 1) * dt
    return WaveTrajectory(grid, times, np.stack(rec), np.stack(rec_dt))


def band_sources(u_plus: np.ndarray, u_minus: np.ndarray, xi: np.ndarray):
    """Non-oscillating density and current of a polarized amplitude pair.

    rho = |u+|^2 + |u-|^2;  j = omega_+(xi)|u+|^2 + omega_-(xi)|u-|^2.
    """
    rp = np.sum(np.abs(u_plus) ** 2, axis=-1)
    rm = np.sum(np.abs(u_minus) ** 2, axis=-1)
    j = (dirac.group_velocity("+", xi) * rp[..., None]
         + dirac.group_velocity("-", xi) * rm[..., None])
    return rp + rm, j


def mean_potentials(u0, history_pair, t: float, backend: str = "auto"):
    """Evaluate the mean potentials (V, A0) generated by u0's history.

    ``history_pair = (rho_history, current_history)`` must contain the band
    density/current sources up to time t; if the pair's last slice is older
    than t by exactly one step, u0's own sources are appended first.
    """
    rho_h, j_h = history_pair
    grid = rho_h.grid
    if t > rho_h.times[-1] + 1e-12:
        rho, j = band_sources(u0.u_plus, u0.u_minus, u0.xi)
        rho_h.append(t, rho)
        j_h.append(t, j)
    if backend == "auto":
        backend = "quadrature" if grid.dim_mode == FULL_3D else "fdtd"
    if backend == "quadrature":
        V = retarded_convolve(rho_h, t, grid)
        A = np.stack([retarded_convolve(
            SourceHistory(grid, list(j_h.times), [v[..., k] for v in j_h.values]),
            t, grid) for k in range(3)], axis=-1)
        return V, A
    n = len(rho_h.times) - 1
    Vtraj = wave_fdtd(rho_h, n)
    Atraj = wave_fdtd(j_h, n)
    return Vtraj.values[-1], Atraj.values[-1]


def zitter_source(u0) -> np.ndarray:
    """Zitterbewegung amplitude Z-_k = <u0+, alpha^k u0->, the coefficient of
    exp(-2i phi/eps) in the current; the +2 coefficient is its conjugate."""
    a1, a2, a3, _ = dirac.dirac_matrices()
    up = u0.u_plus
    um = u0.u_minus
    out = np.empty(up.shape[:-1] + (3,), dtype=complex)
    for k, m in enumerate((a1, a2, a3)):
        out[..., k] = np.einsum("...i,ij,...j->...", np.conj(up), m, um)
    return out


def oscillatory_amplitude(Z: np.ndarray, phase) -> OscillatoryPotential:
    """Leading response amplitudes of Box a = Z(theta-modes) along the phase.

    The noncharacteristic determinant must be bounded away from zero; on the
    eikonal branch the denominator -(d_t phi)^2 + |grad phi|^2 equals -1
    exactly, so the amplitudes are the (sign-flipped) Zitterbewegung
    coefficients mode by mode.
    """
    from .eikonal import noncharacteristic_check

    if not np.all(noncharacteristic_check(phase)):
        raise CharacteristicPhase("phase is characteristic for the wave operator")
    # denominator of the algebraic response: -(dt phi)^2 + |grad phi|^2 = -1
    amp_minus = -np.asarray(Z)
    amp_plus = -np.conj(np.asarray(Z))
    return OscillatoryPotential(order=1, amp_plus=amp_plus, amp_minus=amp_minus)


def nonlinearity_N0(u0, V: np.ndarray, A0: np.ndarray):
    """Projected nonlinearity coefficients ((A0 . omega_pm) - V) u0_pm."""
    cp = np.sum(A0 * dirac.group_velocity("+", u0.xi), axis=-1) - V
    cm = np.sum(A0 * dirac.group_velocity("-", u0.xi), axis=-1) - V
    return cp[..., None] * u0.u_plus, cm[..., None] * u0.u_minus
