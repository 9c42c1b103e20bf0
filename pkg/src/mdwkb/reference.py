"""Direct integrator of the scaled Maxwell-Dirac system.

Strang splitting: half potential step (pointwise, closed-form unitary),
full kinetic step (Fourier multiplier, exact for the free flow), half
potential step.  The wave equations for (V, A) march by leapfrog in
lockstep, driven by the charge/current densities of the mid-step spinor.
Both sub-flows are unitary, so the spinor norm is conserved to roundoff.

This solver shares no discretization machinery with the WKB construction;
it is the oracle the asymptotics are validated against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dirac
from .errors import ResolutionInsufficient
from .grids import GridSpec, REDUCED_1D
from .potentials import PotentialState, WaveMarcher


def _axis_wavenumbers(grid: GridSpec):
    ks = []
    for i in range(grid.ndim):
        n = grid.points[i]
        lo, hi = grid.extents[i]
        if not grid.periodic[i]:
            raise ValueError("the spectral kinetic step needs periodic axes")
        ks.append(2.0 * np.pi * np.fft.fftfreq(n, d=(hi - lo) / n))
    return ks


def _xi_field(grid: GridSpec, eps: float) -> np.ndarray:
    """Symbol argument eps * k on the Fourier grid, padded to 3-vectors."""
    ks = _axis_wavenumbers(grid)
    mesh = np.meshgrid(*ks, indexing="ij")
    xi = np.zeros(grid.shape + (3,))
    for i, m in enumerate(mesh):
        xi[..., i] = eps * m
    return xi


def _apply_symbol(xi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """D(xi) u, vectorized over the leading axes (u: (..., 4))."""
    x1, x2, x3 = xi[..., 0], xi[..., 1], xi[..., 2]
    a, b, c, d = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    out = np.empty_like(u)
    out[..., 0] = x1 * d - 1j * x2 * d + x3 * c + a
    out[..., 1] = x1 * c + 1j * x2 * c - x3 * d + b
    out[..., 2] = x1 * b - 1j * x2 * b + x3 * a - c
    out[..., 3] = x1 * a + 1j * x2 * a - x3 * b - d
    return out


def _apply_alpha(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(alpha . v) u for a real 3-vector field v."""
    x1, x2, x3 = v[..., 0], v[..., 1], v[..., 2]
    a, b, c, d = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    out = np.empty_like(u)
    out[..., 0] = x1 * d - 1j * x2 * d + x3 * c
    out[..., 1] = x1 * c + 1j * x2 * c - x3 * d
    out[..., 2] = x1 * b - 1j * x2 * b + x3 * a
    out[..., 3] = x1 * a + 1j * x2 * a - x3 * b
    return out


def kinetic_step(psi: np.ndarray, eps: float, dt: float, grid: GridSpec) -> np.ndarray:
    """Exact free flow: multiply by exp(-i dt D(eps k)/eps) in Fourier space.

    Uses the closed form cos(dt lam/eps) Id - i sin(dt lam/eps) D(xi)/lam.
    """
    axes = tuple(range(grid.ndim))
    psih = np.fft.fftn(psi, axes=axes)
    xi = _xi_field(grid, eps)
    lam = dirac.lam(xi)
    phase = dt * lam / eps
    cosv = np.cos(phase)[..., None]
    sincv = (np.sin(phase) / lam)[..., None]
    psih = cosv * psih - 1j * sincv * _apply_symbol(xi, psih)
    return np.fft.ifftn(psih, axes=axes)


def potential_step(psi: np.ndarray, V: np.ndarray, A: np.ndarray,
                   eps: float, dt: float) -> np.ndarray:
    """Pointwise unitary exp(-i dt (V Id - alpha . A)/eps).

    Closed form via (alpha . n)^2 = Id: the A part rotates with
    cos(dt|A|/eps) Id + i sin(dt|A|/eps) alpha . A/|A| (identity as A -> 0).
    """
    phase = np.exp(-1j * dt * V / eps)[..., None]
    amag = np.sqrt(np.sum(A * A, axis=-1))
    c = np.cos(dt * amag / eps)[..., None]
    # sin(x)/x is regular at 0: sinc form keeps the A -> 0 limit exact
    s_over = (dt / eps) * np.sinc(dt * amag / (eps * np.pi))
    rotated = c * psi + 1j * s_over[..., None] * _apply_alpha(A, psi)
    return phase * rotated


def densities(psi: np.ndarray):
    """Charge density |psi|^2 and current <psi, alpha^k psi>."""
    a, b, c, d = psi[..., 0], psi[..., 1], psi[..., 2], psi[..., 3]
    rho = np.sum(np.abs(psi) ** 2, axis=-1)
    cur = np.empty(psi.shape[:-1] + (3,))
    ad = np.conj(a) * d
    bc = np.conj(b) * c
    cur[..., 0] = 2.0 * (ad.real + bc.real)
    cur[..., 1] = 2.0 * (ad.imag - bc.imag)
    cur[..., 2] = 2.0 * ((np.conj(a) * c).real - (np.conj(b) * d).real)
    return rho, cur


@dataclass
class MDState:
    psi: np.ndarray
    potentials: PotentialState
    epsilon: float
    time: float


@dataclass
class MDTrajectory:
    grid: GridSpec
    epsilon: float
    times: np.ndarray
    psi: np.ndarray  # (nt, *shape, 4)
    charge: np.ndarray  # per stored step
    log_times: np.ndarray
    log_charge: np.ndarray
    final_potentials: PotentialState

    def state(self, i: int) -> MDState:
        return MDState(self.psi[i], self.final_potentials, self.epsilon, self.times[i])


def run_reference(grid: GridSpec, psi0: np.ndarray, eps: float, T: float,
                  dt: float | None = None, coupling: bool = True,
                  store_every: int | None = None,
                  points_per_wavelength: float = 8.0) -> MDTrajectory:
    """Integrate the coupled system from psi0 with zero initial potentials."""
    if grid.dim_mode != REDUCED_1D and min(grid.points) > 64:
        raise ResolutionInsufficient("full-3d reference runs are smoke-scale only")
    dx = max(grid.dx)
    if dx > 2.0 * np.pi * eps / points_per_wavelength + 1e-15:
        raise ResolutionInsufficient(
            f"grid spacing {dx:.3e} exceeds {points_per_wavelength} points per "
            f"wavelength 2*pi*eps = {2*np.pi*eps:.3e}")
    if dt is None:
        dt = eps / 8.0
    n_steps = max(1, int(np.ceil(T / dt)))
    dt = T / n_steps
    store_every = store_every or max(1, n_steps // 8)

    # Maxwell sub-stepping: same dt when CFL permits, else integer substeps
    wave_limit = 0.9 / np.sqrt(sum(1.0 / h ** 2 for h in grid.dx))
    n_sub = max(1, int(np.ceil(dt / wave_limit)))
    mv = WaveMarcher(grid, dt / n_sub)
    ma = WaveMarcher(grid, dt / n_sub, components=(3,))

    psi = np.asarray(psi0, dtype=complex).copy()
    dv = grid.cell_volume()

    def norm2(p):
        return float(np.sum(np.abs(p) ** 2) * dv)

    times = [0.0]
    snaps = [psi.copy()]
    charges = [norm2(psi)]
    log_t = [0.0]
    log_c = [charges[0]]

    Vn = np.zeros(grid.shape)
    An = np.zeros(grid.shape + (3,))
    t = 0.0
    for n in range(n_steps):
        if coupling:
            psi = potential_step(psi, Vn, An, eps, dt / 2)
        psi = kinetic_step(psi, eps, dt, grid)
        if coupling:
            rho, cur = densities(psi)  # mid-step sources
            for _ in range(n_sub):
                mv.push(rho)
                ma.push(cur)
            Vn1, An1 = mv.u, ma.u
            psi = potential_step(psi, Vn1, An1, eps, dt / 2)
            Vn, An = Vn1, An1
        t = (n + 1) * dt
        log_t.append(t)
        log_c.append(norm2(psi))
        if (n + 1) % store_every == 0 or n == n_steps - 1:
            if times[-1] != t:
                times.append(t)
                snaps.append(psi.copy())
                charges.append(log_c[-1])

    final = PotentialState(Vn, An, mv.dt_u(), ma.dt_u(), t)
    return MDTrajectory(grid, eps, np.array(times), np.stack(snaps),
                        np.array(charges), np.array(log_t), np.array(log_c), final)
