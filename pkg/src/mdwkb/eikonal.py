"""Relativistic eikonal solver: d_t phi = sqrt(|grad phi|^2 + 1).

Two independent discretizations of the positive branch:

* method of characteristics (straight rays, exact phase transport), and
* a first-order Lax-Friedrichs time-marcher used as a cross-check.

For the positive branch the momentum grad(phi) is constant along straight
rays with velocity omega_minus(xi0) = -xi0/lambda(xi0); the phase grows at
the exact rate h_plus(xi0) + xi0 . omega_minus(xi0) = 1/lambda(xi0).  (A
Hopf-Lax computation confirms the ray direction; the electron-convention
rays with velocity +omega_plus belong to the mirrored solve, see transport.)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dirac
from .errors import CausticExceeded, CoverageGap, CFLViolation, NonFinitePhase
from .grids import GridSpec, NamedForm, divergence, grad as grid_grad
from ._kernels import gather_rays_3d


@dataclass
class PhaseInit:
    """Initial phase as closures over point arrays of shape (..., ndim)."""

    value: Callable
    grad: Callable
    hess: Optional[Callable] = None

    @staticmethod
    def from_callable(f: Callable, ndim: int, step: float = 1e-5) -> "PhaseInit":
        def g(pts):
            pts = np.asarray(pts, dtype=float)
            out = np.zeros_like(pts)
            for i in range(ndim):
                e = np.zeros(ndim)
                e[i] = step
                out[..., i] = (f(pts + e) - f(pts - e)) / (2 * step)
            return out

        return PhaseInit(value=f, grad=g)

    def negated(self) -> "PhaseInit":
        v, g, h = self.value, self.grad, self.hess
        return PhaseInit(
            value=lambda p: -v(p),
            grad=lambda p: -g(p),
            hess=(None if h is None else (lambda p: -h(p))),
        )


def phase_init_closures(form: NamedForm, ndim: int) -> PhaseInit:
    """Analytic closures for the shipped named phase forms."""
    if form.name == "zero":
        return PhaseInit(
            value=lambda p: np.zeros(np.asarray(p).shape[:-1]),
            grad=lambda p: np.zeros(np.asarray(p).shape),
            hess=lambda p: np.zeros(np.asarray(p).shape + (ndim,)),
        )
    if form.name == "plane":
        k = np.array([float(form.params.get(c, 0.0)) for c in ("kx", "ky", "kz")][:ndim])
        return PhaseInit(
            value=lambda p: np.tensordot(np.asarray(p, float), k, axes=([-1], [0])),
            grad=lambda p: np.broadcast_to(k, np.asarray(p).shape).copy(),
            hess=lambda p: np.zeros(np.asarray(p).shape + (ndim,)),
        )
    if form.name == "quadratic":
        a = float(form.params.get("a", 1.0))

        def hess(p):
            p = np.asarray(p, float)
            return np.broadcast_to(a * np.eye(ndim), p.shape + (ndim,)).copy()

        return PhaseInit(
            value=lambda p: 0.5 * a * np.sum(np.asarray(p, float) ** 2, axis=-1),
            grad=lambda p: a * np.asarray(p, float),
            hess=hess,
        )
    raise ValueError(f"unknown phase form {form.name!r}")


def _as_phase_init(phi_I, grid: GridSpec) -> PhaseInit:
    if isinstance(phi_I, PhaseInit):
        return phi_I
    if isinstance(phi_I, NamedForm):
        return phase_init_closures(phi_I, grid.ndim)
    if callable(phi_I):
        return PhaseInit.from_callable(phi_I, grid.ndim)
    # sampled field on the grid (reduced-1d only)
    arr = np.asarray(phi_I, dtype=float)
    if grid.ndim != 1 or arr.shape != grid.shape:
        raise ValueError("sampled initial phases are supported on reduced-1d grids only")
    x = grid.axis(0)

    def f(p):
        return np.interp(np.asarray(p)[..., 0], x, arr)

    return PhaseInit.from_callable(f, 1, step=grid.dx[0])


@dataclass
class PhaseField:
    """Positive-branch phase and its derived fields on a space-time slab."""

    grid: GridSpec
    times: np.ndarray
    phi: np.ndarray  # (nt, *shape)
    grad_phi: np.ndarray  # (nt, *shape, ndim)
    dt_phi: np.ndarray  # (nt, *shape)
    div_omega_plus: np.ndarray
    div_omega_minus: np.ndarray
    caustic_bound: float

    def xi3(self, it: int) -> np.ndarray:
        """Momentum grad(phi) padded to 3 components."""
        return self.grid.momentum_3(self.grad_phi[it])

    def at_time(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} not stored (nearest {self.times[i]})")
        return i


@dataclass
class RayBundle:
    """Straight characteristics of the positive-branch eikonal equation."""

    grid: GridSpec
    seeds: np.ndarray  # (n, ndim)
    xi0: np.ndarray  # (n, 3): grad phi_I at the seed, constant along the ray
    velocity: np.ndarray  # (n, ndim)
    phase0: np.ndarray  # (n,)
    phase_rate: np.ndarray  # (n,): d phi / dt along the ray
    vel_grad: np.ndarray  # (n, ndim, ndim): d velocity / d seed
    caustic_bound: float
    T: float

    def positions(self, t: float) -> np.ndarray:
        return self.seeds + t * self.velocity

    def phase(self, t: float) -> np.ndarray:
        return self.phase0 + t * self.phase_rate

    def jacobian(self, t: float) -> np.ndarray:
        """det(d x(t) / d x0); exact for straight rays."""
        n, d = self.seeds.shape
        J = np.eye(d) + t * self.vel_grad
        if d == 1:
            return J[:, 0, 0]
        return np.linalg.det(J)


def caustic_time(phi_I, grid: GridSpec) -> float:
    """Lower bound 1/(max ||D2 h+(grad phi_I)|| * max ||D2 phi_I||).

    The Hessian of h+ has spectral norm 1/lambda(xi).  Returns +inf for
    affine initial phases.
    """
    init = _as_phase_init(phi_I, grid)
    pts = grid.mesh().reshape(-1, grid.ndim)
    g = init.grad(pts)
    if not np.all(np.isfinite(g)):
        raise NonFinitePhase("initial phase gradient contains non-finite samples")
    xi = grid.momentum_3(g)
    norm_h = float(np.max(1.0 / dirac.lam(xi)))

    if init.hess is not None:
        H = init.hess(pts)
    else:
        # second differences of the gradient closure
        H = np.zeros(pts.shape + (grid.ndim,))
        for i in range(grid.ndim):
            e = np.zeros(grid.ndim)
            e[i] = 1e-4
            H[..., i] = (init.grad(pts + e) - init.grad(pts - e)) / 2e-4
    if not np.all(np.isfinite(H)):
        raise NonFinitePhase("initial phase Hessian contains non-finite samples")
    if grid.ndim == 1:
        norm_hess = float(np.max(np.abs(H)))
    else:
        norm_hess = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2))))))
    if norm_hess < 1e-13:
        return float(np.inf)
    return 1.0 / (norm_h * norm_hess)


def _seed_points(grid: GridSpec, T: float, oversample: int) -> np.ndarray:
    """Seed rays on the grid nodes, refined by `oversample`, padded by a
    buffer of width T on aperiodic axes so rays cover the domain of
    dependence (propagation speed < 1)."""
    axes = []
    for i in range(grid.ndim):
        lo, hi = grid.extents[i]
        h = grid.dx[i] / oversample
        if grid.periodic[i]:
            n = grid.points[i] * oversample
            axes.append(lo + (hi - lo) * np.arange(n) / n)
        else:
            pad = T + 2 * h
            n = int(np.ceil((hi - lo + 2 * pad) / h)) + 1
            axes.append(np.linspace(lo - pad, hi + pad, n))
    pts = np.meshgrid(*axes, indexing="ij")
    return np.stack(pts, axis=-1).reshape(-1, grid.ndim)


def solve_rays(phi_I, grid: GridSpec, T: float, n_steps: int = 64,
               oversample: int = 2) -> RayBundle:
    """Characteristic solve of the positive branch up to time T."""
    init = _as_phase_init(phi_I, grid)
    tc = caustic_time(init, grid)
    if T >= tc:
        raise CausticExceeded(f"T={T} >= caustic bound {tc}")
    if grid.ndim == 3:
        oversample = 1
    seeds = _seed_points(grid, T, oversample)
    phase0 = init.value(seeds)
    g = init.grad(seeds)
    if not (np.all(np.isfinite(phase0)) and np.all(np.isfinite(g))):
        raise NonFinitePhase("initial phase samples are not finite")
    xi0 = grid.momentum_3(g)
    lam = dirac.lam(xi0)
    vel3 = dirac.group_velocity("-", xi0)  # positive-branch ray velocity
    velocity = vel3[:, : grid.ndim]
    # d phi/dt along the ray: h+(xi0) + xi0 . v = 1/lambda(xi0)
    rate = dirac.eigenvalue("+", xi0) + np.sum(xi0 * vel3, axis=-1)

    # velocity Jacobian: D omega_-(xi0) . D2 phi_I
    dom = -(np.eye(3) - vel3[:, :, None] * (-vel3[:, None, :]))  # placeholder, replaced below
    # D omega_-(xi) = -(I - omega_+ omega_+^T)/lambda, restricted to active axes
    omp = dirac.group_velocity("+", xi0)
    dom = -(np.eye(3)[None] - omp[:, :, None] * omp[:, None, :]) / lam[:, None, None]
    dom = dom[:, : grid.ndim, : grid.ndim]
    if init.hess is not None:
        H = init.hess(seeds)
    else:
        H = np.zeros(seeds.shape + (grid.ndim,))
        for i in range(grid.ndim):
            e = np.zeros(grid.ndim)
            e[i] = 1e-4
            H[..., i] = (init.grad(seeds + e) - init.grad(seeds - e)) / 2e-4
    vel_grad = dom @ H

    return RayBundle(
        grid=grid,
        seeds=seeds,
        xi0=xi0,
        velocity=velocity,
        phase0=phase0,
        phase_rate=rate,
        vel_grad=vel_grad,
        caustic_bound=tc,
        T=T,
    )


def _augment_1d(pos, lo, hi, periodic, n_ghost=2):
    """Sort ray samples; on periodic domains add wrapped ghost copies.

    Returns (p_sorted, order, ghost_shift) where ghost_shift is +-1 per
    augmented entry marking which period copy it came from (0 for originals).
    """
    order = np.argsort(pos)
    p = pos[order]
    if not periodic:
        return p, order, np.zeros(len(p))
    L = hi - lo
    gl = slice(len(p) - n_ghost, len(p))
    gr = slice(0, n_ghost)
    p_aug = np.concatenate([p[gl] - L, p, p[gr] + L])
    order_aug = np.concatenate([order[gl], order, order[gr]])
    shift = np.concatenate([-np.ones(n_ghost), np.zeros(len(p)), np.ones(n_ghost)])
    return p_aug, order_aug, shift


def _interp_rays_1d(pos, vals, targets, lo, hi, periodic, radius,
                    period_increment=0.0):
    """Inverse-distance (= linear) interpolation over the 2 bracketing rays.

    ``period_increment`` is the value change of the underlying function over
    one period, used to unwrap non-periodic phases on periodic grids.
    """
    p, order, shift = _augment_1d(pos, lo, hi, periodic)
    v = vals[order] + shift * period_increment
    idx = np.clip(np.searchsorted(p, targets), 1, len(p) - 1)
    pl, pr = p[idx - 1], p[idx]
    dl = np.abs(targets - pl)
    dr = np.abs(pr - targets)
    if np.any(np.minimum(dl, dr) > radius):
        raise CoverageGap("a grid point has no ray within the interpolation radius")
    w = dr / np.maximum(dl + dr, 1e-300)
    return w * v[idx - 1] + (1 - w) * v[idx]


def _hermite_rays_1d(pos, vals, slopes, targets, lo, hi, periodic, radius,
                     period_increment=0.0):
    """Cubic Hermite interpolation using the per-ray phase gradient.

    The rays carry the exact gradient, so the reconstructed phase is C^1 and
    finite differences of it stay second-order accurate.
    """
    p, order, shift = _augment_1d(pos, lo, hi, periodic)
    v = vals[order] + shift * period_increment
    s = slopes[order]
    idx = np.clip(np.searchsorted(p, targets), 1, len(p) - 1)
    pl, pr = p[idx - 1], p[idx]
    if np.any(np.minimum(np.abs(targets - pl), np.abs(pr - targets)) > radius):
        raise CoverageGap("a grid point has no ray within the interpolation radius")
    span = np.maximum(pr - pl, 1e-300)
    t = np.clip((targets - pl) / span, 0.0, 1.0)
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * v[idx - 1]
            + (t3 - 2 * t2 + t) * span * s[idx - 1]
            + (-2 * t3 + 3 * t2) * v[idx]
            + (t3 - t2) * span * s[idx])


def phase_on_grid(rays: RayBundle, grid: GridSpec, times) -> PhaseField:
    """Reconstruct phi, grad phi, dt phi and div omega on the grid.

    dt phi is recomputed as h+(grad phi) after interpolation so the eikonal
    relation holds up to the interpolation error in grad phi alone.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times > rays.T + 1e-12):
        raise CausticExceeded("requested time beyond the solved horizon")
    nt = len(times)
    phi = np.zeros((nt,) + grid.shape)
    gphi = np.zeros((nt,) + grid.shape + (grid.ndim,))
    radius = 3.0 * max(grid.dx)

    for it, t in enumerate(times):
        pos = rays.positions(t)
        ph = rays.phase(t)
        if grid.ndim == 1:
            x = grid.axis(0)
            lo, hi = grid.extents[0]
            p = pos[:, 0]
            per = grid.periodic[0]
            dphi_period = 0.0
            if per:
                L = hi - lo
                # phase change over one period = L * mean gradient; rays that
                # wrapped around carry the phase of their unwrapped position
                dphi_period = L * float(np.mean(rays.xi0[:, 0]))
                nwrap = np.floor((p - lo) / L)
                p = p - nwrap * L
                ph = ph - nwrap * dphi_period
            phi[it] = _hermite_rays_1d(p, ph, rays.xi0[:, 0], x, lo, hi, per,
                                       radius, dphi_period)
            gphi[it, :, 0] = _interp_rays_1d(p, rays.xi0[:, 0], x, lo, hi, per, radius)
        else:
            vals = np.concatenate([ph[:, None], rays.xi0], axis=1)
            out, ok = gather_rays_3d(pos, vals, grid)
            if not ok:
                raise CoverageGap("a grid point has no ray within the interpolation radius")
            phi[it] = out[..., 0]
            gphi[it] = out[..., 1:1 + grid.ndim]

    dtphi = np.zeros_like(phi)
    divp = np.zeros_like(phi)
    divm = np.zeros_like(phi)
    for it in range(nt):
        xi = grid.momentum_3(gphi[it])
        dtphi[it] = dirac.lam(xi)
        divp[it] = divergence(dirac.group_velocity("+", xi), grid).real
        divm[it] = divergence(dirac.group_velocity("-", xi), grid).real
    return PhaseField(grid, times, phi, gphi, dtphi, divp, divm, rays.caustic_bound)


def solve_hj_grid(phi_I, grid: GridSpec, T: float, cfl: float = 0.5,
                  n_store: int = 9) -> PhaseField:
    """Lax-Friedrichs marcher for d_t phi = sqrt(|grad phi|^2 + 1).

    First-order monotone scheme; exact for affine phases.  Serves as the
    independent cross-check of the ray reconstruction.
    """
    if not 0.0 < cfl <= 1.0:
        raise CFLViolation(f"cfl must be in (0, 1], got {cfl}")
    init = _as_phase_init(phi_I, grid)

    # Buffer aperiodic axes so the extrapolation boundary condition never
    # influences the returned window: the numerical domain of dependence
    # spreads at one cell per step = ndim/cfl in physical units.
    work = grid
    crop = tuple(slice(None) for _ in range(grid.ndim))
    if not all(grid.periodic):
        speed = grid.ndim / cfl
        exts, pts_n, crops = [], [], []
        for i in range(grid.ndim):
            lo, hi = grid.extents[i]
            h = grid.dx[i]
            if grid.periodic[i]:
                exts.append((lo, hi))
                pts_n.append(grid.points[i])
                crops.append(slice(None))
            else:
                pad = int(np.ceil(T * speed / h)) + 2
                exts.append((lo - pad * h, hi + pad * h))
                pts_n.append(grid.points[i] + 2 * pad)
                crops.append(slice(pad, pad + grid.points[i]))
        work = GridSpec(grid.dim_mode, tuple(exts), tuple(pts_n), grid.periodic)
        crop = tuple(crops)

    pts = work.mesh()
    phi = init.value(pts)
    if not np.all(np.isfinite(phi)):
        raise NonFinitePhase("initial phase samples are not finite")

    hmin = min(work.dx)
    dt = cfl * hmin / grid.ndim  # |H'| = |omega| < 1 per axis
    n_steps = max(1, int(np.ceil(T / dt)))
    dt = T / n_steps

    store_every = max(1, int(np.ceil(n_steps / max(1, n_store - 1))))
    rec_t, rec_phi = [0.0], [phi.copy()]

    def one_sided(f, axis, h):
        if work.periodic[axis]:
            dp = (np.roll(f, -1, axis=axis) - f) / h
            dm = (f - np.roll(f, 1, axis=axis)) / h
        else:
            d = np.diff(f, axis=axis) / h
            first = d.take([0], axis=axis)
            last = d.take([-1], axis=axis)
            dp = np.concatenate([d, last], axis=axis)
            dm = np.concatenate([first, d], axis=axis)
        return dp, dm

    t = 0.0
    for n in range(n_steps):
        central = []
        diss = np.zeros_like(phi)
        for ax in range(work.ndim):
            dp, dm = one_sided(phi, ax, work.dx[ax])
            avg = 0.5 * (dp + dm)
            central.append(avg)
            lam_ax = np.sqrt(avg * avg + 1.0)
            sigma = np.minimum(1.0, np.abs(avg) / lam_ax + 0.02)  # local LF speed
            diss += 0.5 * sigma * (dp - dm)
        g = np.stack(central, axis=-1)
        H = np.sqrt(np.sum(g * g, axis=-1) + 1.0)
        # Lax-Friedrichs: central Hamiltonian plus dissipation proportional
        # to the second difference (zero for affine phases, hence exact there)
        phi = phi + dt * H + dt * diss
        t += dt
        if (n + 1) % store_every == 0 or n == n_steps - 1:
            if rec_t[-1] != t:
                rec_t.append(t)
                rec_phi.append(phi.copy())

    times = np.array(rec_t)
    phis = np.stack([p[crop] for p in rec_phi])
    nt = len(times)
    gphi = np.zeros((nt,) + grid.shape + (grid.ndim,))
    dtphi = np.zeros((nt,) + grid.shape)
    divp = np.zeros((nt,) + grid.shape)
    divm = np.zeros((nt,) + grid.shape)
    for it in range(nt):
        gphi[it] = grid_grad(phis[it], grid)
        xi = grid.momentum_3(gphi[it])
        dtphi[it] = dirac.lam(xi)
        divp[it] = divergence(dirac.group_velocity("+", xi), grid).real
        divm[it] = divergence(dirac.group_velocity("-", xi), grid).real
    return PhaseField(grid, times, phis, gphi, dtphi, divp, divm, caustic_time(init, grid))


def eikonal_residual(phase: PhaseField) -> tuple[np.ndarray, float]:
    """(d_t phi)^2 - |grad phi|^2 - 1 from finite differences of stored phi.

    Both derivatives are recomputed from the phi samples so the residual is
    an independent check, not a restatement of construction.
    """
    phi = phase.phi
    if len(phase.times) >= 2:
        dtphi = np.gradient(phi, phase.times, axis=0, edge_order=1 if len(phase.times) < 3 else 2)
    else:
        dtphi = phase.dt_phi
    res = np.empty_like(phi)
    for it in range(phi.shape[0]):
        g = grid_grad(phi[it], phase.grid)
        res[it] = dtphi[it] ** 2 - np.sum(g * g, axis=-1) - 1.0
    return res, float(np.max(np.abs(res)))


def noncharacteristic_check(phase: PhaseField, tol: float = 1e-6) -> np.ndarray:
    """True where the oscillatory-response determinant 32 (d_t phi)^3
    ((d_t phi)^2 - |grad phi|^2) is bounded away from zero."""
    det = noncharacteristic_determinant(phase)
    return np.abs(det) > tol


def noncharacteristic_determinant(phase: PhaseField) -> np.ndarray:
    g2 = np.sum(phase.grad_phi ** 2, axis=-1)
    return 32.0 * phase.dt_phi ** 3 * (phase.dt_phi ** 2 - g2)
