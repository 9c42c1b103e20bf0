"""Phase-space and convergence diagnostics.

Wigner transform and band-content analyzers for synthesized or reference
spinor fields, the PDE residual meter for the WKB ansatz, and the
WKB-vs-reference convergence study with order fitting.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import dirac
from .errors import ResolutionInsufficient
from .grids import GridSpec, REDUCED_1D, grad as grid_grad
from .reference import _apply_alpha, _apply_symbol, _xi_field, run_reference
from .transport import WKBSolution, _transport_dt, synthesize


@dataclass
class WignerField:
    x: np.ndarray
    xi: np.ndarray
    values: np.ndarray  # (nx, nxi, 4, 4) hermitian
    epsilon: float
    dx: float
    dxi: float

    def trace_mass(self) -> np.ndarray:
        return np.einsum("xkii->xk", self.values).real

    def total_mass(self) -> float:
        return float(np.sum(self.trace_mass()) * self.dx * self.dxi)


def wigner_transform(psi: np.ndarray, eps: float, grid: GridSpec,
                     x_stride: int = 1) -> WignerField:
    """Matrix-valued Wigner transform on the active axis (reduced-1d).

    Discretizes (2 pi)^-1 int psi(x - eps y/2) (x) conj(psi)(x + eps y/2)
    e^{i xi y} dy so that a plane mode e^{ikx/eps} concentrates at xi = +k.
    Momentum resolution is d xi = pi eps / L.
    """
    if grid.dim_mode != REDUCED_1D:
        raise ResolutionInsufficient("wigner_transform implemented for reduced-1d")
    n = grid.points[0]
    dx = grid.dx[0]
    L = n * dx if grid.periodic[0] else (grid.extents[0][1] - grid.extents[0][0])
    if not grid.periodic[0]:
        raise ResolutionInsufficient("wigner_transform needs a periodic grid")
    x = grid.axis(0)[::x_stride]
    ix = np.arange(n)[::x_stride]

    # C[i, j] = psi(x_i - eta_j) conj(psi)(x_i + eta_j), eta_j = j dx (mod L)
    j = np.arange(n)
    im = (ix[:, None] - j[None, :]) % n
    ip = (ix[:, None] + j[None, :]) % n
    C = psi[im][:, :, :, None] * np.conj(psi[ip])[:, :, None, :]
    # sum_j C_j e^{+2 pi i j m / n} = n * ifft over j
    W = n * np.fft.ifft(C, axis=1)
    # xi_m = pi eps m / L, m in [-n/2, n/2)
    m = np.fft.fftfreq(n, d=1.0 / n)
    xi = np.pi * eps * m / L
    order = np.argsort(xi)
    W = W[:, order]
    xi = xi[order]
    W *= 2.0 * dx / (2.0 * np.pi * eps)
    W = 0.5 * (W + np.conj(np.swapaxes(W, -1, -2)))  # enforce hermiticity
    dxi = np.pi * eps / L
    return WignerField(x=x, xi=xi, values=W, epsilon=eps, dx=dx * x_stride, dxi=dxi)


def band_content(psi: np.ndarray, eps: float, grid: GridSpec):
    """(charge_plus, charge_minus) = ||Pi_pm(eps D) psi||_2^2 via Fourier."""
    axes = tuple(range(grid.ndim))
    psih = np.fft.fftn(psi, axes=axes)
    xi = _xi_field(grid, eps)
    lam = dirac.lam(xi)[..., None]
    Dpsi = _apply_symbol(xi, psih)
    plus = 0.5 * (psih + Dpsi / lam)
    minus = 0.5 * (psih - Dpsi / lam)
    norm = grid.cell_volume() / np.prod(grid.shape)
    cp = float(np.sum(np.abs(plus) ** 2) * norm)
    cm = float(np.sum(np.abs(minus) ** 2) * norm)
    return cp, cm


def _spectral_alpha_grad(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """(alpha . grad) psi by spectral differentiation (periodic axes)."""
    axes = tuple(range(grid.ndim))
    psih = np.fft.fftn(psi, axes=axes)
    xi = _xi_field(grid, 1.0)
    dh = 1j * _apply_alpha(xi, psih)
    return np.fft.ifftn(dh, axes=axes)


def residual_meter(solution: WKBSolution, eps: float,
                   corrector: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """L2 norm of i eps d_t psi - D_A psi for the synthesized field.

    Spatial derivatives are spectral on the synthesized field; the time
    derivative uses the exact eikonal rate for the fast phase and the
    transport right-hand side for the slow amplitudes.  The potentials are
    the (exact) retarded potentials of the synthesized density, which for
    polarized data equal eps times the stored mean potentials.
    """
    grid = solution.grid
    times = solution.times
    out_t, out_r = [], []
    corr = solution.corrector if corrector else None
    for it in range(len(times)):
        pair = solution.amplitudes[it]
        S = solution.electron_phase(it)
        xi = pair.xi
        lam = dirac.lam(xi)
        V = solution.V[it]
        A = solution.A[it]
        ep = np.exp(1j * S / eps)[..., None]

        psi = pair.u_plus * ep + pair.u_minus * np.conj(ep)
        dtu_p = _transport_dt(pair.u_plus, xi, V, A, "+", grid)
        dtu_m = _transport_dt(pair.u_minus, xi, V, A, "-", grid)
        dtS = -lam[..., None]  # electron-mode phase satisfies d_t S = -lambda
        dtpsi = ((dtu_p + (1j * dtS / eps) * pair.u_plus) * ep
                 + (dtu_m - (1j * dtS / eps) * pair.u_minus) * np.conj(ep))
        if corr is not None:
            wp = corr["plus"][it]
            wm = corr["minus"][it]
            psi = psi + eps * (wp * ep + wm * np.conj(ep))
            # slow time derivative of the corrector by differences in t
            if 0 < it < len(times) - 1:
                dwp = (corr["plus"][it + 1] - corr["plus"][it - 1]) / (times[it + 1] - times[it - 1])
                dwm = (corr["minus"][it + 1] - corr["minus"][it - 1]) / (times[it + 1] - times[it - 1])
            else:
                k = 1 if it == 0 else -1
                dwp = (corr["plus"][it + k] - corr["plus"][it]) / (times[it + k] - times[it])
                dwm = (corr["minus"][it + k] - corr["minus"][it]) / (times[it + k] - times[it])
            dtpsi = dtpsi + eps * ((dwp + (1j * dtS / eps) * wp) * ep
                                   + (dwm - (1j * dtS / eps) * wm) * np.conj(ep))
        psi = np.sqrt(eps) * psi
        dtpsi = np.sqrt(eps) * dtpsi

        beta_psi = psi.copy()
        beta_psi[..., 2:] *= -1
        Dpsi = -1j * eps * _spectral_alpha_grad(psi, grid) + beta_psi
        Dpsi = Dpsi + eps * (V[..., None] * psi - _apply_alpha(A, psi))
        R = 1j * eps * dtpsi - Dpsi
        dv = grid.cell_volume()
        out_t.append(times[it])
        out_r.append(float(np.sqrt(np.sum(np.abs(R) ** 2) * dv)))
    return np.array(out_t), np.array(out_r)


def fit_order(eps_list, values):
    """Least-squares exponent p of values ~ C eps^p with the fit RMS residual."""
    x = np.log(np.asarray(eps_list, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), resid


@dataclass
class ConvergenceTable:
    epsilons: list
    errors: list
    fitted_order: float
    fit_residual: float
    runtimes: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def unresolved(self) -> bool:
        return self.fit_residual > 0.1 or any(self.flags)

    def to_csv(self) -> str:
        lines = ["epsilon,rel_l2_error,runtime_s,flag"]
        for e, err, rt, fl in zip(self.epsilons, self.errors, self.runtimes, self.flags):
            lines.append(f"{e},{err},{rt},{fl}")
        lines.append(f"# fitted_order,{self.fitted_order},fit_residual,{self.fit_residual}")
        return "\n".join(lines) + "\n"


def compare(solution: WKBSolution, epsilons, T: float | None = None,
            coupling: bool | None = None, corrector: bool = False,
            dt_factor: float = 8.0, error_floor: float = 1e-8) -> ConvergenceTable:
    """Run the reference solver from synthesized data at each eps and fit
    the relative L2 error of the synthesized field at the final time."""
    grid = solution.grid
    if T is None:
        T = float(solution.times[-1])
    if coupling is None:
        coupling = bool(solution.metadata.get("coupling", True))
    dv = grid.cell_volume()
    errors, runtimes, flags = [], [], []
    for eps in epsilons:
        t0 = _time.perf_counter()
        psi0 = synthesize(solution, eps, 0.0, corrector=corrector)
        traj = run_reference(grid, psi0, eps, T, dt=eps / dt_factor, coupling=coupling)
        psiT = synthesize(solution, eps, T, corrector=corrector)
        ref = traj.psi[-1]
        num = np.sqrt(np.sum(np.abs(ref - psiT) ** 2) * dv)
        den = np.sqrt(np.sum(np.abs(ref) ** 2) * dv)
        err = float(num / den)
        errors.append(err)
        runtimes.append(_time.perf_counter() - t0)
        flags.append("floor" if err < error_floor else "")
    p, resid = fit_order(epsilons, errors)
    if any(flags):
        p, resid = float("nan"), float("inf")
    return ConvergenceTable(list(epsilons), errors, p, resid, runtimes, flags)
