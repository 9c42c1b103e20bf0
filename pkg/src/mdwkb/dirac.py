"""Exact 4x4 algebra of the free Dirac symbol.

Matrices, band eigenvalues, spectral projectors, partial inverses and group
velocities, plus a randomized identity-verification suite.  Everything here
is a pure function of its inputs; momenta ``xi`` may be a single 3-vector or
an array of shape ``(..., 3)`` and matrix-valued results broadcast to
``(..., 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BANDS = ("+", "-")

_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)
_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

_ALPHA = tuple(
    np.block([[_Z2, s], [s, _Z2]]) for s in _SIGMA
)
_BETA = np.block([[_I2, _Z2], [_Z2, -_I2]])
_ID4 = np.eye(4, dtype=complex)


def band_sign(band: str) -> int:
    if band == "+":
        return 1
    if band == "-":
        return -1
    raise ValueError(f"band must be '+' or '-', got {band!r}")


def dirac_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return copies of (alpha1, alpha2, alpha3, beta)."""
    return _ALPHA[0].copy(), _ALPHA[1].copy(), _ALPHA[2].copy(), _BETA.copy()


def _as_xi(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 3:
        raise ValueError("momentum must have trailing dimension 3")
    return xi


def alpha_dot(v) -> np.ndarray:
    """alpha . v for v of shape (..., 3); returns (..., 4, 4)."""
    v = np.asarray(v)
    return (
        v[..., 0, None, None] * _ALPHA[0]
        + v[..., 1, None, None] * _ALPHA[1]
        + v[..., 2, None, None] * _ALPHA[2]
    )


def symbol(xi) -> np.ndarray:
    """Free Dirac symbol D(xi) = alpha . xi + beta."""
    return alpha_dot(_as_xi(xi)) + _BETA


def lam(xi) -> np.ndarray:
    """lambda(xi) = sqrt(|xi|^2 + 1)."""
    xi = _as_xi(xi)
    return np.sqrt(np.sum(xi * xi, axis=-1) + 1.0)


def eigenvalue(band: str, xi) -> np.ndarray:
    """Band energy h_pm(xi) = pm sqrt(|xi|^2 + 1)."""
    return band_sign(band) * lam(xi)


def projector(band: str, xi) -> np.ndarray:
    """Spectral projector Pi_pm(xi) = (Id + pm D(xi)/lambda(xi)) / 2."""
    xi = _as_xi(xi)
    s = band_sign(band)
    return 0.5 * (_ID4 + (s / lam(xi))[..., None, None] * symbol(xi))


def partial_inverse(band: str, xi) -> np.ndarray:
    """Partial inverse Lambda_pm(xi) = Pi_mp(xi) / h_mp(xi).

    Satisfies Lambda_pm Pi_pm = 0 and Lambda_pm D(xi) X = (Id - Pi_pm) X,
    because D acts as h_mp on the range of Pi_mp.
    """
    other = "-" if band == "+" else "+"
    h = eigenvalue(other, _as_xi(xi))
    return projector(other, xi) / h[..., None, None]


def group_velocity(band: str, xi) -> np.ndarray:
    """omega_pm(xi) = pm xi / sqrt(|xi|^2 + 1); always subluminal."""
    xi = _as_xi(xi)
    return band_sign(band) * xi / lam(xi)[..., None]


def apply_matrix(mat: np.ndarray, spinor: np.ndarray) -> np.ndarray:
    """Apply a (..., 4, 4) matrix field to a (..., 4) spinor field."""
    return np.einsum("...ij,...j->...i", mat, spinor)


@dataclass
class IdentityReport:
    """Per-identity maximum deviations over the sampled momenta."""

    samples: int
    seed: int
    max_dev: dict = field(default_factory=dict)
    # The reflection identity printed in the source material,
    # Pi_pm(-xi) = Pi_mp(xi), fails for the massive symbol (it holds only
    # when beta is absent).  Its deviation is reported separately and is
    # NOT part of the pass/fail budget; the correct massive-case reflection
    # Pi_pm(-xi) = beta Pi_pm(xi) beta is what gets verified.
    literal_reflection_dev: float = 0.0

    @property
    def worst(self) -> float:
        return max(self.max_dev.values())

    def lines(self) -> list[str]:
        out = [f"identity suite: {self.samples} samples, seed {self.seed}"]
        for name, dev in sorted(self.max_dev.items()):
            out.append(f"  {name:<24s} max |dev| = {dev:.3e}")
        out.append(
            f"  [info] literal band-swap reflection deviates by "
            f"{self.literal_reflection_dev:.3e} (expected O(1); see README)"
        )
        return out


def verify_identities(samples: int, seed: int = 0) -> IdentityReport:
    """Check the symbol algebra on random momenta xi in [-5, 5]^3.

    Verified: anticommutation relations, projector idempotence/orthogonality/
    completeness, spectral decomposition, the commutation identities used by
    the transport derivation, the beta-conjugation reflection, and both
    defining relations of the partial inverse.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-5.0, 5.0, size=(samples, 3))
    X = rng.normal(size=(samples, 4)) + 1j * rng.normal(size=(samples, 4))

    dev: dict[str, float] = {}

    def rec(name, arr):
        dev[name] = max(dev.get(name, 0.0), float(np.max(np.abs(arr))))

    # anticommutation: alpha^k alpha^l + alpha^l alpha^k = 2 delta_kl,
    # alpha^k beta + beta alpha^k = 0
    for k in range(3):
        for l in range(3):
            rec(
                "anticommutation",
                _ALPHA[k] @ _ALPHA[l] + _ALPHA[l] @ _ALPHA[k]
                - 2.0 * (k == l) * _ID4,
            )
        rec("anticommutation", _ALPHA[k] @ _BETA + _BETA @ _ALPHA[k])

    D = symbol(xi)
    lv = lam(xi)
    Pp = projector("+", xi)
    Pm = projector("-", xi)

    rec("projector_idempotent", Pp @ Pp - Pp)
    rec("projector_idempotent", Pm @ Pm - Pm)
    rec("projector_orthogonal", Pp @ Pm)
    rec("projector_complete", Pp + Pm - _ID4)
    rec("projector_hermitian", Pp - np.conj(np.swapaxes(Pp, -1, -2)))
    rec("projector_trace", np.einsum("...ii", Pp).real - 2.0)
    rec("spectral_decomposition", lv[:, None, None] * (Pp - Pm) - D)

    # (band energy under reflection) and the beta-conjugation reflection
    rec("reflection_energy", lam(-xi) - lv)
    rec("reflection_beta", projector("+", -xi) - _BETA @ Pp @ _BETA)
    rec("reflection_beta", projector("-", -xi) - _BETA @ Pm @ _BETA)
    lit = float(np.max(np.abs(projector("+", -xi) - Pm)))

    # Pi_pm D = h_pm Pi_pm
    rec("band_action", Pp @ D - lv[:, None, None] * Pp)
    rec("band_action", Pm @ D + lv[:, None, None] * Pm)

    # Pi_pm alpha^k Pi_pm = omega_pm_k Pi_pm
    wp = group_velocity("+", xi)
    for k in range(3):
        rec("velocity_projection", Pp @ _ALPHA[k] @ Pp - wp[:, k, None, None] * Pp)
        rec("velocity_projection", Pm @ _ALPHA[k] @ Pm + wp[:, k, None, None] * Pm)
        # alpha^k Pi_pm = Pi_mp alpha^k + omega_pm_k Id
        rec("band_swap", _ALPHA[k] @ Pp - Pm @ _ALPHA[k] - wp[:, k, None, None] * _ID4)
        rec("band_swap", _ALPHA[k] @ Pm - Pp @ _ALPHA[k] + wp[:, k, None, None] * _ID4)

    # partial inverse: Lambda_pm Pi_pm = 0, Lambda_pm D X = (Id - Pi_pm) X
    Lp = partial_inverse("+", xi)
    Lm = partial_inverse("-", xi)
    rec("partial_inverse_kernel", Lp @ Pp)
    rec("partial_inverse_kernel", Lm @ Pm)
    DX = apply_matrix(D, X)
    rec("partial_inverse_action", apply_matrix(Lp, DX) - (X - apply_matrix(Pp, X)))
    rec("partial_inverse_action", apply_matrix(Lm, DX) - (X - apply_matrix(Pm, X)))

    return IdentityReport(samples=samples, seed=seed, max_dev=dev,
                          literal_reflection_dev=lit)
