"""Real representation of the Clifford algebra Cl(0,2) on R^4.

The two generators are fixed once and for all as integer block matrices

    gamma1 = [[0, I2], [-I2, 0]],   gamma2 = [[0, J2], [J2, 0]],
    J2 = [[0, -1], [1, 0]],

so that gamma_a gamma_b + gamma_b gamma_a = -2 delta_ab, gamma_a^T = -gamma_a,
and the volume element omega = gamma1 gamma2 satisfies omega^2 = -Id.
All algebraic identities checked elsewhere are representation independent;
this particular choice makes them exact in integer arithmetic.
"""

from __future__ import annotations

import numpy as np

_J2 = np.array([[0.0, -1.0], [1.0, 0.0]])
_I2 = np.eye(2)

GAMMA1 = np.block([[np.zeros((2, 2)), _I2], [-_I2, np.zeros((2, 2))]])
GAMMA2 = np.block([[np.zeros((2, 2)), _J2], [_J2, np.zeros((2, 2))]])
OMEGA = GAMMA1 @ GAMMA2

#: gammas stacked as GAMMAS[a] for frame index a in {0, 1}
GAMMAS = np.stack([GAMMA1, GAMMA2])

#: all products gamma_a gamma_b, indexed GG[a, b]
GG = np.einsum("aij,bjk->abik", GAMMAS, GAMMAS)

#: symmetric involution anticommuting with both gammas (omega times a right
#: quaternion unit in Cl(0,2) = H); mass terms built on it add to the Dirac
#: symbol in quadrature instead of shifting the two real branches
WILSON_MASS = np.array(
    [
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ]
)


class GammaRep:
    """The fixed gamma matrices bundled for callers that want one object."""

    gamma1 = GAMMA1
    gamma2 = GAMMA2
    omega = OMEGA


def apply_matrix(m: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Apply a 4x4 matrix on the spinor axis of ``s``.

    The spinor axis is the last axis of shape 4 directly after the grid axes;
    fields of shape (..., 4) and (..., 4, k) are both supported, with the
    matrix always acting on the first axis of length 4 from position -2 or -1.
    """
    if s.shape[-1] == 4:
        return np.einsum("ab,...b->...a", m, s)
    if s.ndim >= 2 and s.shape[-2] == 4:
        return np.einsum("ab,...bk->...ak", m, s)
    raise ValueError(f"no spinor axis of length 4 in shape {s.shape}")


def gamma_apply(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Clifford multiplication (v1 gamma1 + v2 gamma2) s.

    ``v`` holds orthonormal-frame components and broadcasts against the grid
    axes of ``s``: shape (2,) for a constant vector or (..., 2) pointwise.
    """
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    if v.shape == (2,):
        return apply_matrix(v[0] * GAMMA1 + v[1] * GAMMA2, s)
    # pointwise coefficients
    if s.shape[-1] == 4:
        g1 = np.einsum("ab,...b->...a", GAMMA1, s)
        g2 = np.einsum("ab,...b->...a", GAMMA2, s)
        return v[..., :1] * 0 + v[..., 0, None] * g1 + v[..., 1, None] * g2
    g1 = np.einsum("ab,...bk->...ak", GAMMA1, s)
    g2 = np.einsum("ab,...bk->...ak", GAMMA2, s)
    return v[..., 0, None, None] * g1 + v[..., 1, None, None] * g2


def omega_apply(s: np.ndarray) -> np.ndarray:
    """Left multiplication by the volume element omega = gamma1 gamma2."""
    return apply_matrix(OMEGA, s)


def two_form_apply(a: np.ndarray, det_g: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Clifford action of the 2-form a dx1^dx2: (a / sqrt(det g)) omega s.

    ``a`` and ``det_g`` are scalars or scalar fields broadcasting against the
    grid axes of ``s``; det_g must be positive everywhere.
    """
    a = np.asarray(a, dtype=float)
    det_g = np.asarray(det_g, dtype=float)
    if np.any(det_g <= 0):
        raise ValueError("two_form_apply requires det_g > 0 everywhere")
    coef = a / np.sqrt(det_g)
    out = omega_apply(s)
    if s.shape[-1] == 4:
        return coef[..., None] * out
    return coef[..., None, None] * out
