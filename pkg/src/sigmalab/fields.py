"""Target manifolds, map fields, vector spinors, gravitinos, and couplings.

Implemented targets: flat R^n, flat torus R^n/Z^n (maps carry an integer
winding matrix plus a periodic part), and the unit 2-sphere stored through
ambient unit vectors in R^3 with projection-based covariant derivatives.
The curvature machinery is specialized to these cases: flat targets have
identically vanishing curvature terms, the sphere has parallel curvature,
so the gradient-of-curvature term is the identically-zero branch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .clifford import GAMMAS, GG, apply_matrix
from .spinors import (
    SpinStructure,
    SpinorField,
    check_same_spin,
    dirac_arr,
    spin_derivative_arr,
)
from .torus import MetricField, TorusGrid, check_same_grid, diff

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Target:
    """Target manifold descriptor; ``dim`` counts stored map components."""

    kind: str  # "flat_rn" | "flat_torus" | "sphere2"
    dim: int

    def __post_init__(self):
        if self.kind not in ("flat_rn", "flat_torus", "sphere2"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "sphere2" and self.dim != 3:
            raise ValueError("sphere2 target stores 3 ambient components")

    @property
    def flat(self) -> bool:
        return self.kind in ("flat_rn", "flat_torus")

    @classmethod
    def flat_rn(cls, n: int) -> "Target":
        return cls("flat_rn", n)

    @classmethod
    def flat_torus(cls, n: int = 2) -> "Target":
        return cls("flat_torus", n)

    @classmethod
    def sphere2(cls) -> "Target":
        return cls("sphere2", 3)


@dataclass(frozen=True)
class MapField:
    """Map into the target: winding part plus periodic components.

    For a flat-torus target the map is phi(x) = A x + p(x) with integer
    winding matrix A (dim x 2) and periodic p; only d(phi) = A + dp ever
    enters the functionals, so the non-periodic part is never sampled.
    Sphere maps store pointwise unit vectors in ``comp``.
    """

    grid: TorusGrid
    target: Target
    comp: np.ndarray  # (n, n, dim)
    winding: Optional[np.ndarray] = None  # (dim, 2) integers, flat_torus only

    def __post_init__(self):
        if self.comp.shape != (self.grid.n, self.grid.n, self.target.dim):
            raise ValueError("map component shape does not match grid/target")
        if self.target.kind == "flat_torus" and self.winding is None:
            object.__setattr__(self, "winding", np.zeros((self.target.dim, 2)))
        if self.target.kind == "sphere2":
            norms = np.linalg.norm(self.comp, axis=-1)
            if np.abs(norms - 1.0).max() > UNIT_TOL:
                raise ValueError("sphere2 map values must be unit vectors to 1e-12")

    def dphi(self) -> np.ndarray:
        """Coordinate derivative d_b phi^j including winding. (n, n, dim, 2)"""
        d = np.stack([diff(self.comp, 0, self.grid), diff(self.comp, 1, self.grid)], axis=-1)
        if self.target.kind == "flat_torus":
            d = d + self.winding[None, None, :, :]
        return d


def normalize_sphere(comp: np.ndarray) -> np.ndarray:
    return comp / np.linalg.norm(comp, axis=-1, keepdims=True)


def tangent_project(phi_comp: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Project target-index values onto the tangent plane at phi.

    Works for (n, n, dim) vectors and (n, n, 4, dim) vector spinors alike;
    the contraction runs over the last (target) axis.
    """
    if v.ndim == phi_comp.ndim:
        rad = np.einsum("...m,...m->...", v, phi_comp)
        return v - rad[..., None] * phi_comp
    rad = np.einsum("...am,...m->...a", v, phi_comp)
    return v - rad[..., None] * phi_comp[..., None, :]


@dataclass(frozen=True)
class VectorSpinorField:
    """Spinor with target index: section of S tensor phi^* TN. (n, n, 4, dim)"""

    grid: TorusGrid
    spin: SpinStructure
    target: Target
    a: np.ndarray

    def __post_init__(self):
        if self.a.shape != (self.grid.n, self.grid.n, 4, self.target.dim):
            raise ValueError("vector spinor shape does not match grid/target")

    @classmethod
    def zero(cls, grid, spin, target):
        return cls(grid, spin, target, np.zeros((grid.n, grid.n, 4, target.dim)))


@dataclass(frozen=True)
class GravitinoField:
    """Spinor with frame index: section of S tensor TM. (n, n, 4, 2)"""

    grid: TorusGrid
    spin: SpinStructure
    a: np.ndarray

    def __post_init__(self):
        if self.a.shape != (self.grid.n, self.grid.n, 4, 2):
            raise ValueError("gravitino shape must be (n, n, 4, 2)")

    @classmethod
    def zero(cls, grid, spin):
        return cls(grid, spin, np.zeros((grid.n, grid.n, 4, 2)))


@dataclass(frozen=True)
class ModelState:
    """The full tuple (phi, psi; g, chi) on one grid, spin structure, target."""

    phi: MapField
    psi: VectorSpinorField
    g: MetricField
    chi: GravitinoField

    def __post_init__(self):
        check_same_grid(self.phi.grid, self.psi.grid, self.g.grid, self.chi.grid)
        check_same_spin(self.psi.spin, self.chi.spin)
        if self.phi.target != self.psi.target:
            raise ValueError(
                f"target mismatch between phi ({self.phi.target}) and psi ({self.psi.target})"
            )

    @property
    def grid(self) -> TorusGrid:
        return self.phi.grid

    @property
    def spin(self) -> SpinStructure:
        return self.psi.spin

    @property
    def target(self) -> Target:
        return self.phi.target

    def replace(self, **kw) -> "ModelState":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# couplings


def pushforward(phi: MapField, g: MetricField) -> np.ndarray:
    """Frame pushforward (phi_* E_a)^j = b^c_a d_c phi^j. (n, n, dim, 2)

    For the sphere the result is projected onto the tangent plane at phi.
    """
    check_same_grid(phi.grid, g.grid)
    pf = np.einsum("...jc,...ca->...ja", phi.dphi(), g.b)
    if phi.target.kind == "sphere2":
        pf = pf - np.einsum("...m,...ma->...a", phi.comp, pf)[..., None, :] * phi.comp[..., :, None]
    return pf


def projections_PQ(chi: GravitinoField):
    """Complementary projections of S tensor TM: P + Q = id.

    P chi = -1/2 gamma_b gamma_a chi^a (x) e_b,
    Q chi = -1/2 gamma_a gamma_b chi^a (x) e_b.
    """
    p = -0.5 * np.einsum("bqac,...cq->...ab", GG, chi.a)
    q = -0.5 * np.einsum("qbac,...cq->...ab", GG, chi.a)
    return (
        GravitinoField(chi.grid, chi.spin, p),
        GravitinoField(chi.grid, chi.spin, q),
    )


def q_projection_arr(chi_a: np.ndarray) -> np.ndarray:
    """Q part on a raw gravitino array."""
    return -0.5 * np.einsum("qbac,...cq->...ab", GG, chi_a)


def covariant_psi_derivative(psi: VectorSpinorField, phi: MapField, g: MetricField, alpha: int):
    """Frame covariant derivative of a vector spinor along E_alpha.

    Flat targets: column-wise spin derivative. Sphere: tangential projection
    of the ambient column-wise derivative (pullback Levi-Civita connection).
    """
    d = spin_derivative_arr(psi.a, alpha, g, psi.spin)
    if phi.target.kind == "sphere2":
        d = tangent_project(phi.comp, d)
    return d


def twisted_dirac(psi: VectorSpinorField, phi: MapField, g: MetricField) -> VectorSpinorField:
    """Dirac operator twisted by the pullback connection of the target."""
    from .spinors import wilson_arr

    check_same_grid(psi.grid, phi.grid, g.grid)
    if phi.target != psi.target:
        raise ValueError("twisted_dirac: psi and phi targets differ")
    if phi.target.flat:
        out = dirac_arr(psi.a, g, psi.spin)
    else:
        out = apply_matrix(GAMMAS[0], covariant_psi_derivative(psi, phi, g, 0))
        out += apply_matrix(GAMMAS[1], covariant_psi_derivative(psi, phi, g, 1))
        out += tangent_project(phi.comp, wilson_arr(psi.a, g, psi.spin))
    return VectorSpinorField(psi.grid, psi.spin, psi.target, out)


def curvature_terms(psi: VectorSpinorField, phi: MapField):
    """Quartic curvature density Rm(psi), its psi-gradient SR, and S-nabla-R.

    For the sphere, R_{ijkl} = h_ik h_jl - h_il h_jk gives the closed forms

        Rm(psi) = |psi|^4 - |B|_F^2,      B_ij = <psi^i, psi^j>,
        SR(psi)^i = |psi|^2 psi^i - B_ij psi^j,

    which satisfy d/de Rm(psi + e eta) = 4 <SR(psi), eta> (the identity that
    pins SR) and <SR(psi), psi> = Rm(psi). Both implemented targets have
    parallel curvature, so S-nabla-R is identically zero.
    """
    n = psi.grid.n
    dim = psi.target.dim
    if psi.target.flat:
        zero_sr = np.zeros((n, n, 4, dim))
        return np.zeros((n, n)), zero_sr, np.zeros((n, n, dim))
    B = np.einsum("...ai,...aj->...ij", psi.a, psi.a)
    normsq = np.einsum("...ii->...", B)
    rm = normsq**2 - np.einsum("...ij,...ij->...", B, B)
    sr = normsq[..., None, None] * psi.a - np.einsum("...ij,...aj->...ai", B, psi.a)
    return rm, sr, np.zeros((n, n, dim))


def coupling_field(qchi_a: np.ndarray, pf: np.ndarray) -> np.ndarray:
    """(1 (x) phi_*) Q chi as a vector spinor: (Qchi)^b (x) phi_* E_b."""
    return np.einsum("...ab,...mb->...am", qchi_a, pf)
