"""Symmetry transformations of model states and their invariance defects.

Four symmetry families are exercised: rescaled conformal rescaling, super
Weyl shifts of the gravitino, grid-aligned translations (the exactly
representable diffeomorphisms), and the degenerate supersymmetry variation.
Infinitesimal diffeomorphisms are measured through the variation identity,
with the vector-spinor flow derivative given by the spinor Lie derivative
column-wise (target-projected on curved targets); this operational choice
is validated against exact grid-shift transport in the tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .clifford import GAMMAS, apply_matrix
from .fields import (
    GravitinoField,
    MapField,
    ModelState,
    VectorSpinorField,
    projections_PQ,
    pushforward,
    tangent_project,
)
from .noether import StateOps, lie_gravitino
from .spinors import (
    SpinorField,
    dirac_arr,
    lie_spinor_arr,
    spin_derivative_arr,
)
from .torus import (
    MetricField,
    TorusGrid,
    VectorField,
    integrate,
    l2_norm,
    lie_metric,
    shifted,
    sym2_inner,
)
from .variations import action_derivative_combined, default_step


def apply_rescaled_conformal(state: ModelState, u: np.ndarray) -> ModelState:
    """g -> e^{2u} g with stored psi, chi components scaled by e^{-u/2}.

    The frame part of the transport is absorbed by the frame trivialization;
    only the conformal weight acts on stored components.
    """
    u = np.asarray(u, dtype=float)
    scale = np.exp(-0.5 * u)[..., None, None]
    return state.replace(
        g=MetricField.conformal_of(state.g, u),
        psi=VectorSpinorField(state.grid, state.spin, state.target, scale * state.psi.a),
        chi=GravitinoField(state.grid, state.spin, scale * state.chi.a),
    )


def apply_super_weyl(state: ModelState, zeta: GravitinoField) -> ModelState:
    """chi -> chi + P zeta; the projection is applied internally."""
    p_part = projections_PQ(zeta)[0]
    return state.replace(
        chi=GravitinoField(state.grid, state.spin, state.chi.a + p_part.a)
    )


def apply_translation(state: ModelState, steps) -> ModelState:
    """Shift all fields by whole grid steps, with spin twists on wraparound."""
    s1, s2 = int(steps[0]), int(steps[1])
    spin = state.spin

    def shift_plain(a):
        return shifted(shifted(a, 0, s1), 1, s2)

    def shift_twisted(a):
        return shifted(shifted(a, 0, s1, spin.sign(0)), 1, s2, spin.sign(1))

    phi = state.phi
    comp = shift_plain(phi.comp)
    if phi.target.kind == "flat_torus":
        offset = phi.winding @ (np.array([s1, s2]) * state.grid.h)
        comp = comp + offset[None, None, :]
    new_phi = MapField(state.grid, phi.target, comp, phi.winding)
    return state.replace(
        phi=new_phi,
        psi=VectorSpinorField(state.grid, spin, state.target, shift_twisted(state.psi.a)),
        g=MetricField(state.grid, shift_plain(state.g.comps)),
        chi=GravitinoField(state.grid, spin, shift_twisted(state.chi.a)),
    )


def flow_variation_psi(state: ModelState, X: np.ndarray) -> np.ndarray:
    """Covariant flow derivative of psi along X: spinor Lie derivative per
    target column, projected tangentially on curved targets."""
    out = lie_spinor_arr(X, state.psi.a, state.g, state.spin)
    if not state.target.flat:
        out = tangent_project(state.phi.comp, out)
    return out


def diffeo_defect_infinitesimal(state: ModelState, X: VectorField) -> float:
    """Residual of the four-term variation identity along a flow generator.

    -2 int <phi_* X, EL(phi)> + 2 int <d psi(X), EL(psi)>
    - 1/2 int <L_X g, T> + int <L_X chi, J>  -> 0 for any state.
    """
    ops = StateOps(state)
    g = state.g
    phi_star_x = np.einsum("...mb,...b->...m", state.phi.dphi(), X.comps)
    if not state.target.flat:
        phi_star_x = tangent_project(state.phi.comp, phi_star_x)
    t1 = -2.0 * integrate(np.einsum("...m,...m->...", phi_star_x, ops.el_phi), g)
    dpsi = flow_variation_psi(state, X.comps)
    t2 = 2.0 * integrate(np.einsum("...am,...am->...", dpsi, ops.el_psi), g)
    k = lie_metric(X.comps, g)
    k_frame = np.einsum("...ca,...cd,...db->...ab", g.b, k.mat, g.b)
    t3 = -0.5 * integrate(np.einsum("...ab,...ab->...", k_frame,
                                    _frame_mat(ops.em_frame)), g)
    lchi = lie_gravitino(X.comps, state.chi.a, g, state.spin)
    t4 = integrate(np.einsum("...ab,...ab->...", lchi, ops.supercurrent), g)
    return t1 + t2 + t3 + t4


def _frame_mat(comps: np.ndarray) -> np.ndarray:
    m = np.empty(comps.shape[:-1] + (2, 2))
    m[..., 0, 0] = comps[..., 0]
    m[..., 0, 1] = comps[..., 1]
    m[..., 1, 0] = comps[..., 1]
    m[..., 1, 1] = comps[..., 2]
    return m


# ---------------------------------------------------------------------------
# degenerate supersymmetry


@dataclass(frozen=True)
class SusyParameter:
    """Supersymmetry parameter spinor q."""

    q: SpinorField

    def twistor_defect(self, g: MetricField) -> float:
        """Sup norm of grad_X q + 1/2 gamma(X) D q over the frame directions."""
        dq = dirac_arr(self.q.a, g, self.q.spin)
        worst = 0.0
        for alpha in range(2):
            resid = spin_derivative_arr(self.q.a, alpha, g, self.q.spin)
            resid = resid + 0.5 * apply_matrix(GAMMAS[alpha], dq)
            worst = max(worst, float(np.abs(resid).max()))
        return worst


def susy_variation(state: ModelState, q: SusyParameter):
    """Infinitesimal transformations (d phi, d psi, d chi).

    d phi^i = <q, psi^i>,  d psi = -gamma(e_a) q (x) phi_* e_a,
    d chi = grad q sharp = grad_{e_a} q (x) e_a; the metric is unvaried.
    """
    qa = q.q.a
    dphi = np.einsum("...c,...cm->...m", qa, state.psi.a)
    pf = pushforward(state.phi, state.g)
    dpsi = np.zeros_like(state.psi.a)
    for alpha in range(2):
        dpsi -= np.einsum("...a,...m->...am", apply_matrix(GAMMAS[alpha], qa), pf[..., :, alpha])
    dchi = np.stack(
        [spin_derivative_arr(qa, alpha, state.g, q.q.spin) for alpha in range(2)], axis=-1
    )
    return dphi, dpsi, dchi


def susy_defect(state: ModelState, q: SusyParameter, eps: float = None) -> float:
    """Directional derivative of the action along the susy variation."""
    dphi, dpsi, dchi = susy_variation(state, q)
    if eps is None:
        eps = default_step(dphi, dpsi, dchi)
    return action_derivative_combined(state, dphi=dphi, dpsi=dpsi, dchi=dchi, eps=eps)


def twistor_family(
    q: SusyParameter, phi: MapField, t: float, g: MetricField
) -> VectorSpinorField:
    """Interpolating family psi_t = -t gamma(e_a) q (x) phi_* e_a."""
    tau_norm = _harmonicity_residual(phi, g)
    if tau_norm > 1e-6 * (1.0 + float(np.abs(phi.dphi()).max())):
        warnings.warn(
            f"twistor_family: phi has tension residual {tau_norm:.3e}; "
            "the family is critical only over harmonic maps",
            stacklevel=2,
        )
    pf = pushforward(phi, g)
    qa = q.q.a
    a = np.zeros((phi.grid.n, phi.grid.n, 4, phi.target.dim))
    for alpha in range(2):
        a -= t * np.einsum("...a,...m->...am", apply_matrix(GAMMAS[alpha], qa), pf[..., :, alpha])
    return VectorSpinorField(phi.grid, q.q.spin, phi.target, a)


def _harmonicity_residual(phi: MapField, g: MetricField) -> float:
    from .torus import diff

    flux = np.einsum("...ab,...mb->...ma", g.inv, phi.dphi()) * g.sqrt_det[..., None, None]
    tau = (diff(flux[..., 0], 0, g.grid) + diff(flux[..., 1], 1, g.grid)) / g.sqrt_det[..., None]
    return l2_norm(tau, g)
