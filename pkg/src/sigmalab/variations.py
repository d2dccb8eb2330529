"""Central-difference directional derivatives of the discrete action.

These are the oracles that pin every sign and index convention in the
Noether module: they differentiate nothing but the assembled action itself.
Sphere-valued maps are perturbed through normalization and the vector
spinor is carried along by tangential re-projection, which agrees with
parallel transport to second order and therefore does not disturb the
O(eps^2) accuracy of the central difference.

Metric variations transport spinor data by the exact metric transport: on
stored components this is the spin lift of the pointwise rotation relating
the flat-background frame of g + t k to the transported frame of g (the
rotation is O(t) and vanishes identically when the two metrics commute,
e.g. along conformal families).
"""

from __future__ import annotations

import numpy as np

from .action import total_action
from .clifford import OMEGA, apply_matrix
from .fields import (
    GravitinoField,
    MapField,
    ModelState,
    VectorSpinorField,
    normalize_sphere,
    tangent_project,
)
from .torus import MetricField, Sym2Field, frame_rotation_angle


def default_step(*arrays) -> float:
    scale = max((float(np.abs(a).max()) for a in arrays if a is not None), default=0.0)
    return 1.0e-4 * (1.0 + scale)


def _displace_phi(state: ModelState, eta: np.ndarray, t: float) -> ModelState:
    phi = state.phi
    if phi.target.kind == "sphere2":
        comp = normalize_sphere(phi.comp + t * eta)
        new_phi = MapField(state.grid, phi.target, comp, phi.winding)
        psi_a = tangent_project(comp, state.psi.a)
        new_psi = VectorSpinorField(state.grid, state.spin, state.target, psi_a)
        return state.replace(phi=new_phi, psi=new_psi)
    new_phi = MapField(state.grid, phi.target, phi.comp + t * eta, phi.winding)
    return state.replace(phi=new_phi)


def action_derivative_phi(state: ModelState, eta: np.ndarray, eps: float = None) -> float:
    """d/dt A(phi + t eta, ...) at t = 0 by central differences."""
    if eps is None:
        eps = default_step(state.phi.comp, eta)
    ap = total_action(_displace_phi(state, eta, eps)).total
    am = total_action(_displace_phi(state, eta, -eps)).total
    return (ap - am) / (2.0 * eps)


def action_derivative_psi(state: ModelState, eta: np.ndarray, eps: float = None) -> float:
    if eps is None:
        eps = default_step(state.psi.a, eta)
    psi_p = VectorSpinorField(state.grid, state.spin, state.target, state.psi.a + eps * eta)
    psi_m = VectorSpinorField(state.grid, state.spin, state.target, state.psi.a - eps * eta)
    ap = total_action(state.replace(psi=psi_p)).total
    am = total_action(state.replace(psi=psi_m)).total
    return (ap - am) / (2.0 * eps)


def action_derivative_chi(state: ModelState, zeta: np.ndarray, eps: float = None) -> float:
    if eps is None:
        eps = default_step(state.chi.a, zeta)
    chi_p = GravitinoField(state.grid, state.spin, state.chi.a + eps * zeta)
    chi_m = GravitinoField(state.grid, state.spin, state.chi.a - eps * zeta)
    ap = total_action(state.replace(chi=chi_p)).total
    am = total_action(state.replace(chi=chi_m)).total
    return (ap - am) / (2.0 * eps)


def spin_rotate(theta: np.ndarray, arr: np.ndarray) -> np.ndarray:
    """Apply the spin lift exp(theta/2 omega) pointwise on the spinor axis."""
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    extra = arr.ndim - 2
    idx = (...,) + (None,) * extra
    return c[idx] * arr + s[idx] * apply_matrix(OMEGA, arr)


def transport_state_to_metric(state: ModelState, g_new: MetricField) -> ModelState:
    """Carry (psi, chi) to g_new by the exact metric transport.

    On stored components the transport is the spin lift of the frame
    rotation angle for psi; the gravitino additionally rotates its frame
    index. The map phi is metric independent.
    """
    theta = frame_rotation_angle(state.g, g_new)
    psi_a = spin_rotate(theta, state.psi.a)
    chi_a = spin_rotate(theta, state.chi.a)
    c, s = np.cos(theta), np.sin(theta)
    rot0 = c[..., None] * chi_a[..., 0] + (-s)[..., None] * chi_a[..., 1]
    rot1 = s[..., None] * chi_a[..., 0] + c[..., None] * chi_a[..., 1]
    chi_a = np.stack([rot0, rot1], axis=-1)
    return state.replace(
        g=g_new,
        psi=VectorSpinorField(state.grid, state.spin, state.target, psi_a),
        chi=GravitinoField(state.grid, state.spin, chi_a),
    )


def action_derivative_metric(state: ModelState, k: Sym2Field, eps: float = None) -> float:
    """d/dt A under g + t k with spinor data carried by the metric transport."""
    if eps is None:
        eps = default_step(state.g.comps) / max(float(np.abs(k.comps).max()), 1e-30)
    gp = MetricField(state.grid, state.g.comps + eps * k.comps)
    gm = MetricField(state.grid, state.g.comps - eps * k.comps)
    ap = total_action(transport_state_to_metric(state, gp)).total
    am = total_action(transport_state_to_metric(state, gm)).total
    return (ap - am) / (2.0 * eps)


def action_derivative_combined(
    state: ModelState,
    dphi: np.ndarray = None,
    dpsi: np.ndarray = None,
    dchi: np.ndarray = None,
    eps: float = None,
) -> float:
    """Directional derivative along a simultaneous (dphi, dpsi, dchi)."""
    if eps is None:
        eps = default_step(
            dphi if dphi is not None else None,
            dpsi if dpsi is not None else None,
            dchi if dchi is not None else None,
        )

    def at(t: float) -> float:
        st = state
        if dphi is not None:
            st = _displace_phi(st, dphi, t)
        if dpsi is not None:
            psi = VectorSpinorField(st.grid, st.spin, st.target, st.psi.a + t * dpsi)
            st = st.replace(psi=psi)
        if dchi is not None:
            chi = GravitinoField(st.grid, st.spin, st.chi.a + t * dchi)
            st = st.replace(chi=chi)
        return total_action(st).total

    return (at(eps) - at(-eps)) / (2.0 * eps)
