"""Spectral and variational solvers: Dirac spectra, psi-solves, gradient flow.

The Dirac operator is assembled as a sparse matrix over the grid so that
eigenvalue computations can use shift-invert Lanczos (ARPACK via scipy with
a fixed start vector for determinism) and linear solves can use a sparse
factorization. The action is indefinite in psi, so the psi equation is
treated by residual minimization, never by energy descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .action import total_action
from .clifford import GAMMAS, OMEGA, WILSON_MASS
from .fields import (
    GravitinoField,
    MapField,
    ModelState,
    VectorSpinorField,
    coupling_field,
    normalize_sphere,
    projections_PQ,
    pushforward,
)
from .noether import StateOps
from .spinors import WILSON_R, SpinStructure
from .torus import MetricField, TorusGrid, l2_norm

_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1.0 / 12.0), (1, 8.0 / 12.0), (-1, -8.0 / 12.0), (-2, 1.0 / 12.0)),
}


class SolverGapError(RuntimeError):
    """Linear solve refused: spectral gap below threshold."""

    def __init__(self, message: str, report: "SpectrumReport"):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# sparse assembly


def _shift_1d(n: int, step: int, sign: float) -> sp.csr_matrix:
    rows = np.arange(n)
    cols = (rows + step) % n
    wraps = (rows + step) // n
    data = np.where(wraps % 2 == 0, 1.0, sign)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _diff_grid(grid: TorusGrid, axis: int, sign: float) -> sp.csr_matrix:
    n = grid.n
    eye = sp.identity(n, format="csr")
    out = sp.csr_matrix((n * n, n * n))
    for step, w in _STENCILS[grid.order]:
        t = _shift_1d(n, step, sign)
        block = sp.kron(t, eye) if axis == 0 else sp.kron(eye, t)
        out = out + (w * grid.n) * block
    return out.tocsr()


def _diag_grid(fieldvals: np.ndarray) -> sp.dia_matrix:
    return sp.diags(fieldvals.ravel(order="C"))


def assemble_dirac(g: MetricField, spin: SpinStructure) -> sp.csr_matrix:
    """Sparse matrix of the Dirac operator on (n*n*4)-vectors.

    State vectors flatten (n, n, 4) arrays in C order, grid-major.
    """
    grid = g.grid
    diffs = [_diff_grid(grid, axis, spin.sign(axis)) for axis in range(2)]
    op = None
    for alpha in range(2):
        frame_diff = (
            _diag_grid(g.b[..., 0, alpha]) @ diffs[0]
            + _diag_grid(g.b[..., 1, alpha]) @ diffs[1]
        )
        term = sp.kron(frame_diff, GAMMAS[alpha]) + sp.kron(
            _diag_grid(0.5 * g.omega12_frame[..., alpha]), GAMMAS[alpha] @ OMEGA
        )
        op = term if op is None else op + term
    op = op + sp.kron(_wilson_grid(g, spin), WILSON_MASS)
    return op.tocsr()


def _wilson_grid(g: MetricField, spin: SpinStructure, r: float = WILSON_R) -> sp.csr_matrix:
    """Grid matrix of the doubler regulator (spinor-scalar)."""
    grid = g.grid
    n = grid.n
    eye = sp.identity(n * n, format="csr")
    out = sp.csr_matrix((n * n, n * n))
    for axis in range(2):
        splus = _shift_1d(n, 1, spin.sign(axis))
        block = sp.kron(splus, sp.identity(n)) if axis == 0 else sp.kron(sp.identity(n), splus)
        fwd = (block - eye) * grid.n
        bwd = (eye - block.T) * grid.n
        out = out + bwd @ _diag_grid(g.wilson_midpoint[..., axis]) @ fwd
    return (-0.5 * r * grid.h**2) * _diag_grid(1.0 / g.sqrt_det) @ out


def _weights(g: MetricField) -> np.ndarray:
    """Discrete L^2 weights per spinor entry: h^2 sqrt(det g)."""
    w = (g.grid.h**2) * g.sqrt_det
    return np.repeat(w.ravel(order="C"), 4)


def _symmetrized(op: sp.csr_matrix, w: np.ndarray) -> sp.csr_matrix:
    ws = np.sqrt(w)
    return (sp.diags(ws) @ op @ sp.diags(1.0 / ws)).tocsr()


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumReport:
    """Lowest eigenvalues of the squared Dirac operator."""

    spin: SpinStructure
    metric_tag: str
    eigenvalues: tuple
    kernel_dim: int
    first_nonzero: float
    gap_ratio: float
    tol: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "spin": [self.spin.eps1, self.spin.eps2],
            "metric": self.metric_tag,
            "eigenvalues": list(self.eigenvalues),
            "kernel_dim": self.kernel_dim,
            "first_nonzero": self.first_nonzero,
            "gap_ratio": self.gap_ratio,
            "tol": self.tol,
        }


def _classify_kernel(eigs: np.ndarray, tol: float):
    """Split sorted eigenvalues of a PSD operator into kernel and bulk."""
    lam_max = float(eigs[-1]) if len(eigs) else 0.0
    nonzero = eigs[eigs > tol * max(lam_max, 1e-300)]
    if len(nonzero) == 0:
        return len(eigs), math.inf, math.inf
    first = float(nonzero[0])
    kernel = int(np.sum(eigs < tol * first))
    largest_kernel = float(eigs[kernel - 1]) if kernel else 0.0
    gap_ratio = first / max(largest_kernel, 1e-300)
    return kernel, first, gap_ratio


def _start_vector(dim: int) -> np.ndarray:
    """Fixed pseudorandom Lanczos start vector (deterministic reports)."""
    v0 = np.random.default_rng(20240718).standard_normal(dim)
    return v0 / np.linalg.norm(v0)


def smallest_eigenvalues(A: sp.csr_matrix, m: int, sigma: float = -0.5) -> np.ndarray:
    """Lowest m eigenvalues of a PSD sparse matrix by shift-invert Lanczos.

    A generous subspace dimension is used so that the high multiplicities of
    flat-torus spectra are resolved in full.
    """
    dim = A.shape[0]
    if m >= dim - 1:
        raise ValueError("requested too many eigenvalues for the grid size")
    ncv = min(dim - 1, max(4 * m, 40))
    vals = spla.eigsh(
        A, k=m, sigma=sigma, which="LM", v0=_start_vector(dim), ncv=ncv,
        return_eigenvectors=False,
    )
    return np.sort(np.maximum(vals, 0.0))


def dirac_spectrum(
    g: MetricField, spin: SpinStructure, m: int, metric_tag: str = "", tol: float = 1e-6
) -> SpectrumReport:
    """Lowest m eigenvalues of the (discretely symmetrized) squared Dirac operator."""
    if m > 64:
        raise ValueError("spectrum request capped at m <= 64")
    D = assemble_dirac(g, spin)
    M = _symmetrized(D, _weights(g))
    A = (M.T @ M).tocsr()
    eigs = smallest_eigenvalues(A, m)
    kernel, first, gap = _classify_kernel(eigs, tol)
    return SpectrumReport(spin, metric_tag, tuple(float(x) for x in eigs), kernel, first, gap, tol)


def dirac_symbol_eigenvalues(grid: TorusGrid, spin: SpinStructure, m: int) -> np.ndarray:
    """Fourier oracle: plane-wave eigenvalues of the flat discrete operator.

    Frequencies are integers shifted by 1/2 on twisted axes; each distinct
    wave vector contributes four (real) spinor modes. The advective symbol
    and the Wilson symbol add in quadrature (skew plus symmetric parts).
    """
    h = grid.h

    def symbol(freq: float) -> float:
        theta = 2.0 * math.pi * freq * h
        if grid.order == 2:
            return math.sin(theta) / h
        return (8.0 * math.sin(theta) - math.sin(2.0 * theta)) / (6.0 * h)

    def wilson_symbol(k1: float, k2: float) -> float:
        return WILSON_R * (
            (1.0 - math.cos(2.0 * math.pi * k1 * h))
            + (1.0 - math.cos(2.0 * math.pi * k2 * h))
        )

    kmax = grid.n // 2
    vals = []
    off1 = 0.5 if spin.eps1 == -1 else 0.0
    off2 = 0.5 if spin.eps2 == -1 else 0.0
    for i in range(-kmax, kmax):
        for j in range(-kmax, kmax):
            k1, k2 = i + off1, j + off2
            lam = symbol(k1) ** 2 + symbol(k2) ** 2 + wilson_symbol(k1, k2) ** 2
            vals.extend([lam] * 4)
    return np.sort(np.array(vals))[:m]


# ---------------------------------------------------------------------------
# psi solve (flat targets: the equation is linear)


@dataclass(frozen=True)
class SolveInfo:
    residual: float
    kernel_dim: int
    projection_norm: float
    sigma_min: float


def solve_psi(
    phi: MapField,
    chi: GravitinoField,
    g: MetricField,
    tol: float = 1e-8,
    gap_tol: float = 1e-6,
):
    """Solve EL(psi) = 0 at fixed (phi, chi): D psi - |Q chi|^2 psi = 2 (1 (x) phi_*) Q chi.

    Flat targets only (the equation is linear there). An invertible operator
    is solved by sparse LU; if the operator has a discrete kernel the system
    is solved in its orthogonal complement by LSQR and the kernel projection
    of the result is reported. A spectral gap below ``gap_tol`` without a
    clean kernel is refused.
    """
    if not phi.target.flat:
        raise NotImplementedError("solve_psi requires a flat target (linear equation)")
    grid = g.grid
    spin = chi.spin
    qchi = projections_PQ(chi)[1].a
    qchi_sq = np.einsum("...ab,...ab->...", qchi, qchi)
    pf = pushforward(phi, g)
    rhs_field = 2.0 * coupling_field(qchi, pf)

    dim = 4 * grid.n**2
    D = assemble_dirac(g, spin)
    L = (D - sp.kron(_diag_grid(qchi_sq), np.eye(2 * 2))).tocsr()

    # spectral gap of the symmetrized normal operator
    M = _symmetrized(L, _weights(g))
    A = (M.T @ M).tocsr()
    probe = min(8, dim - 2)
    eigs = smallest_eigenvalues(A, probe)
    kernel, first, gap = _classify_kernel(eigs, 1e-12)
    sigma_min = math.sqrt(max(float(eigs[0]), 0.0))
    report = SpectrumReport(spin, "solve_psi operator", tuple(float(x) for x in eigs),
                            kernel, first, gap, 1e-12)
    if kernel == 0 and sigma_min < gap_tol:
        raise SolverGapError(
            f"spectral gap {sigma_min:.3e} below threshold {gap_tol:.1e}", report
        )

    ncols = phi.target.dim
    out = np.zeros((grid.n, grid.n, 4, ncols))
    proj_norm = 0.0
    if np.abs(rhs_field).max() == 0.0:
        psi = VectorSpinorField(grid, spin, phi.target, out)
        return psi, SolveInfo(0.0, kernel, 0.0, sigma_min)

    if kernel == 0:
        lu = spla.splu(L.tocsc())
        for j in range(ncols):
            b = rhs_field[..., j].ravel(order="C")
            out[..., j] = lu.solve(b).reshape(grid.n, grid.n, 4)
    else:
        # least-squares solve; Krylov iterates stay orthogonal to the kernel
        for j in range(ncols):
            b = rhs_field[..., j].ravel(order="C")
            x = spla.lsqr(L, b, atol=1e-14, btol=1e-14, iter_lim=20000)[0]
            out[..., j] = x.reshape(grid.n, grid.n, 4)
        # report the kernel content of the solution
        kvecs = _kernel_basis(A, kernel)
        for j in range(ncols):
            coef = kvecs.T @ out[..., j].ravel(order="C")
            proj_norm = max(proj_norm, float(np.linalg.norm(coef)))

    psi = VectorSpinorField(grid, spin, phi.target, out)
    resid_field = _flat_el_psi(out, qchi_sq, rhs_field, g, spin)
    resid = l2_norm(resid_field, g)
    info = SolveInfo(resid, kernel, proj_norm, sigma_min)
    return psi, info


def _kernel_basis(A: sp.csr_matrix, kdim: int) -> np.ndarray:
    dim = A.shape[0]
    ncv = min(dim - 1, max(4 * kdim, 40))
    vals, vecs = spla.eigsh(A, k=kdim, sigma=-0.5, which="LM", v0=_start_vector(dim), ncv=ncv)
    return vecs


def _flat_el_psi(psi_a, qchi_sq, rhs_field, g, spin):
    from .spinors import dirac_arr

    return dirac_arr(psi_a, g, spin) - qchi_sq[..., None, None] * psi_a - rhs_field


# ---------------------------------------------------------------------------
# gradient flow


@dataclass
class FlowReport:
    iterations: int = 0
    converged: bool = False
    action_history: list = field(default_factory=list)
    action_monotone: bool = True
    residual_phi: float = math.inf
    residual_psi: float = math.inf
    psi_residual_monotone: bool = True
    step_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "action_monotone": self.action_monotone,
            "psi_residual_monotone": self.psi_residual_monotone,
            "final_action": self.action_history[-1] if self.action_history else None,
            "residual_phi": self.residual_phi,
            "residual_psi": self.residual_psi,
        }


def _phi_with(state: ModelState, comp: np.ndarray) -> ModelState:
    phi = state.phi
    if phi.target.kind == "sphere2":
        comp = normalize_sphere(comp)
    return state.replace(phi=MapField(state.grid, phi.target, comp, phi.winding))


def gradient_flow(
    initial: ModelState,
    tol: float = 1e-6,
    max_iter: int = 10000,
    psi_steps: int = 4,
) -> tuple:
    """Drive (phi, psi) to a critical point at frozen (g, chi).

    The phi update is Armijo line-search descent on the action along
    +2 EL(phi), the exact negative discrete gradient on flat targets. The
    psi update is conjugate-gradient residual minimization on the normal
    equations of the linear Dirac-type operator (the action is unbounded
    in psi, so descent on the action itself would be meaningless).
    """
    state = initial
    report = FlowReport()
    g, chi, spin = state.g, state.chi, state.spin
    flat = state.target.flat

    if not flat:
        raise NotImplementedError("gradient_flow currently supports flat targets")

    qchi = projections_PQ(chi)[1].a
    qchi_sq = np.einsum("...ab,...ab->...", qchi, qchi)
    D = assemble_dirac(g, spin)
    L = (D - sp.kron(_diag_grid(qchi_sq), np.eye(4))).tocsr()
    LT = L.T.tocsr()

    step = 0.1
    action = total_action(state).total
    report.action_history.append(action)
    # CG-on-normal-equations state (re-seeded whenever phi changes the rhs)
    cg = None
    prev_psi_res = math.inf

    for it in range(max_iter):
        ops = StateOps(state)
        r_phi = l2_norm(ops.el_phi, g)
        r_psi = l2_norm(ops.el_psi, g)
        report.iterations = it
        report.residual_phi, report.residual_psi = r_phi, r_psi
        if r_phi + r_psi <= tol:
            report.converged = True
            break

        # --- psi: CGNR iterations on L psi = rhs, warm-started
        pf = pushforward(state.phi, g)
        rhs = 2.0 * coupling_field(qchi, pf)
        x = state.psi.a.reshape(-1).copy()
        b = rhs.reshape(-1)
        r = b - L @ x
        z = LT @ r
        p = z.copy()
        zz = float(z @ z)
        for _ in range(psi_steps):
            if math.sqrt(float(r @ r)) * g.grid.h <= 0.1 * tol:
                break
            Lp = L @ p
            denom = float(Lp @ Lp)
            if denom == 0.0:
                break
            a_cg = zz / denom
            x = x + a_cg * p
            r = r - a_cg * Lp
            z_new = LT @ r
            zz_new = float(z_new @ z_new)
            p = z_new + (zz_new / zz) * p
            z, zz = z_new, zz_new
        new_psi = VectorSpinorField(state.grid, spin, state.target,
                                    x.reshape(state.psi.a.shape))
        state = state.replace(psi=new_psi)
        cur_psi_res = l2_norm(StateOps(state).el_psi, g)
        if cur_psi_res > prev_psi_res * (1.0 + 1e-12) and cur_psi_res > tol:
            report.psi_residual_monotone = False
        prev_psi_res = cur_psi_res

        # --- phi: Armijo backtracking along +2 EL(phi)
        ops = StateOps(state)
        action = total_action(state).total
        direction = 2.0 * ops.el_phi
        gnorm2 = l2_norm(direction, g) ** 2
        if gnorm2 > 0:
            s = min(step * 2.0, 1.0)
            accepted = False
            while s > 1e-14:
                cand = _phi_with(state, state.phi.comp + s * direction)
                a_new = total_action(cand).total
                if a_new <= action - 1e-4 * s * gnorm2:
                    if a_new > action:
                        report.action_monotone = False
                    state = cand
                    action = a_new
                    step = s
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                step = max(step * 0.5, 1e-14)
        report.action_history.append(action)
        report.step_history.append(step)
    else:
        report.iterations = max_iter

    ops = StateOps(state)
    report.residual_phi = l2_norm(ops.el_phi, g)
    report.residual_psi = l2_norm(ops.el_psi, g)
    report.converged = report.residual_phi + report.residual_psi <= tol
    return state, report
