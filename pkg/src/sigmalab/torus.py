"""Discrete flat-torus domain: grids, stencils, metric fields and calculus.

The domain is the unit square torus R^2/Z^2 sampled on an n x n grid with
spacing h = 1/n. All derivatives are central finite differences of order 2
or 4 with periodic (optionally sign-twisted) wraparound. Metric fields are
arbitrary smooth SPD 2x2 fields; the orthonormal frame E_a = b(d_a) with
b = H^{-1/2} and the Levi-Civita connection coefficient w12 are cached per
point so that spinor calculus downstream can work in the frame gauge.

Array layout conventions used throughout the package:

    scalar field            (n, n)
    vector field X^a        (n, n, 2)      coordinate components
    one-form                (n, n, 2)
    symmetric 2-tensor      (n, n, 3)      components [k11, k12, k22]
    2x2 matrix field        (n, n, 2, 2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Central difference weights per order: {order: [(step, weight), ...]},
# weights in units of 1/h.
_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1.0 / 12.0), (1, 8.0 / 12.0), (-1, -8.0 / 12.0), (-2, 1.0 / 12.0)),
}


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n x n grid on the unit torus, n a power of two >= 8."""

    n: int
    order: int = 2

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if self.order not in _STENCILS:
            raise ValueError(f"stencil order must be 2 or 4, got {self.order}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def coords(self):
        """Meshgrid coordinate arrays (x1, x2), indexing 'ij'."""
        x = np.arange(self.n) / self.n
        return np.meshgrid(x, x, indexing="ij")


def check_same_grid(*grids: TorusGrid):
    g0 = grids[0]
    for g in grids[1:]:
        if g.n != g0.n or g.order != g0.order:
            raise GridMismatchError(f"grid mismatch: {g0} vs {g}")


def shifted(a: np.ndarray, axis: int, steps: int, sign: float = 1.0) -> np.ndarray:
    """Read a field at index + steps along a grid axis.

    Entries whose read crosses the periodic boundary pick up one factor of
    ``sign`` per wrap; this realizes the four spin structures of the torus.
    """
    n = a.shape[axis]
    idx = np.arange(n) + steps
    wraps = idx // n
    out = np.take(a, idx % n, axis=axis)
    if sign != 1.0:
        fac = np.where(wraps % 2 == 0, 1.0, sign)
        shape = [1] * a.ndim
        shape[axis] = n
        out = out * fac.reshape(shape)
    return out


def diff(a: np.ndarray, axis: int, grid: TorusGrid, sign: float = 1.0) -> np.ndarray:
    """Central stencil derivative along grid axis 0 or 1."""
    out = np.zeros_like(a)
    for step, w in _STENCILS[grid.order]:
        out += w * shifted(a, axis, step, sign)
    return out * grid.n


def deterministic_sum(a: np.ndarray) -> float:
    """Exactly rounded sum in fixed C traversal order (math.fsum)."""
    return math.fsum(a.ravel(order="C").tolist())


# ---------------------------------------------------------------------------
# analytic trigonometric field families


@dataclass(frozen=True)
class TrigPolynomial:
    """Real trig polynomial sum_k c_k cos(2 pi k.x) + s_k sin(2 pi k.x).

    Frequencies may be half-integers, which produces fields antiperiodic in
    the corresponding axis (used for twisted spinor components). Closed-form
    derivatives keep these usable as oracles against stencil calculus.
    """

    terms: tuple = field(default_factory=tuple)  # (k1, k2, c, s) per term

    def sample(self, grid: TorusGrid) -> np.ndarray:
        x1, x2 = grid.coords()
        out = np.zeros((grid.n, grid.n))
        for k1, k2, c, s in self.terms:
            th = TWO_PI * (k1 * x1 + k2 * x2)
            out += c * np.cos(th) + s * np.sin(th)
        return out

    def derivative(self, axis: int) -> "TrigPolynomial":
        new = []
        for k1, k2, c, s in self.terms:
            k = (k1, k2)[axis]
            new.append((k1, k2, TWO_PI * k * s, -TWO_PI * k * c))
        return TrigPolynomial(tuple(new))

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        return TrigPolynomial(self.terms + other.terms)

    def scaled(self, factor: float) -> "TrigPolynomial":
        return TrigPolynomial(tuple((k1, k2, factor * c, factor * s) for k1, k2, c, s in self.terms))


def constant_trig(value: float) -> TrigPolynomial:
    return TrigPolynomial(((0.0, 0.0, value, 0.0),))


def random_trig(
    rng: np.random.Generator,
    band: int,
    amplitude: float,
    half: tuple = (False, False),
    include_const: bool = True,
) -> TrigPolynomial:
    """Seeded band-limited field with sup norm bounded by ``amplitude``.

    Frequencies run over |k_i| <= band, shifted by 1/2 on twisted axes. The
    drawn coefficients are rescaled by their l1 norm, which bounds the sup
    norm of the field by ``amplitude`` exactly.
    """
    off1 = 0.5 if half[0] else 0.0
    off2 = 0.5 if half[1] else 0.0
    terms = []
    for i in range(-band, band + 1):
        for j in range(-band, band + 1):
            k1, k2 = i + off1, j + off2
            if k1 == 0.0 and k2 == 0.0 and not include_const:
                continue
            # avoid double-counting the (k, -k) redundancy of real waves
            if (k1, k2) < (-k1, -k2):
                continue
            c, s = rng.uniform(-1.0, 1.0, size=2)
            terms.append((k1, k2, c, s))
    norm = sum(abs(c) + abs(s) for _, _, c, s in terms)
    scale = amplitude / norm if norm > 0 else 0.0
    return TrigPolynomial(tuple((k1, k2, scale * c, scale * s) for k1, k2, c, s in terms))


# ---------------------------------------------------------------------------
# metric fields


def _sym_to_mat(comps: np.ndarray) -> np.ndarray:
    """(n, n, 3) [11, 12, 22] -> (n, n, 2, 2)."""
    m = np.empty(comps.shape[:-1] + (2, 2))
    m[..., 0, 0] = comps[..., 0]
    m[..., 0, 1] = comps[..., 1]
    m[..., 1, 0] = comps[..., 1]
    m[..., 1, 1] = comps[..., 2]
    return m


def _mat_to_sym(m: np.ndarray) -> np.ndarray:
    return np.stack([m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]], axis=-1)


@dataclass(frozen=True)
class Sym2Field:
    """Symmetric covariant 2-tensor in coordinate components [11, 12, 22]."""

    grid: TorusGrid
    comps: np.ndarray  # (n, n, 3)

    @property
    def mat(self) -> np.ndarray:
        return _sym_to_mat(self.comps)

    @classmethod
    def from_matrix(cls, grid: TorusGrid, m: np.ndarray) -> "Sym2Field":
        return cls(grid, _mat_to_sym(m))


@dataclass(frozen=True)
class VectorField:
    grid: TorusGrid
    comps: np.ndarray  # (n, n, 2), coordinate components X^a


class MetricField:
    """SPD metric field with cached frame and connection data.

    The background identification g = delta(H., .) makes H the matrix of g
    itself, b = H^{-1/2} the frame map (columns of b are the orthonormal
    frame E_a = b[:, a]) and w12 the Levi-Civita connection coefficient
    g(nabla E_1, E_2), precomputed both on coordinate directions and on the
    frame itself.
    """

    def __init__(self, grid: TorusGrid, comps: np.ndarray):
        comps = np.asarray(comps, dtype=float)
        if comps.shape != (grid.n, grid.n, 3):
            raise ValueError(f"metric components must have shape (n, n, 3), got {comps.shape}")
        self.grid = grid
        self.comps = comps
        g11, g12, g22 = comps[..., 0], comps[..., 1], comps[..., 2]
        det = g11 * g22 - g12 * g12
        bad = (det <= 0) | (g11 <= 0)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"metric is not SPD at grid point ({i}, {j})")
        self.det = det
        self.sqrt_det = np.sqrt(det)
        self.mat = _sym_to_mat(comps)
        inv = np.empty_like(self.mat)
        inv[..., 0, 0] = g22 / det
        inv[..., 0, 1] = -g12 / det
        inv[..., 1, 0] = -g12 / det
        inv[..., 1, 1] = g11 / det
        self.inv = inv
        # SPD 2x2 principal square root in closed form, then inverted
        s = self.sqrt_det
        t = np.sqrt(g11 + g22 + 2.0 * s)
        sq = (self.mat + s[..., None, None] * np.eye(2)) / t[..., None, None]
        self.binv = sq  # H^{1/2}
        b = np.empty_like(sq)
        b[..., 0, 0] = sq[..., 1, 1] / s
        b[..., 0, 1] = -sq[..., 0, 1] / s
        b[..., 1, 0] = -sq[..., 1, 0] / s
        b[..., 1, 1] = sq[..., 0, 0] / s
        self.b = b  # H^{-1/2}; E_a = b[..., :, a]
        self._cache: dict = {}

    # -- constructors -------------------------------------------------------

    @classmethod
    def flat(cls, grid: TorusGrid) -> "MetricField":
        comps = np.zeros((grid.n, grid.n, 3))
        comps[..., 0] = 1.0
        comps[..., 2] = 1.0
        return cls(grid, comps)

    @classmethod
    def conformal(cls, grid: TorusGrid, u: np.ndarray) -> "MetricField":
        e2u = np.exp(2.0 * np.asarray(u, dtype=float))
        comps = np.zeros((grid.n, grid.n, 3))
        comps[..., 0] = e2u
        comps[..., 2] = e2u
        return cls(grid, comps)

    @classmethod
    def conformal_of(cls, base: "MetricField", u: np.ndarray) -> "MetricField":
        """e^{2u} times an arbitrary base metric."""
        e2u = np.exp(2.0 * np.asarray(u, dtype=float))
        return cls(base.grid, e2u[..., None] * base.comps)

    # -- derived geometric data (lazy) --------------------------------------

    @property
    def dg(self) -> np.ndarray:
        """Stencil derivatives of the metric matrix, dg[mu] = D_mu g. (n,n,2,2,2)"""
        if "dg" not in self._cache:
            out = np.stack([diff(self.mat, 0, self.grid), diff(self.mat, 1, self.grid)], axis=2)
            self._cache["dg"] = out  # indices [..., mu, a, b]
        return self._cache["dg"]

    @property
    def christoffel(self) -> np.ndarray:
        """Gamma^c_{ab} from stencil derivatives of g. (n, n, 2, 2, 2) [c, a, b]."""
        if "gamma" not in self._cache:
            dg = self.dg  # [mu, a, b]
            # 1/2 g^{cd} (D_a g_{db} + D_b g_{da} - D_d g_{ab})
            term = np.einsum("...cd,...adb->...cab", self.inv, dg)
            term = 0.5 * (term + np.einsum("...cd,...bda->...cab", self.inv, dg)
                          - np.einsum("...cd,...dab->...cab", self.inv, dg))
            self._cache["gamma"] = term
        return self._cache["gamma"]

    @property
    def omega12_coord(self) -> np.ndarray:
        """Connection coefficient w12(d_mu) = g(nabla_{d_mu} E_1, E_2). (n, n, 2)"""
        if "w12c" not in self._cache:
            db = np.stack([diff(self.b, 0, self.grid), diff(self.b, 1, self.grid)], axis=2)
            # (nabla_mu E_1)^c = D_mu b^c_1 + Gamma^c_{mu d} b^d_1
            cov = db[..., :, :, 0] + np.einsum("...cmd,...d->...mc", self.christoffel, self.b[..., :, 0])
            w = np.einsum("...mc,...cd,...d->...m", cov, self.mat, self.b[..., :, 1])
            self._cache["w12c"] = w
        return self._cache["w12c"]

    @property
    def omega12_frame(self) -> np.ndarray:
        """w12(E_a), the coefficient contracted with the frame. (n, n, 2)"""
        if "w12f" not in self._cache:
            self._cache["w12f"] = np.einsum("...m,...ma->...a", self.omega12_coord, self.b)
        return self._cache["w12f"]

    @property
    def wilson_midpoint(self) -> np.ndarray:
        """sqrt(det g) g^{aa} averaged to the forward midpoints. (n, n, 2)

        Coefficient of the compact divergence-form Laplacian used by the
        Dirac doubler regulator; identically one on conformally flat metrics.
        """
        if "wilson_m" not in self._cache:
            m = self.sqrt_det[..., None] * np.stack(
                [self.inv[..., 0, 0], self.inv[..., 1, 1]], axis=-1
            )
            mid = np.empty_like(m)
            for axis in range(2):
                mid[..., axis] = 0.5 * (m[..., axis] + shifted(m[..., axis], axis, 1))
            self._cache["wilson_m"] = mid
        return self._cache["wilson_m"]


def frame_and_connection(g: MetricField):
    """Force and return the cached frame data (b, E-columns, w12 on frame)."""
    return g.b, g.b.transpose(0, 1, 3, 2), g.omega12_frame


# ---------------------------------------------------------------------------
# calculus


def integrate(f: np.ndarray, g: MetricField) -> float:
    """h^2 sum f sqrt(det g), exactly rounded in fixed traversal order."""
    if f.shape[:2] != (g.grid.n, g.grid.n):
        raise GridMismatchError(f"field shape {f.shape} does not match grid n={g.grid.n}")
    return deterministic_sum(f * g.sqrt_det) * g.grid.h**2


def l2_norm(arr: np.ndarray, g: MetricField) -> float:
    """L^2 norm with all non-grid axes contracted euclideanly."""
    dens = np.asarray(arr) ** 2
    while dens.ndim > 2:
        dens = dens.sum(axis=-1)
    return math.sqrt(max(integrate(dens, g), 0.0))


def grad_scalar(f: np.ndarray, g: MetricField) -> np.ndarray:
    """Gradient g^{ab} D_b f, coordinate components. (n, n, 2)"""
    df = np.stack([diff(f, 0, g.grid), diff(f, 1, g.grid)], axis=-1)
    return np.einsum("...ab,...b->...a", g.inv, df)


def div_vector(X: np.ndarray, g: MetricField) -> np.ndarray:
    """(1/sqrt det g) D_a (sqrt det g X^a)."""
    if X.shape[:2] != (g.grid.n, g.grid.n):
        raise GridMismatchError("vector field grid mismatch")
    out = diff(g.sqrt_det * X[..., 0], 0, g.grid) + diff(g.sqrt_det * X[..., 1], 1, g.grid)
    return out / g.sqrt_det


def div_sym2(k: np.ndarray, g: MetricField) -> np.ndarray:
    """Divergence one-form of a symmetric 2-tensor (coordinate components).

    (div k)_b = (1/sqrt det g) D_a (sqrt det g K^a_b)
                - 1/2 g^{ae} (D_b g_{ec}) K^c_a,   K = g^{-1} k.
    """
    if k.shape[:2] != (g.grid.n, g.grid.n):
        raise GridMismatchError("tensor field grid mismatch")
    kmat = _sym_to_mat(k) if k.shape[-1] == 3 else k
    K = np.einsum("...ac,...cb->...ab", g.inv, kmat)
    wK = g.sqrt_det[..., None, None] * K
    term1 = np.stack(
        [diff(wK[..., 0, b], 0, g.grid) + diff(wK[..., 1, b], 1, g.grid) for b in range(2)],
        axis=-1,
    ) / g.sqrt_det[..., None]
    # dg indices [mu, a, b]; contraction g^{ae} D_b g_{ec} K^c_a
    term2 = 0.5 * np.einsum("...ae,...bec,...ca->...b", g.inv, g.dg, K)
    return term1 - term2


def lie_metric(X: np.ndarray, g: MetricField) -> Sym2Field:
    """(L_X g)_{ab} = X^c D_c g_{ab} + g_{cb} D_a X^c + g_{ac} D_b X^c."""
    if X.shape[:2] != (g.grid.n, g.grid.n):
        raise GridMismatchError("vector field grid mismatch")
    dX = np.stack([diff(X, 0, g.grid), diff(X, 1, g.grid)], axis=-2)  # [..., a, c] = D_a X^c
    adv = np.einsum("...c,...cab->...ab", X, g.dg)
    lower = np.einsum("...cb,...ac->...ab", g.mat, dX)
    out = adv + lower + lower.swapaxes(-1, -2)
    return Sym2Field.from_matrix(g.grid, out)


def almost_complex(g: MetricField) -> np.ndarray:
    """J with g(JX, Y) = dvol(X, Y); J^2 = -Id. (n, n, 2, 2)"""
    J = np.empty_like(g.mat)
    J[..., :, 0] = g.sqrt_det[..., None] * g.inv[..., :, 1]
    J[..., :, 1] = -g.sqrt_det[..., None] * g.inv[..., :, 0]
    return J


def sym2_inner(k: Sym2Field, t: Sym2Field, g: MetricField) -> np.ndarray:
    """Pointwise inner product <k, t>_g = g^{ac} g^{bd} k_{ab} t_{cd}."""
    return np.einsum("...ac,...bd,...ab,...cd->...", g.inv, g.inv, k.mat, t.mat)


def spd_sqrt_2x2(m: np.ndarray) -> np.ndarray:
    """Principal square root of an SPD 2x2 matrix field, closed form."""
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    s = np.sqrt(det)
    t = np.sqrt(m[..., 0, 0] + m[..., 1, 1] + 2.0 * s)
    return (m + s[..., None, None] * np.eye(2)) / t[..., None, None]


def frame_rotation_angle(g: MetricField, g_t: MetricField) -> np.ndarray:
    """Angle of R = (g_t)^{1/2} g^{-1/2} (g^{-1/2} g_t g^{-1/2})^{-1/2}.

    R is the pointwise SO(2) rotation relating the flat-background frame of
    g_t to the metric-transported frame b^g_{g_t} applied to the frame of g.
    It vanishes along conformal families and more generally whenever the two
    metrics commute; the exact metric transport of spinor data between g and
    g_t is the spin lift of R composed with frame absorption.
    """
    inner = np.einsum("...ab,...bc,...cd->...ad", g.b, g_t.mat, g.b)
    mid = spd_sqrt_2x2(inner)
    # invert the SPD 2x2 square root
    det = mid[..., 0, 0] * mid[..., 1, 1] - mid[..., 0, 1] * mid[..., 1, 0]
    inv = np.empty_like(mid)
    inv[..., 0, 0] = mid[..., 1, 1] / det
    inv[..., 0, 1] = -mid[..., 0, 1] / det
    inv[..., 1, 0] = -mid[..., 1, 0] / det
    inv[..., 1, 1] = mid[..., 0, 0] / det
    R = np.einsum("...ab,...bc,...cd->...ad", g_t.binv, g.b, inv)
    return np.arctan2(R[..., 1, 0], R[..., 0, 0])
