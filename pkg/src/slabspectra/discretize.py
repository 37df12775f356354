"""Finite-dimensional models of the slab-transport Birman-Schwinger family.

The operator Q(z) = i sqrt(V) (L0 - z)^{-1} sqrt(V), V = c(x) K, compressed to
E = L^2(supp c, C^N), is discretized by a cell-averaged (piecewise-constant
Galerkin / Nystrom) scheme: every kernel in the family depends on x - y only,
so each cell-pair integral reduces to a 1D integral of the kernel against the
trapezoidal overlap ("hat") weight of the two cells.  Singular pieces -- the
ln|x-y| kernel, |x-y|, signed powers, and powers times logs -- are integrated
in closed form; entire remainders go through per-panel Gauss quadrature that
splits at the diagonal kink.

Vectors in E are stored cell-major, collision-basis minor: index = cell * N + i.
Coefficients carry the sqrt(cell width) scaling, so the Euclidean inner product
of coefficient vectors is the discrete L^2 inner product.

Three independent routes to Q(z) are provided:

* ``q_isotropic``  -- closed form for K = (1/2)<.,1>1, kernel
                      -(1/2) sqrt(c(x)) E_0(-i z |x-y|) sqrt(c(y));
* ``q_expansion``  -- sum over kernel orders T_j(z) (x) G_j for polynomial
                      collision kernels, log terms split off exactly;
* ``q_direct``     -- quadrature over the direction cosine mu of the explicit
                      resolvent kernel, on a contour dipped into complex mu to
                      tame the exp(-i z |x-y| / mu) oscillation near mu = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from .specfun import (
    EULER_GAMMA,
    BranchCutError,
    ConvergenceError,
    e0_array,
    exp_int_family,
    log_branch_array,
    theta_array,
)

#: Gauss nodes per hat panel for the smooth remainders
PANEL_GAUSS_N = 12

#: default direction-cosine quadrature size (per half interval, before doubling)
MU_NODES_DEFAULT = 200

_panel_x, _panel_w = np.polynomial.legendre.leggauss(PANEL_GAUSS_N)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Piecewise-constant cross-section c(x) with compact support.

    ``segments`` is a sequence of (x0, x1, value) with x0 < x1, disjoint,
    values >= 0.  ``diameter`` is the full diameter of the union of segments
    and ``half_diameter`` half of it.
    """

    segments: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        segs = tuple(sorted((float(a), float(b), float(v)) for a, b, v in self.segments))
        if not segs:
            raise ValueError("profile needs at least one segment")
        for a, b, v in segs:
            if not a < b:
                raise ValueError(f"segment ({a}, {b}) has nonpositive length")
            if v < 0:
                raise ValueError("cross-section values must be nonnegative")
        for (a0, b0, _), (a1, b1, _) in zip(segs, segs[1:]):
            if a1 < b0:
                raise ValueError("segments overlap")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def step(cls, amplitude: float, radius: float = 1.0) -> "Profile":
        """The symmetric step c = amplitude on [-radius, radius]."""
        return cls(segments=((-radius, radius, amplitude),))

    @property
    def support(self) -> tuple[float, float]:
        return self.segments[0][0], self.segments[-1][1]

    @property
    def diameter(self) -> float:
        lo, hi = self.support
        return hi - lo

    @property
    def half_diameter(self) -> float:
        return 0.5 * self.diameter

    @property
    def l1_norm(self) -> float:
        """integral of c over the line"""
        return sum((b - a) * v for a, b, v in self.segments)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for _, _, v in self.segments)

    def scaled(self, kappa: float) -> "Profile":
        return Profile(tuple((a, b, kappa * v) for a, b, v in self.segments))

    def value_at(self, x) -> np.ndarray:
        """c(x) on an array (half-open cells [x0, x1), last segment closed)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, v in self.segments:
            inside = (x >= a) & ((x < b) | (b == self.segments[-1][1]) & (x <= b))
            out[inside] = v
        return out


@dataclass(frozen=True)
class CollisionKernel:
    """Rank-N collision operator K = sum_i k_i^2 <., P_i> P_i on L^2(-1, 1).

    ``terms`` holds (k_i, coeffs_i) with coeffs in the power basis; the P_i
    must be orthonormal.  The isotropic kernel is the single term k = 1,
    P = 1/sqrt(2), i.e. K = (1/2) <., 1> 1.
    """

    mode: str  # 'isotropic' | 'polynomial'
    terms: tuple[tuple[float, tuple[float, ...]], ...]

    @classmethod
    def isotropic(cls) -> "CollisionKernel":
        return cls(mode="isotropic", terms=((1.0, (1.0 / np.sqrt(2.0),)),))

    @classmethod
    def legendre(cls, weights, degrees) -> "CollisionKernel":
        """Kernel built from normalized Legendre polynomials of given degrees."""
        terms = []
        for k, d in zip(weights, degrees):
            c = np.zeros(d + 1)
            c[d] = 1.0
            coeffs = npleg.leg2poly(c) * np.sqrt((2 * d + 1) / 2.0)
            terms.append((float(k), tuple(coeffs)))
        return cls(mode="polynomial", terms=tuple(terms))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([k for k, _ in self.terms])

    @property
    def norm(self) -> float:
        """operator norm of K (largest k_i^2 for orthonormal P_i)"""
        return float((self.weights ** 2).max())

    @property
    def max_degree(self) -> int:
        return max(len(c) - 1 for _, c in self.terms)

    def eval_basis(self, mu) -> np.ndarray:
        """P_i(mu) stacked as columns, shape (len(mu), N); complex-safe."""
        mu = np.asarray(mu)
        cols = [nppoly.polyval(mu, np.asarray(c)) for _, c in self.terms]
        return np.stack(cols, axis=-1)

    def basis_at_zero(self) -> np.ndarray:
        return np.array([c[0] for _, c in self.terms])

    def gram(self) -> np.ndarray:
        """Exact L^2(-1,1) Gram matrix of the P_i (polynomial integration)."""
        n = self.n_terms
        g = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                prod = nppoly.polymul(self.terms[a][1], self.terms[b][1])
                anti = nppoly.polyint(prod)
                g[a, b] = nppoly.polyval(1.0, anti) - nppoly.polyval(-1.0, anti)
        return g

    def constant_eigenfunction_defect(self) -> float:
        """How far K 1 is from being a multiple of the constant function."""
        k1 = np.zeros(self.max_degree + 1)
        for k, c in self.terms:
            anti = nppoly.polyint(np.asarray(c))
            integ = nppoly.polyval(1.0, anti) - nppoly.polyval(-1.0, anti)
            contrib = k * k * integ * np.asarray(c)
            k1[: len(contrib)] += contrib
        return float(np.abs(k1[1:]).max(initial=0.0))

    def coeff_products(self) -> np.ndarray:
        """a[j, m, n] = coefficient of u^j in P_m(u) P_n(u)."""
        n = self.n_terms
        jmax = 2 * self.max_degree
        a = np.zeros((jmax + 1, n, n))
        for m in range(n):
            for nn in range(n):
                prod = nppoly.polymul(self.terms[m][1], self.terms[nn][1])
                a[: len(prod), m, nn] = prod
        return a

    def coupling_matrices(self) -> np.ndarray:
        """G[j] with entries k_m k_n * (coeff of u^j in P_m P_n)."""
        kk = np.outer(self.weights, self.weights)
        return self.coeff_products() * kk[None, :, :]


@dataclass(frozen=True)
class GridSpec:
    """Cells tiling the union of the profile segments exactly."""

    edges_per_segment: tuple[tuple[float, ...], ...]
    cell_values: tuple[float, ...]

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """(n_cells, 2) array of cell endpoints"""
        lo, hi = [], []
        for seg in self.edges_per_segment:
            lo.extend(seg[:-1])
            hi.extend(seg[1:])
        return np.column_stack([lo, hi])

    @property
    def n_cells(self) -> int:
        return len(self.cell_values)

    @cached_property
    def nodes(self) -> np.ndarray:
        e = self.cell_edges
        return 0.5 * (e[:, 0] + e[:, 1])

    @cached_property
    def weights(self) -> np.ndarray:
        e = self.cell_edges
        return e[:, 1] - e[:, 0]

    @cached_property
    def values(self) -> np.ndarray:
        return np.asarray(self.cell_values)

    def refined(self) -> "GridSpec":
        """Split every cell in two."""
        new_edges = []
        for seg in self.edges_per_segment:
            seg = np.asarray(seg)
            mid = 0.5 * (seg[:-1] + seg[1:])
            new_edges.append(tuple(np.sort(np.concatenate([seg, mid]))))
        return GridSpec(edges_per_segment=tuple(new_edges),
                        cell_values=tuple(np.repeat(self.cell_values, 2)))


def build_grid(profile: Profile, n_cells: int = 128) -> GridSpec:
    """Tile supp c with ~n_cells cells, allocated to segments by length.

    Cells never straddle segment boundaries, so c is constant on every cell.
    """
    lengths = np.array([b - a for a, b, _ in profile.segments])
    total = lengths.sum()
    counts = np.maximum(1, np.round(n_cells * lengths / total).astype(int))
    edges, values = [], []
    for (a, b, v), m in zip(profile.segments, counts):
        edges.append(tuple(np.linspace(a, b, m + 1)))
        values.extend([v] * m)
    return GridSpec(edges_per_segment=tuple(edges), cell_values=tuple(values))


@dataclass
class OperatorMatrix:
    """Dense matrix model of one member of the operator family on E."""

    entries: np.ndarray
    grid: GridSpec
    label: str               # 'Q' | 'Qtilde' | 'Y' | 'Y1' | 'Theta' | 'S' | 'Sinv'
    z: complex | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


# ---------------------------------------------------------------------------
# exact cell-pair moments: every kernel below is a function of t = x - y, and
# int_p int_q f(x-y) dy dx = h(b-c) + h(a-d) - h(a-c) - h(b-d) for any h with
# h'' = f
# ---------------------------------------------------------------------------

def _h_log(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0.0
    tt = t[nz]
    out[nz] = 0.5 * tt * tt * np.log(np.abs(tt)) - 0.75 * tt * tt
    return out


def _h_abs(t):
    t = np.asarray(t, dtype=float)
    return np.abs(t) ** 3 / 6.0


def _h_signed_pow(j):
    # h'' = sign(t)^j |t|^j = t^j
    def h(t):
        t = np.asarray(t, dtype=float)
        return t ** (j + 2) / ((j + 1) * (j + 2))
    return h


def _h_signed_powlog(j):
    # h'' = t^j ln|t|
    cj = (2 * j + 3) / ((j + 1) * (j + 2))

    def h(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        nz = t != 0.0
        tt = np.abs(t[nz])
        base = tt ** (j + 2) * (np.log(tt) - cj) / ((j + 1) * (j + 2))
        out[nz] = np.sign(t[nz]) ** j * base
        return out
    return h


def _h_sign(j):
    # h'' = sign(t)^j : even j -> 1, odd j -> sign(t)
    if j % 2 == 0:
        return lambda t: np.asarray(t, dtype=float) ** 2 / 2.0
    return lambda t: np.asarray(t, dtype=float) * np.abs(t) / 2.0


def _pair_table(h, grid: GridSpec) -> np.ndarray:
    e = grid.cell_edges
    a = e[:, 0][:, None]
    b = e[:, 1][:, None]
    c = e[:, 0][None, :]
    d = e[:, 1][None, :]
    return h(b - c) + h(a - d) - h(a - c) - h(b - d)


def cell_log_moment(cell_p, cell_q) -> float:
    """Exact double integral of ln|x-y| over the rectangle cell_p x cell_q."""
    a, b = cell_p
    c, d = cell_q
    v = _h_log(np.array([b - c, a - d, a - c, b - d]))
    return float(v[0] + v[1] - v[2] - v[3])


def cell_abs_moment(cell_p, cell_q) -> float:
    """Exact double integral of |x-y| over the rectangle cell_p x cell_q."""
    a, b = cell_p
    c, d = cell_q
    v = _h_abs(np.array([b - c, a - d, a - c, b - d]))
    return float(v[0] + v[1] - v[2] - v[3])


# ---------------------------------------------------------------------------
# assembler
# ---------------------------------------------------------------------------

class Assembler:
    """Caches per-(profile, grid, collision) geometry and builds the operators."""

    def __init__(self, profile: Profile, grid: GridSpec,
                 collision: CollisionKernel | None = None):
        self.profile = profile
        self.grid = grid
        self.collision = collision if collision is not None else CollisionKernel.isotropic()
        self.sqc = np.sqrt(grid.values)
        self.sqw = np.sqrt(grid.weights)
        self.v = self.sqc * self.sqw                    # the E-vector "sqrt(c)"
        self.scale = np.outer(self.sqc, self.sqc) / np.outer(self.sqw, self.sqw)
        self._build_hat_panels()

    # -- geometry ----------------------------------------------------------

    def _build_hat_panels(self):
        e = self.grid.cell_edges
        a = e[:, 0][:, None]
        b = e[:, 1][:, None]
        c = e[:, 0][None, :]
        d = e[:, 1][None, :]
        t0 = a - d
        t1 = np.minimum(a - c, b - d)
        t2 = np.maximum(a - c, b - d)
        t3 = b - c
        straddle = (t0 < 0) & (t3 > 0)
        extra = np.where(straddle, 0.0, t0)
        self._hat_bps = np.sort(
            np.stack([t0, t1, t2, t3, extra], axis=-1), axis=-1)
        self._hat_t = (t0, t1, t2, t3)

    def _hat_weight(self, t):
        t0, t1, t2, t3 = (x[..., None] for x in self._hat_t)
        return np.where(t < t1, t - t0, np.where(t <= t2, t1 - t0, t3 - t))

    def pair_smooth(self, f) -> np.ndarray:
        """int_p int_q f(x-y) for all cell pairs; f vectorized in t = x - y.

        Gauss quadrature per monotone panel of the overlap hat; panels are
        split at the diagonal so kernels with a kink in |x-y| stay smooth on
        every panel.
        """
        nc = self.grid.n_cells
        total = np.zeros((nc, nc), dtype=complex)
        bps = self._hat_bps
        for k in range(4):
            lo = bps[..., k]
            hi = bps[..., k + 1]
            half = 0.5 * (hi - lo)
            cen = 0.5 * (hi + lo)
            t = cen[..., None] + half[..., None] * _panel_x
            wgt = half[..., None] * _panel_w
            total += (f(t) * self._hat_weight(t) * wgt).sum(axis=-1)
        return total

    # -- z-independent building blocks --------------------------------------

    @cached_property
    def log_moments(self) -> np.ndarray:
        return _pair_table(_h_log, self.grid)

    @cached_property
    def abs_moments(self) -> np.ndarray:
        return _pair_table(_h_abs, self.grid)

    @cached_property
    def area_moments(self) -> np.ndarray:
        return np.outer(self.grid.weights, self.grid.weights)

    @cached_property
    def y_matrix(self) -> np.ndarray:
        """kernel (1/2) sqrt(c(x)) (gamma + ln|x-y|) sqrt(c(y)), exact"""
        return 0.5 * self.scale * (EULER_GAMMA * self.area_moments + self.log_moments)

    @cached_property
    def y1_matrix(self) -> np.ndarray:
        """kernel (1/2) sqrt(c(x)) |x-y| sqrt(c(y)), exact"""
        return 0.5 * self.scale * self.abs_moments

    @cached_property
    def ell(self) -> np.ndarray:
        """the rank-one direction sqrt(c) P(0), flattened cell-major"""
        pz = self.collision.weights * self.collision.basis_at_zero()
        return np.kron(self.v, pz)

    @cached_property
    def _expansion_tables(self):
        """exact signed power / power-log / sign moments for all kernel orders"""
        jmax = 2 * self.collision.max_degree
        pow_m = np.stack([_pair_table(_h_signed_pow(j), self.grid)
                          for j in range(jmax + 1)])
        powlog_m = np.stack([_pair_table(_h_signed_powlog(j), self.grid)
                             for j in range(jmax + 1)])
        sign_m = np.stack([_pair_table(_h_sign(j), self.grid)
                           for j in range(jmax + 1)])
        return pow_m, powlog_m, sign_m

    @cached_property
    def qtilde_base(self) -> np.ndarray:
        """The z-independent part B of Qtilde(z) = ln(-iz) <., l> l + B.

        Obtained from the small-z limits of the kernel orders: the order-0
        kernel contributes (gamma + ln|x-y|) G_0 and each higher order its
        value at zero, -(-1)^j sign(x-y)^j / j * G_j.
        """
        G = self.collision.coupling_matrices()
        _, _, sign_m = self._expansion_tables
        base = np.kron(self.scale * (EULER_GAMMA * self.area_moments + self.log_moments),
                       G[0])
        for j in range(1, G.shape[0]):
            base += np.kron(self.scale * (-((-1.0) ** j) / j) * sign_m[j], G[j])
        return base

    # -- assemblies ----------------------------------------------------------

    def _check_z(self, z: complex) -> complex:
        z = complex(z)
        if z.real == 0.0 and z.imag <= 0.0:
            raise BranchCutError("z on the negative imaginary axis (or zero)")
        return z

    def q_isotropic(self, z: complex) -> OperatorMatrix:
        """Closed-form isotropic Q(z): exact log part + entire remainder.

        Q(z) = Y + (1/2) ln(-i z) <., sqrt(c)> sqrt(c)
                 - (1/2) sqrt(c) theta(-i z |x-y|) sqrt(c).
        """
        if self.collision.n_terms != 1:
            raise ValueError("isotropic assembly needs the rank-one kernel")
        z = self._check_z(z)
        lnz = complex(log_branch_array(np.array(z)))
        theta_part = self.pair_smooth(lambda t: theta_array(-1j * z * np.abs(t)))
        entries = (self.y_matrix
                   + 0.5 * lnz * np.outer(self.v, self.v)
                   - 0.5 * self.scale * theta_part)
        return OperatorMatrix(entries=entries, grid=self.grid, label="Q", z=z,
                              meta={"path": "isotropic"})

    def q_expansion(self, z: complex, verify: bool = False,
                    verify_tol: float = 1e-6) -> OperatorMatrix:
        """Q(z) as the sum over kernel orders, log singularities split exactly.

        Order j carries the scalar kernel -(-1)^j sign(x-y)^j E_j(-iz|x-y|)
        tensored with the coupling matrix G_j = {k_m k_n [u^j](P_m P_n)}.
        Writing E_j(s) = p_{j-1}(s) e^{-s} + (-1)^j/j! s^j (-ln s - gamma
        + theta(s)) splits each kernel into an entire part, handled by panel
        quadrature, and (x-y)^j and (x-y)^j ln|x-y| terms with exact moments.

        With ``verify`` the result is checked against the direction-cosine
        quadrature route and a disagreement beyond ``verify_tol`` (relative,
        Frobenius) is a hard error.
        """
        z = self._check_z(z)
        G = self.collision.coupling_matrices()
        jmax = G.shape[0] - 1
        lnz = complex(log_branch_array(np.array(z)))
        pow_m, powlog_m, _ = self._expansion_tables
        nc = self.grid.n_cells
        nN = self.collision.n_terms

        smooth = self._expansion_smooth_parts(z, jmax)

        entries = np.zeros((nc * nN, nc * nN), dtype=complex)
        miz = -1j * z
        fact = 1.0
        for j in range(jmax + 1):
            if j > 0:
                fact *= j
            sing = (miz ** j / fact) * (lnz * pow_m[j] + powlog_m[j])
            entries += np.kron(self.scale * (smooth[j] + sing), G[j])
        op = OperatorMatrix(entries=entries, grid=self.grid, label="Q", z=z,
                            meta={"path": "expansion"})
        if verify:
            ref = self.q_direct(z)
            num = np.linalg.norm(entries - ref.entries)
            den = max(np.linalg.norm(ref.entries), 1e-300)
            if num / den > verify_tol:
                raise ConvergenceError(
                    f"expansion/direct disagreement {num / den:.3e} "
                    f"exceeds {verify_tol:.1e}")
            op.meta["verified_against_direct"] = num / den
        return op

    def _expansion_smooth_parts(self, z, jmax):
        """Panel-quadrature integrals of the entire remainder of each order."""
        miz = -1j * z

        def f_all(t):
            s = miz * np.abs(t)
            sg = np.sign(t)
            th = theta_array(s)
            ex = np.exp(-s)
            out = np.empty((jmax + 1,) + t.shape, dtype=complex)
            p_prev = np.zeros_like(s)        # p_{-1} = 0
            cj = 1.0
            spow = np.ones_like(s)
            for j in range(jmax + 1):
                bracket = p_prev * ex + cj * spow * (th - EULER_GAMMA)
                out[j] = -((-1.0) ** j) * (sg ** j) * bracket
                p_prev = (1.0 - s * p_prev) / (j + 1)
                cj = -cj / (j + 1)
                spow = spow * s
            return out

        nc = self.grid.n_cells
        total = np.zeros((jmax + 1, nc, nc), dtype=complex)
        bps = self._hat_bps
        for k in range(4):
            lo = bps[..., k]
            hi = bps[..., k + 1]
            half = 0.5 * (hi - lo)
            cen = 0.5 * (hi + lo)
            t = cen[..., None] + half[..., None] * _panel_x
            wgt = (half[..., None] * _panel_w) * self._hat_weight(t)
            total += (f_all(t) * wgt).sum(axis=-1)
        return total

    def qtilde(self, z: complex) -> OperatorMatrix:
        """Qtilde(z) = ln(-i z) <., l> l + B with l = sqrt(c) P(0); exact."""
        z = self._check_z(z)
        lnz = complex(log_branch_array(np.array(z)))
        entries = self.qtilde_base + lnz * np.outer(self.ell, self.ell)
        return OperatorMatrix(entries=entries, grid=self.grid, label="Qtilde", z=z)

    def theta_op(self, z: complex, path: str = "auto") -> OperatorMatrix:
        """Theta(z) = Q(z) - Qtilde(z), the part vanishing at z = 0."""
        q = self.q(z, path=path)
        entries = q.entries - self.qtilde(z).entries
        return OperatorMatrix(entries=entries, grid=self.grid, label="Theta", z=z)

    def q(self, z: complex, path: str = "auto") -> OperatorMatrix:
        if path == "auto":
            path = "isotropic" if self.collision.n_terms == 1 else "expansion"
        if path == "isotropic":
            return self.q_isotropic(z)
        if path == "expansion":
            return self.q_expansion(z)
        if path == "direct":
            return self.q_direct(z)
        raise ValueError(f"unknown assembly path {path!r}")

    def y(self) -> OperatorMatrix:
        return OperatorMatrix(entries=self.y_matrix.copy(), grid=self.grid, label="Y")

    def y1(self) -> OperatorMatrix:
        return OperatorMatrix(entries=self.y1_matrix.copy(), grid=self.grid, label="Y1")

    # -- direction-cosine quadrature route -----------------------------------

    def q_direct(self, z: complex, n_nodes: int = MU_NODES_DEFAULT,
                 tol: float = 1e-8, max_doublings: int = 3,
                 dip: float = 0.5, grading: int = 3) -> OperatorMatrix:
        """Q(z) by quadrature of the resolvent kernel over the direction cosine.

        For each mu the spatial cell-pair integrals of exp(-i z (x-y)/mu) are
        exact; the mu integral uses Gauss-Legendre nodes pushed toward mu = 0
        by the map mu = v^grading and, when Re z != 0, dipped into the complex
        plane (legitimate by analyticity) so the kernel decays instead of
        oscillating as mu -> 0.  The rule is doubled until the entrywise
        change drops below ``tol``; failure to converge raises.

        Requires Im z >= 0, z != 0; on the real axis this produces the
        boundary values from above.
        """
        z = complex(z)
        if z == 0 or z.imag < 0:
            raise ValueError("direct assembly needs Im z >= 0 and z != 0")
        prev = self._q_direct_fixed(z, n_nodes, dip, grading)
        for _ in range(max_doublings):
            n_nodes *= 2
            cur = self._q_direct_fixed(z, n_nodes, dip, grading)
            delta = np.abs(cur - prev).max()
            if delta < tol:
                return OperatorMatrix(entries=cur, grid=self.grid, label="Q", z=z,
                                      meta={"path": "direct", "mu_nodes": n_nodes,
                                            "entry_change": float(delta)})
            prev = cur
        raise ConvergenceError(
            f"mu quadrature not converged at {n_nodes} nodes "
            f"(entrywise change {delta:.2e} > {tol:.1e}); "
            "z too close to the real axis needs stronger grading")

    def _q_direct_fixed(self, z, n_nodes, dip, grading):
        gx, gw = np.polynomial.legendre.leggauss(n_nodes)
        vv = 0.5 * (gx + 1.0)
        ww = 0.5 * gw
        s = np.sign(z.real) * dip
        # contour mu(v) = v^g (1 - i s (1 - v)); returns to the real endpoint 1
        shape = 1.0 - 1j * s * (1.0 - vv)
        mu_c = vv ** grading * shape
        jac = grading * vv ** (grading - 1) * shape + vv ** grading * (1j * s)

        e = self.grid.cell_edges
        e0c, e1c = e[:, 0], e[:, 1]
        XA = e1c[:, None] - e0c[None, :]
        XB = e0c[:, None] - e1c[None, :]
        XC = e0c[:, None] - e0c[None, :]
        XD = e1c[:, None] - e1c[None, :]
        wid = self.grid.weights
        nc = self.grid.n_cells
        nN = self.collision.n_terms
        iu = np.triu_indices(nc, 1)
        il = np.tril_indices(nc, -1)
        kk = np.outer(self.collision.weights, self.collision.weights)

        out = np.zeros((nc * nN, nc * nN), dtype=complex)
        for mu, wq in zip(mu_c, ww * jac):
            for sgn in (1.0, -1.0):
                m = sgn * mu
                w = -1j * z / m
                pairs = (_cexp(XA, w) - _cexp(XD, w) - _cexp(XC, w) + _cexp(XB, w)) / w ** 2
                spatial = np.zeros((nc, nc), dtype=complex)
                if sgn > 0:
                    spatial[iu] = pairs[iu]
                    np.fill_diagonal(spatial, _diag_pair(w * wid) * wid * wid)
                else:
                    spatial[il] = pairs[il]
                    np.fill_diagonal(spatial, _diag_pair(-w * wid) * wid * wid)
                basis = self.collision.eval_basis(np.array([m]))[0]
                coll = kk * np.outer(basis, basis)
                out += np.kron((sgn * 1j / m) * wq * spatial, coll)
        return np.kron(self.scale, np.ones((nN, nN))) * 1j * out


def _cexp(x, w):
    # exp(w x) with the unused (growing) half clamped; used entries all decay
    zz = w * x
    return np.exp(np.minimum(zz.real, 0.0) + 1j * zz.imag)


def _diag_pair(wh):
    """(exp(-wh) - 1 + wh) / (wh)^2: same-cell triangle integral, stable."""
    wh = np.asarray(wh, dtype=complex)
    out = np.empty_like(wh)
    small = np.abs(wh) <= 0.5
    if small.any():
        x = -wh[small]
        acc = np.full_like(x, 0.5)
        p = np.ones_like(x)
        fact = 2.0
        for n in range(3, 19):
            p = p * x
            fact *= n
            acc += p / fact
        out[small] = acc
    big = ~small
    if big.any():
        x = wh[big]
        out[big] = (np.exp(-x) - 1.0 + x) / x ** 2
    return out
