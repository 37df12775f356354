"""Everything built on top of Q(z): the characteristic function S(z), the
discrete spectrum, the critical-amplitude set, classification of the real-axis
singularity at z = 0, asymptotic checks, and the a.c.-splitting diagnostic.

S(z) = (I + Q(z)) (I - Q(z))^{-1} is analytic and contractive in the upper
half plane; eigenvalues of the transport generator sit where ker(I + Q(z)) is
nontrivial, and the behaviour of S^{-1} at z = 0 decides between a bounded,
logarithmic, or first-order singularity, driven by the kernel of I + Y on the
orthogonal complement of sqrt(c).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, null_space, eigh
from scipy.optimize import brentq

from .discretize import (
    Assembler,
    CollisionKernel,
    GridSpec,
    OperatorMatrix,
    Profile,
    build_grid,
)
from .specfun import log_branch_array


class SolveFailure(RuntimeError):
    """A linear solve hit a (near-)singular matrix; carries the near-kernel."""

    def __init__(self, msg, near_kernel=None, sigma_min=None):
        super().__init__(msg)
        self.near_kernel = near_kernel
        self.sigma_min = sigma_min


@dataclass
class EigenvalueHit:
    z: complex
    residual: float


@dataclass
class TrajectoryFlow:
    """Eigenvalue curves of Qtilde(i eps) tracked over an eps list."""

    eps: np.ndarray                  # descending
    values: np.ndarray               # (n_eps, n) matched across eps
    ambiguous: list = field(default_factory=list)


@dataclass
class SingularValueProfile:
    k_grid: np.ndarray
    singular_values: np.ndarray      # (n_k, n)
    beta: float
    dim_below: np.ndarray            # per-k count of sigma < beta
    max_ker_dim: int


@dataclass
class FitReport:
    formula: str
    rays: tuple
    mags: np.ndarray
    residuals: np.ndarray            # (n_rays, n_mags)
    exponents: np.ndarray            # per-ray log-log slope
    exponent_mean: float
    details: dict = field(default_factory=dict)


@dataclass
class SpectralReport:
    eigenvalues: list
    bc_set: list
    in_critical_set: bool | None
    critical_margin: float
    classification: str              # 'none' | 'logarithmic' | 'first_order' | 'unresolved'
    coefficients: dict
    grid_cells: int
    notes: list = field(default_factory=list)


class SpectralSolver:
    """Bundles profile, grid and collision kernel; all operators come from here."""

    def __init__(self, profile: Profile, grid: GridSpec | int = 128,
                 collision: CollisionKernel | None = None):
        if isinstance(grid, int):
            grid = build_grid(profile, grid)
        self.profile = profile
        self.grid = grid
        self.collision = collision if collision is not None else CollisionKernel.isotropic()
        self.assembler = Assembler(profile, grid, self.collision)

    @property
    def isotropic(self) -> bool:
        return self.collision.n_terms == 1

    @property
    def dim(self) -> int:
        return self.grid.n_cells * self.collision.n_terms

    def refined(self) -> "SpectralSolver":
        return SpectralSolver(self.profile, self.grid.refined(), self.collision)

    # -- basic operator access ----------------------------------------------

    def q(self, z, path="auto") -> OperatorMatrix:
        return self.assembler.q(z, path=path)

    def qtilde(self, z) -> OperatorMatrix:
        return self.assembler.qtilde(z)

    def char(self, z, path="auto") -> OperatorMatrix:
        """S(z) = (I + Q)(I - Q)^{-1}, by linear solve (the factors commute)."""
        q = self.q(z, path=path).entries
        eye = np.eye(q.shape[0])
        a = eye - q
        cond = np.linalg.cond(a)
        s = np.linalg.solve(a, eye + q)
        return OperatorMatrix(entries=s, grid=self.grid, label="S", z=complex(z),
                              meta={"cond": float(cond)})

    def char_inv(self, z, path="auto") -> OperatorMatrix:
        """S^{-1}(z) = -I + 2 (I + Q(z))^{-1}."""
        q = self.q(z, path=path).entries
        eye = np.eye(q.shape[0])
        a = eye + q
        cond = np.linalg.cond(a)
        if not np.isfinite(cond) or cond > 1e14:
            sig, vec = self.kernel_vector_of(a)
            raise SolveFailure(
                f"I + Q(z) numerically singular at z = {z} (cond {cond:.2e})",
                near_kernel=vec, sigma_min=sig)
        s = np.linalg.solve(a, 2.0 * eye) - eye
        return OperatorMatrix(entries=s, grid=self.grid, label="Sinv", z=complex(z),
                              meta={"cond": float(cond)})

    @staticmethod
    def kernel_vector_of(mat) -> tuple[float, np.ndarray]:
        u, sig, vh = np.linalg.svd(mat)
        return float(sig[-1]), vh[-1].conj()

    def kernel_vector(self, z, path="auto") -> tuple[float, np.ndarray]:
        """Smallest singular value of I + Q(z) and its right singular vector."""
        q = self.q(z, path=path).entries
        return self.kernel_vector_of(np.eye(q.shape[0]) + q)

    # -- symmetric pieces (isotropic machinery) ------------------------------

    def y_entries(self) -> np.ndarray:
        return self.assembler.y_matrix

    def y1_entries(self) -> np.ndarray:
        return self.assembler.y1_matrix

    def sqrtc_vector(self) -> np.ndarray:
        """Coefficient vector of the function sqrt(c) in E (isotropic layout)."""
        return self.assembler.v

    def q_iso_symmetric(self, eps: float) -> np.ndarray:
        """Real symmetric Q(i eps) for the isotropic kernel."""
        ent = self.assembler.q_isotropic(1j * eps).entries
        m = ent.real
        return 0.5 * (m + m.T)

    def qtilde_iso_symmetric(self, eps: float) -> np.ndarray:
        ent = self.assembler.qtilde(1j * eps).entries
        m = ent.real
        return 0.5 * (m + m.T)


# ---------------------------------------------------------------------------
# discrete spectrum
# ---------------------------------------------------------------------------

def discrete_spectrum_isotropic(solver: SpectralSolver,
                                eps_range=(1e-7, 80.0),
                                n_scan: int = 41) -> tuple[list[EigenvalueHit], dict]:
    """Eigenvalues i*beta of the dissipative generator, isotropic kernel.

    Eigenvalue curves of the selfadjoint family Q(i eps) increase monotonically
    in eps, so each beta is the unique root of (j-th smallest eigenvalue) = -1,
    found by bracketing on a log grid and Brent refinement.
    """
    if not solver.isotropic:
        raise ValueError("isotropic search requires the rank-one collision kernel")
    notes = {"boundary_warning": False}
    if solver.profile.is_zero:
        return [], notes
    lo, hi = eps_range
    eps_grid = np.geomspace(lo, hi, n_scan)
    eigs = np.array([np.sort(np.linalg.eigvalsh(solver.q_iso_symmetric(e)))
                     for e in eps_grid])
    n_curves = int((eigs[0] <= -1.0).sum())
    if (eigs[-1] <= -1.0).any():
        notes["boundary_warning"] = True   # a curve has not crossed by eps_hi
    hits = []
    for j in range(n_curves):
        curve = eigs[:, j]
        if curve[-1] < -1.0:
            continue
        idx = int(np.argmax(curve > -1.0))
        a, b = eps_grid[idx - 1], eps_grid[idx]

        def f(e, jj=j):
            return np.sort(np.linalg.eigvalsh(solver.q_iso_symmetric(e)))[jj] + 1.0

        beta = brentq(f, a, b, xtol=1e-14, rtol=1e-13)
        sig, _ = solver.kernel_vector(1j * beta)
        hits.append(EigenvalueHit(z=1j * beta, residual=sig))
    hits.sort(key=lambda h: -h.z.imag)
    return hits, notes


def _logdet(solver, z, path, cache):
    if z not in cache:
        q = solver.q(z, path=path).entries
        lu, piv = lu_factor(np.eye(q.shape[0]) + q)
        diag = np.diag(lu)
        sign_perm = 1.0 - 2.0 * ((piv != np.arange(len(piv))).sum() % 2)
        logmag = float(np.log(np.abs(diag)).sum())
        phase = float(np.angle(diag).sum() + (0.0 if sign_perm > 0 else np.pi))
        cache[z] = (logmag, phase)
    return cache[z]


def _phase_change(solver, z0, z1, path, cache, depth=0, max_depth=40):
    """Continuously accumulated phase of det(I+Q) from z0 to z1."""
    _, p0 = _logdet(solver, z0, path, cache)
    _, p1 = _logdet(solver, z1, path, cache)
    d = np.mod(p1 - p0 + np.pi, 2 * np.pi) - np.pi
    if abs(d) <= np.pi / 2 and depth > 0:
        return d
    if depth >= max_depth:
        raise RuntimeError("contour phase tracking failed to resolve a jump")
    zm = 0.5 * (z0 + z1)
    return (_phase_change(solver, z0, zm, path, cache, depth + 1, max_depth)
            + _phase_change(solver, zm, z1, path, cache, depth + 1, max_depth))


def _winding(solver, rect, path, cache, samples_per_edge=10):
    re0, re1, im0, im1 = rect
    corners = [complex(re0, im0), complex(re1, im0),
               complex(re1, im1), complex(re0, im1), complex(re0, im0)]
    total = 0.0
    for a, b in zip(corners[:-1], corners[1:]):
        ts = np.linspace(0.0, 1.0, samples_per_edge + 1)
        pts = [a + (b - a) * t for t in ts]
        for p0, p1 in zip(pts[:-1], pts[1:]):
            total += _phase_change(solver, p0, p1, path, cache, depth=1)
    w = total / (2 * np.pi)
    if abs(w - round(w)) > 0.05:
        raise RuntimeError(f"non-integer winding number {w:.3f}")
    return int(round(w))


def discrete_spectrum_general(solver: SpectralSolver, rect,
                              path: str = "auto",
                              min_box: float = 2e-2) -> list[EigenvalueHit]:
    """Eigenvalues inside a rectangle in the upper half plane, by the argument
    principle on det(I + Q(z)) with quadtree refinement and Newton polish."""
    re0, re1, im0, im1 = rect
    if im0 <= 0:
        raise ValueError("contour must avoid the real axis (im0 > 0)")
    cache = {}
    boxes = [(re0, re1, im0, im1)]
    roots = []
    while boxes:
        box = boxes.pop()
        w = _winding(solver, box, path, cache)
        if w == 0:
            continue
        b_re0, b_re1, b_im0, b_im1 = box
        if max(b_re1 - b_re0, b_im1 - b_im0) < min_box:
            z0 = complex(0.5 * (b_re0 + b_re1), 0.5 * (b_im0 + b_im1))
            roots.append(_newton_polish(solver, z0, path))
            continue
        # split off-center, retrying with jitter if a cut line passes through
        # a zero of the determinant (phase tracking then cannot resolve it)
        for frac in (0.53, 0.461, 0.587):
            rm = b_re0 + frac * (b_re1 - b_re0)
            imd = b_im0 + (1.0 - frac) * (b_im1 - b_im0)
            quads = [(b_re0, rm, b_im0, imd), (rm, b_re1, b_im0, imd),
                     (b_re0, rm, imd, b_im1), (rm, b_re1, imd, b_im1)]
            try:
                if sum(_winding(solver, q, path, cache) for q in quads) == w:
                    boxes.extend(quads)
                    break
            except RuntimeError:
                continue
        else:
            raise RuntimeError(f"could not split box {box} cleanly")
    # dedupe
    uniq = []
    for r in sorted(roots, key=lambda h: (h.z.real, h.z.imag)):
        if all(abs(r.z - u.z) > 10 * min_box for u in uniq):
            uniq.append(r)
    return uniq


def _newton_polish(solver, z0, path, maxiter=14):
    z = z0
    h_rel = 1e-6
    for _ in range(maxiter):
        h = h_rel * (1.0 + abs(z))
        qc = solver.q(z, path=path).entries
        qp = solver.q(z + h, path=path).entries
        qm = solver.q(z - h, path=path).entries
        dq = (qp - qm) / (2 * h)
        a = np.eye(qc.shape[0]) + qc
        dlogdet = np.trace(np.linalg.solve(a, dq))
        step = -1.0 / dlogdet
        z = z + step
        if abs(step) < 1e-12 * (1.0 + abs(z)):
            break
    sig, _ = solver.kernel_vector(z, path=path)
    return EigenvalueHit(z=complex(z), residual=sig)


# ---------------------------------------------------------------------------
# eigenvalue flow of Qtilde(i eps) and the critical set
# ---------------------------------------------------------------------------

def eta_flow(solver: SpectralSolver, eps_list=None) -> TrajectoryFlow:
    """Eigenvalues of Qtilde(i eps) matched across eps by eigenvector overlap."""
    if not solver.isotropic:
        raise ValueError("eigenvalue flow is part of the isotropic machinery")
    if eps_list is None:
        eps_list = np.geomspace(1e-1, 1e-8, 15)
    eps_list = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    vals_all = []
    ambiguous = []
    prev_vecs = None
    order = None
    from scipy.optimize import linear_sum_assignment
    for i, e in enumerate(eps_list):
        vals, vecs = eigh(solver.qtilde_iso_symmetric(e))
        if prev_vecs is not None:
            overlap = np.abs(prev_vecs.T @ vecs)
            row, col = linear_sum_assignment(-overlap)
            perm = np.empty_like(col)
            perm[row] = col
            vals = vals[perm]
            vecs = vecs[:, perm]
            matched = overlap[row, perm[row]]
            weak = np.where(matched < 1.0 / np.sqrt(2.0))[0]
            for j in weak:
                ambiguous.append({"eps": float(e), "trajectory": int(j),
                                  "overlap": float(matched[j])})
        prev_vecs = vecs
        vals_all.append(vals)
    return TrajectoryFlow(eps=eps_list, values=np.array(vals_all), ambiguous=ambiguous)


def bc_set(flow: TrajectoryFlow) -> list[tuple[float, float]]:
    """Limits of the eigenvalue trajectories as eps -> 0.

    Fits eta(eps) = k + b / ln(eps) over sliding 3-point windows (the rank-one
    logarithmic term makes 1/ln(eps) the natural small parameter); the window
    discrepancy plus fit residual is the reported error.  The single runaway
    trajectory escaping to -infinity along the sqrt(c) direction is dropped.
    """
    eps = flow.eps
    vals = flow.values
    n_eps, n = vals.shape
    if n_eps < 4:
        raise ValueError("need at least 4 eps points")
    lne = np.log(eps)
    out = []
    for j in range(n):
        traj = vals[:, j]
        # runaway: still sliding ~ ln eps at the small end
        tail_slope = (traj[-1] - traj[-2]) / (lne[-1] - lne[-2])
        if abs(tail_slope) > 1e-3 * max(1.0, abs(traj[-1])) and traj[-1] < traj[0] - 1.0:
            continue
        x = 1.0 / lne

        def window_fit(sl):
            A = np.column_stack([np.ones(len(x[sl])), x[sl]])
            coef, res, *_ = np.linalg.lstsq(A, traj[sl], rcond=None)
            resid = float(np.sqrt(res[0])) if len(res) else 0.0
            return coef[0], resid

        k_last, r_last = window_fit(slice(n_eps - 3, n_eps))
        k_prev, _ = window_fit(slice(n_eps - 4, n_eps - 1))
        out.append((float(k_last), float(abs(k_last - k_prev) + r_last)))
    out.sort()
    return out


def compressed_limit_spectrum(solver: SpectralSolver):
    """Eigen-decomposition of Y compressed to the orthogonal complement of
    sqrt(c): the exact grid-level limit set of the eigenvalue flow."""
    y = solver.y_entries()
    v = solver.sqrtc_vector()
    w = null_space(v[None, :] / np.linalg.norm(v))
    vals, vecs = eigh(w.T @ y @ w)
    return vals, w @ vecs


def kappa_scan(solver: SpectralSolver, eps_list=None,
               kappa_max: float = np.inf) -> list[dict]:
    """Critical amplitudes: kappa*c is critical iff -1/kappa is in the limit set.

    Returns ascending kappa = -1/k for the negative limits k, with error bars
    propagated from the extrapolation errors.
    """
    flow = eta_flow(solver, eps_list)
    limits = bc_set(flow)
    out = []
    for k, err in limits:
        if k < 0:
            kap = -1.0 / k
            if kap <= kappa_max:
                out.append({"kappa": kap, "error": err / k ** 2, "limit": k})
    out.sort(key=lambda d: d["kappa"])
    return out


def critical_kappas_exact(solver: SpectralSolver, defect_tol: float = 1e-10):
    """Grid-exact critical amplitudes from the compressed spectrum, each tagged
    'first_order' when the compressed eigenvector is an exact eigenvector of Y
    orthogonal to sqrt(c) (nontrivial kernel subspace) else 'logarithmic'."""
    vals, vecs = compressed_limit_spectrum(solver)
    y = solver.y_entries()
    out = []
    for lam, u in zip(vals, vecs.T):
        if lam >= 0:
            continue
        defect = np.linalg.norm(y @ u - lam * u)
        kind = "first_order" if defect < defect_tol * max(1.0, abs(lam)) else "logarithmic"
        out.append({"kappa": -1.0 / lam, "limit": float(lam), "kind": kind,
                    "defect": float(defect)})
    out.sort(key=lambda d: d["kappa"])
    return out


def confirm_critical_kappas(profile: Profile, cells: int = 128,
                            kappa_max: float = np.inf, max_count: int | None = None):
    """Continuum-level confirmation of the critical amplitudes.

    Combines the grid-exact critical kappas of two grid levels by Richardson
    extrapolation (the scheme converges at second order) and measures the
    smallest singular value of the discretized S(0) at the combined kappa on
    both levels: a genuine continuum kernel makes it shrink by about the
    refinement factor squared.
    """
    coarse = SpectralSolver(profile, cells)
    fine = coarse.refined()
    k_c = [d for d in critical_kappas_exact(coarse) if d["kappa"] <= kappa_max]
    k_f = critical_kappas_exact(fine)
    out = []
    for item in k_c[: max_count if max_count else len(k_c)]:
        match = min(k_f, key=lambda d: abs(d["kappa"] - item["kappa"]))
        k_rich = match["kappa"] + (match["kappa"] - item["kappa"]) / 3.0
        svs = {}
        for tag, ref in (("coarse", coarse), ("fine", fine)):
            sc = SpectralSolver(profile.scaled(k_rich), ref.grid.n_cells,
                                ref.collision)
            delta = min(0.9 * admissible_delta_bound(sc.profile, sc.collision), 0.05)
            svs[tag] = float(np.linalg.svd(s_zero(sc, delta)["s0"].entries,
                                           compute_uv=False)[-1])
        out.append({"kappa": k_rich, "kind": item["kind"],
                    "grid_delta": abs(match["kappa"] - item["kappa"]),
                    "s0_sigma_min": svs,
                    "shrink_factor": svs["coarse"] / max(svs["fine"], 1e-300)})
    return out


# ---------------------------------------------------------------------------
# kernel subspace and classification at z = 0
# ---------------------------------------------------------------------------

def n_subspace(solver: SpectralSolver, tol: float = 1e-8):
    """Basis of {u in ker(I + Y) : <u, sqrt(c)> = 0} and diagnostics.

    The kernel of I + Y is read off the eigenvalues of the symmetric matrix Y
    within ``tol`` of -1; an eigenvalue cluster straddling the tolerance is
    flagged with both candidate dimensions.
    """
    y = solver.y_entries()
    vals, vecs = eigh(y)
    sel = np.abs(vals + 1.0) <= tol
    info = {"kernel_dim": int(sel.sum()), "eigenvalues_near": vals[sel].tolist(),
            "ambiguous": None}
    border = (np.abs(vals + 1.0) > tol) & (np.abs(vals + 1.0) <= 3 * tol)
    if border.any():
        info["ambiguous"] = (int(sel.sum()), int(sel.sum() + border.sum()))
    if not sel.any():
        return np.zeros((y.shape[0], 0)), info
    u = vecs[:, sel]
    v = solver.sqrtc_vector()
    overlap = u.T @ v
    if np.linalg.norm(overlap) <= 1e-8 * np.linalg.norm(v):
        basis = u
    else:
        basis = u @ null_space(overlap[None, :])
    info["subspace_dim"] = basis.shape[1]
    return basis, info


def classify_singularity(solver: SpectralSolver,
                         kernel_tol: float = 1e-8,
                         critical_tol: float = 1e-6,
                         xi_candidates=(1.0, 0.5, 2.0),
                         shift_delta: float = 2.0) -> SpectralReport:
    """Classify the singularity of S^{-1} at z = 0 for the given profile.

    'none' when the profile is not critical (no compressed limit at -1);
    'logarithmic' when it is critical with trivial kernel subspace, with the
    leading data (xi, G, e~); 'first_order' when the kernel subspace is
    nontrivial, with (M, Lambda, theta, B0, basis).
    """
    notes = []
    vals, _ = compressed_limit_spectrum(solver)
    margin = float(np.abs(vals + 1.0).min())
    in_e = margin <= critical_tol
    basis, info = n_subspace(solver, tol=kernel_tol)
    if info["ambiguous"]:
        notes.append(f"kernel dimension ambiguous: candidates {info['ambiguous']}")
    coeffs: dict = {"kernel_info": info}
    if not in_e:
        classification = "none"
    elif basis.shape[1] == 0:
        classification = "logarithmic"
        coeffs.update(_log_case_coefficients(solver, xi_candidates))
    else:
        classification = "first_order"
        coeffs.update(_first_order_coefficients(solver, basis, shift_delta, notes))
    return SpectralReport(
        eigenvalues=[], bc_set=[], in_critical_set=in_e, critical_margin=margin,
        classification=classification, coefficients=coeffs,
        grid_cells=solver.grid.n_cells, notes=notes)


def _log_case_coefficients(solver, xi_candidates):
    v = solver.sqrtc_vector()
    for xi in xi_candidates:
        qt = solver.qtilde_iso_symmetric(xi)
        dist = np.abs(np.linalg.eigvalsh(qt) + 1.0).min()
        if dist >= 0.01:
            a = np.eye(qt.shape[0]) + qt
            e_t = np.linalg.solve(a, v)
            g = np.linalg.solve(a, np.eye(qt.shape[0]) - qt)
            rho = float(e_t @ v)
            return {"xi": xi, "g_matrix": g, "e_vector": e_t, "rho": rho,
                    "distance_to_minus_one": float(dist)}
    raise RuntimeError("no admissible xi found (all candidates nearly singular)")


def _first_order_coefficients(solver, basis, shift_delta, notes):
    y = solver.y_entries()
    y1 = solver.y1_entries()
    v = solver.sqrtc_vector()
    n = y.shape[0]
    delta_used = 1.0
    comp = null_space(basis.T)
    a_perp = comp.T @ (np.eye(n) + y) @ comp
    if np.linalg.cond(a_perp) > 1e10:
        # shifted variant: Y -> Y + (1/2) ln(delta) <., sqrt c> sqrt c, with the
        # matching z/delta and delta*Y1 substitutions downstream
        delta_used = shift_delta
        y = y + 0.5 * np.log(shift_delta) * np.outer(v, v)
        y1 = shift_delta * y1
        a_perp = comp.T @ (np.eye(n) + y) @ comp
        notes.append(f"I + Y singular on the complement; using delta shift {shift_delta}")
    m_small = basis.T @ y1 @ basis
    m_cond = np.linalg.cond(m_small)
    lam_full = comp @ np.linalg.solve(a_perp, comp.T)
    vartheta = float(v @ lam_full @ v)
    m_inv_pn = basis @ np.linalg.solve(m_small, basis.T)
    p_n = basis @ basis.T
    left = np.eye(n) - m_inv_pn @ y1
    right = np.eye(n) - y1 @ m_inv_pn
    b0 = -np.eye(n) + 2.0 * left @ lam_full @ (np.eye(n) - p_n) @ right
    return {"basis": basis, "m_matrix": m_small, "m_cond": float(m_cond),
            "lambda_matrix": lam_full, "vartheta": vartheta, "b0_matrix": b0,
            "pole_coefficient": -2j * m_inv_pn, "delta_shift": delta_used}


# ---------------------------------------------------------------------------
# S(0) and asymptotics
# ---------------------------------------------------------------------------

def admissible_delta_bound(profile: Profile, collision: CollisionKernel,
                           c_n: float = 1.0) -> float:
    """Explicit sufficient bound on delta for the S(0) construction:
    min(1/(2a), C_N / (a ||K||^2 |c|_1^2)) with a the support diameter."""
    a = profile.diameter
    l1 = profile.l1_norm
    return min(1.0 / (2.0 * a), c_n / (a * collision.norm ** 2 * l1 ** 2))


def s_zero(solver: SpectralSolver, delta: float, c_n: float = 1.0,
           enforce_bound: bool = True) -> dict:
    """S(0) from Qtilde(i delta) and the rank-one correction along l.

    S(0) = (I + Qt)(I - Qt)^{-1} - (2/theta_c) <., (I - Qt*)^{-1} l> (I - Qt)^{-1} l,
    with theta_c = <(I - Qt)^{-1} l, l>, Qt = Qtilde(i delta).  The result is
    independent of the admissible delta.
    """
    bound = admissible_delta_bound(solver.profile, solver.collision, c_n)
    if enforce_bound and delta > bound:
        raise ValueError(
            f"delta = {delta} above the admissible bound "
            f"min(1/(2a), C_N/(a ||K||^2 |c|_1^2)) = {bound:.6g}")
    qt = solver.qtilde(1j * delta).entries
    n = qt.shape[0]
    ell = solver.assembler.ell.astype(complex)
    a = np.eye(n) - qt
    u = np.linalg.solve(a, ell)
    w = np.linalg.solve(a.conj().T, ell)
    theta_c = complex(np.vdot(ell, u))
    s0 = np.linalg.solve(a, np.eye(n) + qt) - (2.0 / theta_c) * np.outer(u, w.conj())
    return {"s0": OperatorMatrix(entries=s0, grid=solver.grid, label="S", z=0.0),
            "theta_c": theta_c, "delta": delta, "bound": bound,
            "u": u, "w": w}


DEFAULT_RAYS = (np.pi / 4, np.pi / 2, 3 * np.pi / 4)


def asymptotics_fit(solver: SpectralSolver, formula: str, coeffs: dict,
                    rays=DEFAULT_RAYS, mags=None, path="auto") -> FitReport:
    """Measure how fast the numerical S or S^{-1} approaches a model form.

    formula: 'szero'  -> || S(z) - [S(0) + rank-one / (1 + alpha theta_c)] ||
             'log'    -> || S^{-1}(z) - [G - ln(-iz/xi) <., e~> e~] ||
             'pole'   -> || z S^{-1}(z) - pole coefficient ||
             'power'  -> fits || S^{-1}(z) || ~ C |z|^{-p} and reports p

    The reported exponent is the log-log slope of the residual against the
    predicted envelope of each expansion (|z| for 'szero' and 'pole', whose
    remainders carry at most one log factor beaten by the linear term, and
    |z| ln^2|z| for 'log', where the double log factor is intrinsic); a clean
    match to the predicted behaviour gives exponents near 1.  Raw |z|-slopes
    are kept in ``details``.
    """
    if mags is None:
        mags = np.geomspace(1e-1, 1e-4, 7)
    mags = np.asarray(mags, dtype=float)
    res = np.empty((len(rays), len(mags)))
    for i, ang in enumerate(rays):
        for k, r in enumerate(mags):
            z = r * np.exp(1j * ang)
            res[i, k] = _formula_residual(solver, formula, coeffs, z, path)
    if formula == "log":
        envelope = mags * np.log(mags) ** 2
    else:
        envelope = mags
    x = np.log(envelope)
    slopes = np.array([
        np.polyfit(x, np.log(np.maximum(row, 1e-300)), 1)[0] for row in res])
    raw = np.array([
        np.polyfit(np.log(mags), np.log(np.maximum(row, 1e-300)), 1)[0]
        for row in res])
    if formula == "power":
        # residual stores ||S^{-1}||; the growth exponent is -slope
        slopes = -slopes
        raw = -raw
    return FitReport(formula=formula, rays=tuple(rays), mags=mags, residuals=res,
                     exponents=slopes, exponent_mean=float(slopes.mean()),
                     details={"raw_exponents": raw.tolist()})


def _formula_residual(solver, formula, coeffs, z, path):
    if formula == "szero":
        s_num = solver.char(z, path=path).entries
        theta_c = coeffs["theta_c"]
        alpha = -(complex(log_branch_array(np.array(z / coeffs["delta"]))))
        model = (coeffs["s0"].entries
                 + (2.0 / (theta_c * (1.0 + alpha * theta_c)))
                 * np.outer(coeffs["u"], coeffs["w"].conj()))
        return float(np.linalg.norm(s_num - model, 2))
    sinv = solver.char_inv(z, path=path).entries
    if formula == "log":
        lnz = complex(log_branch_array(np.array(z / coeffs["xi"])))
        e_t = coeffs["e_vector"]
        model = coeffs["g_matrix"] - lnz * np.outer(e_t, e_t.conj())
        return float(np.linalg.norm(sinv - model, 2))
    if formula == "pole":
        return float(np.linalg.norm(z * sinv - coeffs["pole_coefficient"], 2))
    if formula == "pole_degenerate":
        lnz = complex(np.log(1j * z))
        model = (coeffs["pole_coefficient"] / z + coeffs["b0_matrix"]
                 - lnz * coeffs["degenerate_rank_one"])
        return float(np.linalg.norm(sinv - model, 2))
    if formula == "power":
        return float(np.linalg.norm(sinv, 2))
    raise ValueError(f"unknown formula {formula!r}")


# ---------------------------------------------------------------------------
# a.c. splitting diagnostic
# ---------------------------------------------------------------------------

def ac_splitting_profile(solver: SpectralSolver, k_grid, beta: float,
                         path="auto") -> SingularValueProfile:
    """Singular values of S(k) over a real grid; near-kernel dimension counts.

    The spectral subspace split of D(k) = S*(k) S(k) at threshold beta^2 is
    read off the singular values of S(k); the largest near-kernel dimension
    over the grid is the multiplicity bound for the singular component.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("threshold must sit in (0, 1)")
    k_grid = np.asarray(k_grid, dtype=float)
    svals = []
    for k in k_grid:
        s = solver.char(complex(k), path=path).entries
        svals.append(np.linalg.svd(s, compute_uv=False))
    svals = np.array(svals)
    dim_below = (svals < beta).sum(axis=1)
    return SingularValueProfile(k_grid=k_grid, singular_values=svals, beta=beta,
                                dim_below=dim_below,
                                max_ker_dim=int(dim_below.max()))
