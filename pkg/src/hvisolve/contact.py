"""Data and discrete operators of the 2-D viscoelastic frictionless
contact problem.

The body occupies (0, L1) x (0, L2), is clamped on the left edge, loaded
on the right and top edges, and may touch a foundation along the bottom
edge where penetration u_nu = -u_y is capped at g and resisted by a
nonmonotone normal-compliance traction S * mu_j(u_nu).

Assembled operators (all on the free dofs of an FESpace):

  * K_stiff : (A eps(u), eps(v)) + mu (eps(u), eps(v)),  A the plane-stress
    elasticity tensor, exact constant-strain integration,
  * K_visc  : (eps(u), eps(v)), the base of the relaxation (history) term,
  * M_gamma3: (u_nu, v_nu) on the contact edge, the convexification mass,
  * loads   : (f0(t), v)_Omega + (f2(t), v)_Gamma2,
  * nonsmooth_traction: the single-valued selection of the contact law
    integrated against the boundary traces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .mesh import GAMMA2, FESpace, p1_gradients

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def standard_forcing(l2: float = 1.0):
    """Default body force and surface traction: a sin(t)-modulated downward
    push, with the surface part supported on the top edge only."""

    def f0(t):
        return (0.0, -0.1 * np.sin(t))

    def f2(t, point):
        x, y = point
        if y >= l2 - 1e-12:
            return (0.0, -0.2 * np.sin(t) * np.sin(0.5 * np.pi * x))
        return (0.0, 0.0)

    return f0, f2


def _identity_projection(u, zeta):
    return u


@dataclass
class ContactData:
    """Physical constants and forcing of the contact problem.

    Defaults are the standard benchmark setting: E=2 N/m^2, kappa=0.3,
    alpha_j=0.5, g=0.15 m, S=1 N, relaxation kernel exp(-t), T=0.5 s, and
    the piecewise friction-law breakpoints (s1, s2) = (0.1, 0.15) with
    slopes (c1, c2, c3) = (0.1, -0.1, 0.4).  The default surface traction
    assumes the standard domain height L2 = 1.
    """

    E: float = 2.0
    kappa: float = 0.3
    mu: float = 0.0
    alpha_j: float = 0.5
    g: float = 0.15
    S_force: float = 1.0
    s1: float = 0.1
    s2: float = 0.15
    c1: float = 0.1
    c2: float = -0.1
    c3: float = 0.4
    T: float = 0.5
    relax_kernel: "callable" = None
    f0: "callable" = None
    f2: "callable" = None
    projection: "callable" = field(default=_identity_projection)

    def __post_init__(self):
        if not (0.0 < self.kappa < 0.5):
            raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {self.kappa}")
        if self.E <= 0:
            raise ValueError(f"Young modulus must be positive, got {self.E}")
        if self.g < 0:
            raise ValueError(f"maximum penetration must be >= 0, got {self.g}")
        if not (0.0 < self.s1 < self.s2):
            raise ValueError(
                f"law breakpoints must satisfy 0 < s1 < s2, got s1={self.s1}, s2={self.s2}"
            )
        if self.T <= 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if self.relax_kernel is None:
            self.relax_kernel = lambda t: np.exp(-t)
        if self.f0 is None or self.f2 is None:
            f0, f2 = standard_forcing()
            self.f0 = self.f0 or f0
            self.f2 = self.f2 or f2


def default_contact_data() -> ContactData:
    return ContactData()


@dataclass
class AbstractConstants:
    """User-supplied estimates of the abstract operator constants.

    These drive validation warnings and the predicted fixed-point rate
    only; they are never derived from the assembled matrices.
    """

    m_A: float = 1.0
    L_A: float = 0.0
    alpha_phi: float = 0.0
    beta_phi: float = 0.0
    alpha_j_relax: float = 0.0
    alpha_c: float = 0.0
    c_j: float = 0.0
    c0_growth: float = 0.0
    c1_growth: float = 0.0

    def __post_init__(self):
        vals = (self.m_A, self.L_A, self.alpha_phi, self.beta_phi,
                self.alpha_j_relax, self.alpha_c, self.c_j,
                self.c0_growth, self.c1_growth)
        if any(v < 0 for v in vals):
            raise ValueError("abstract constants must be nonnegative")
        if self.m_A <= 0:
            raise ValueError("strong monotonicity constant m_A must be positive")

    def smallness_wellposedness(self) -> bool:
        """alpha_phi + alpha_j c_j^2 < m_A (well-posedness of the problem)."""
        return self.alpha_phi + self.alpha_j_relax * self.c_j**2 < self.m_A

    def smallness_convexified(self) -> bool:
        """alpha_phi + alpha_c c_j^2 < m_A (first-order scheme and the
        per-step fixed-point contraction)."""
        return self.alpha_phi + self.alpha_c * self.c_j**2 < self.m_A

    def smallness_extrapolation(self) -> bool:
        """alpha_phi + alpha_c c_j^2 < m_A / 3 (extrapolated scheme)."""
        return self.alpha_phi + self.alpha_c * self.c_j**2 < self.m_A / 3.0


def elasticity_apply(eps: np.ndarray, E: float, kappa: float) -> np.ndarray:
    """Plane-stress elasticity tensor applied to a symmetric 2x2 strain:

        (A eps)_ij = E kappa/(1-kappa^2) tr(eps) delta_ij + E/(1+kappa) eps_ij
    """
    if not (0.0 < kappa < 0.5):
        raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {kappa}")
    eps = np.asarray(eps, dtype=float)
    a = E * kappa / (1.0 - kappa**2)
    b = E / (1.0 + kappa)
    return a * np.trace(eps) * np.eye(2) + b * eps


def mu_j_eval(s, data: ContactData):
    """Piecewise-linear friction-law coefficient mu_j(s).

    Zero for s <= 0, slope c1 up to s1, slope c2 up to s2, slope c3 beyond;
    continuous at the breakpoints.  Accepts scalars or arrays.
    """
    s = np.asarray(s, dtype=float)
    v1 = data.c1 * s
    v2 = data.c1 * data.s1 + data.c2 * (s - data.s1)
    v3 = data.c1 * data.s1 + data.c2 * (data.s2 - data.s1) + data.c3 * (s - data.s2)
    out = np.where(s <= 0, 0.0, np.where(s <= data.s1, v1, np.where(s <= data.s2, v2, v3)))
    return out if out.ndim else float(out)


def _voigt_d_matrix(E: float, kappa: float, mu: float) -> np.ndarray:
    # Voigt ordering (e11, e22, gamma12) with engineering shear strain.
    a = E * kappa / (1.0 - kappa**2)
    b = E / (1.0 + kappa)
    d_el = np.array([[a + b, a, 0.0], [a, a + b, 0.0], [0.0, 0.0, 0.5 * b]])
    d_visc = np.diag([1.0, 1.0, 0.5])
    return d_el + mu * d_visc


def _element_strain_matrices(space: FESpace):
    """B matrices (nt, 3, 6) mapping local dofs (x0,y0,x1,y1,x2,y2) to
    Voigt strain, plus element areas."""
    areas, grads = p1_gradients(space.mesh)
    nt = areas.size
    B = np.zeros((nt, 3, 6))
    for i in range(3):
        B[:, 0, 2 * i] = grads[:, i, 0]
        B[:, 1, 2 * i + 1] = grads[:, i, 1]
        B[:, 2, 2 * i] = grads[:, i, 1]
        B[:, 2, 2 * i + 1] = grads[:, i, 0]
    return areas, B


def triangle_stiffness(coords: np.ndarray, E: float, kappa: float, mu: float = 0.0) -> np.ndarray:
    """6x6 constant-strain element stiffness of a single triangle.

    Local dof order (ux0, uy0, ux1, uy1, ux2, uy2).
    """
    coords = np.asarray(coords, dtype=float)
    p = coords
    area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                  - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
    b = np.array([p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]]) / (2 * area)
    c = np.array([p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]]) / (2 * area)
    B = np.zeros((3, 6))
    for i in range(3):
        B[0, 2 * i] = b[i]
        B[1, 2 * i + 1] = c[i]
        B[2, 2 * i] = c[i]
        B[2, 2 * i + 1] = b[i]
    D = _voigt_d_matrix(E, kappa, mu)
    return area * B.T @ D @ B


def _assemble_strain_form(space: FESpace, D: np.ndarray) -> csr_matrix:
    areas, B = _element_strain_matrices(space)
    local = areas[:, None, None] * np.einsum("tai,ab,tbj->tij", B, D, B)

    tris = space.mesh.triangles
    dofs = np.empty((tris.shape[0], 6), dtype=np.int64)
    dofs[:, 0::2] = space.dof_map[tris, 0]
    dofs[:, 1::2] = space.dof_map[tris, 1]
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    vals = local.reshape(local.shape[0], -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = coo_matrix((vals[keep], (rows[keep], cols[keep])),
                     shape=(space.n_free, space.n_free))
    return mat.tocsr()


def assemble_stiffness(space: FESpace, data: ContactData) -> csr_matrix:
    """Stiffness of the elasticity operator including the mu-scaled
    viscous part; symmetric positive definite on the free dofs."""
    return _assemble_strain_form(space, _voigt_d_matrix(data.E, data.kappa, data.mu))


def assemble_viscosity(space: FESpace) -> csr_matrix:
    """(eps(u), eps(v)): base matrix of the relaxation history term and of
    the strain (V-) norm."""
    return _assemble_strain_form(space, np.diag([1.0, 1.0, 0.5]))


def assemble_gamma3_mass(space: FESpace) -> csr_matrix:
    """Boundary mass (u_nu, v_nu) on the contact edge.

    Since u_nu = -u_y there, the signs cancel and the matrix is the 1-D P1
    mass matrix in the y-dofs of the bottom-edge nodes.
    """
    nodes = space.gamma3_nodes
    xs = space.mesh.vertices[nodes, 0]
    ydofs = space.gamma3_ydofs
    rows, cols, vals = [], [], []
    for e in range(len(nodes) - 1):
        ell = xs[e + 1] - xs[e]
        local = ell / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        dd = (ydofs[e], ydofs[e + 1])
        for a in range(2):
            for b in range(2):
                if dd[a] >= 0 and dd[b] >= 0:
                    rows.append(dd[a])
                    cols.append(dd[b])
                    vals.append(local[a, b])
    mat = coo_matrix((vals, (rows, cols)), shape=(space.n_free, space.n_free))
    return mat.tocsr()


def assemble_load(space: FESpace, data: ContactData, t: float) -> np.ndarray:
    """(f0(t), v)_Omega + (f2(t), v)_Gamma2 for every basis function.

    The body force is spatially constant, so the vertex rule A/3 per
    element is exact; surface tractions use 2-point Gauss per edge.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    load = np.zeros(space.n_free)
    mesh = space.mesh

    f0 = np.asarray(data.f0(t), dtype=float)
    if np.any(f0):
        areas, _ = p1_gradients(mesh)
        weights = np.repeat(areas / 3.0, 3)
        for comp in range(2):
            dofs = space.dof_map[mesh.triangles, comp].ravel()
            mask = dofs >= 0
            np.add.at(load, dofs[mask], f0[comp] * weights[mask])

    edges = mesh.boundary_edges
    g2 = edges[edges[:, 2] == GAMMA2]
    if g2.size:
        p0 = mesh.vertices[g2[:, 0]]
        p1 = mesh.vertices[g2[:, 1]]
        ell = np.hypot(*(p1 - p0).T)
        for xi in _GAUSS2:
            points = (1 - xi) * p0 + xi * p1
            fvals = np.array([data.f2(t, tuple(pt)) for pt in points], dtype=float)
            w = 0.5 * ell
            for col, phi in ((0, 1 - xi), (1, xi)):
                for comp in range(2):
                    dofs = space.dof_map[g2[:, col], comp]
                    mask = dofs >= 0
                    np.add.at(load, dofs[mask], (w * phi * fvals[:, comp])[mask])
    return load


def contact_traction_values(u_nu, data: ContactData):
    """Single-valued selection of the contact-law subdifferential,
    S * mu_j(s) * sign(s); zero wherever u_nu <= 0."""
    s = np.asarray(u_nu, dtype=float)
    return data.S_force * mu_j_eval(s, data) * np.sign(s)


def nonsmooth_traction(space: FESpace, data: ContactData, u_nu: np.ndarray) -> np.ndarray:
    """Dof-space load of the frozen contact traction.

    Returns the vector xi with <xi, v> = int_Gamma3 S mu_j(u_nu) sign(u_nu)
    v_nu dGamma, evaluated by 2-point Gauss per contact edge from the nodal
    trace values u_nu (ordered like gamma3_nodes).  Since v_nu = -v_y the
    nonzero entries sit at the bottom-edge y-dofs with a negative sign.
    """
    nodes = space.gamma3_nodes
    u_nu = np.asarray(u_nu, dtype=float)
    if len(u_nu) != len(nodes):
        raise ValueError(f"expected {len(nodes)} trace values, got {len(u_nu)}")
    xs = space.mesh.vertices[nodes, 0]
    ydofs = space.gamma3_ydofs
    ell = np.diff(xs)
    out = np.zeros(space.n_free)
    for xi in _GAUSS2:
        s = (1 - xi) * u_nu[:-1] + xi * u_nu[1:]
        tr = contact_traction_values(s, data)
        w = 0.5 * ell * tr
        for sl, phi in ((slice(None, -1), 1 - xi), (slice(1, None), xi)):
            dofs = ydofs[sl]
            mask = dofs >= 0
            np.add.at(out, dofs[mask], -(phi * w)[mask])
    return out


@dataclass
class AssembledSystem:
    """Assembled discrete operators; immutable after construction."""

    K_stiff: csr_matrix
    M_gamma3: csr_matrix
    K_visc: csr_matrix
    space: FESpace
    data: ContactData

    def history_matrix_factory(self, t: float) -> csr_matrix:
        """Matrix of (B(t) eps(u), eps(v)); scalar kernel, so B(t) * K_visc."""
        return float(self.data.relax_kernel(t)) * self.K_visc


def assemble_system(space: FESpace, data: ContactData) -> AssembledSystem:
    return AssembledSystem(
        K_stiff=assemble_stiffness(space, data),
        M_gamma3=assemble_gamma3_mass(space),
        K_visc=assemble_viscosity(space),
        space=space,
        data=data,
    )


class ContactInstance:
    """Adapter exposing the assembled contact problem to the time steppers.

    The per-step inequality has operator K_stiff + alpha_j * M_gamma3, a
    right-hand side built from loads, the relaxation history and the
    lagged convexification term, the unilateral bound u_y >= -g at contact
    nodes, and the nonsmooth traction callback.
    """

    def __init__(self, system: AssembledSystem):
        self.system = system
        self.space = system.space
        self.data = system.data
        self.ndof = system.space.n_free
        self.a_base = system.K_stiff
        self.m_jc = system.M_gamma3
        self.alpha_c = system.data.alpha_j

        self.lower = np.full(self.ndof, -np.inf)
        ydofs = self.space.gamma3_ydofs
        self.contact_dofs = ydofs[ydofs >= 0]
        self.lower[self.contact_dofs] = -system.data.g

    def load(self, t: float) -> np.ndarray:
        return assemble_load(self.space, self.data, t)

    def history_rhs(self, grid, n: int, states: np.ndarray) -> np.ndarray:
        """<history term, v> as a dof vector: K_visc times the kernel- and
        quadrature-weighted combination of the stored states."""
        from .history import modified_trapezoid_weights

        if n == 0:
            return np.zeros(self.ndof)
        w = modified_trapezoid_weights(grid.k, n)
        dts = grid.t(n) - grid.times[:n]
        coeff = w * np.asarray(self.data.relax_kernel(dts), dtype=float)
        return self.system.K_visc @ (coeff @ states[:n])

    def phi_arg_rhs(self, w_arg: np.ndarray, zeta: float) -> np.ndarray:
        """Contribution of the lagged plastic-projection term; zero unless
        the projection coefficient mu is switched on."""
        if self.data.mu == 0.0:
            return np.zeros(self.ndof)
        proj = self.data.projection(w_arg, zeta)
        return -self.data.mu * (self.system.K_visc @ proj)

    def nonsmooth(self, x: np.ndarray) -> np.ndarray:
        return nonsmooth_traction(self.space, self.data, self.trace_normal(x))

    def nonsmooth_small(self, xc: np.ndarray) -> np.ndarray:
        """Traction restricted to the free contact y-dofs, as a function of
        the displacements at exactly those dofs (the eliminated corner
        keeps zero trace)."""
        ydofs = self.space.gamma3_ydofs
        u_nu = np.zeros(len(ydofs))
        u_nu[ydofs >= 0] = -xc
        full = nonsmooth_traction(self.space, self.data, u_nu)
        return full[self.contact_dofs]

    def trace_normal(self, x: np.ndarray) -> np.ndarray:
        """Normal displacement u_nu = -u_y at the contact nodes (zero at
        the eliminated corner)."""
        ydofs = self.space.gamma3_ydofs
        vals = np.zeros(len(ydofs))
        mask = ydofs >= 0
        vals[mask] = -x[ydofs[mask]]
        return vals

    def xnorm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.system.K_visc @ u), 0.0)))

    strain_norm = xnorm


def make_contact_instance(space: FESpace, data: ContactData) -> ContactInstance:
    return ContactInstance(assemble_system(space, data))
