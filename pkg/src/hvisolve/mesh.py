"""Structured triangular meshes and vector P1 finite elements.

The computational domain is the rectangle (0, L1) x (0, L2), meshed by an
nx-by-ny grid of cells, each split into two triangles along its SW-NE
diagonal.  The boundary is tagged in three parts:

    GAMMA1 : left edge   {0} x (0, L2)          (clamped, u = 0)
    GAMMA2 : right edge  {L1} x (0, L2) and top [0, L1] x {L2}  (traction)
    GAMMA3 : bottom edge [0, L1] x {0}           (contact)

On GAMMA3 the outward unit normal is (0, -1), so the normal displacement
at a bottom node is u_nu = -u_y.  Vertices on the closure of GAMMA1
(including the corners (0, 0) and (0, L2)) are Dirichlet-eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

GAMMA1 = 1
GAMMA2 = 2
GAMMA3 = 3


@dataclass
class Mesh:
    """Triangulated rectangle with tagged boundary edges.

    vertices       : (nv, 2) float array of coordinates
    triangles      : (nt, 3) int array, counterclockwise vertex triples
    boundary_edges : (ne, 3) int array, rows (v0, v1, tag)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    L1: float
    L2: float
    nx: int
    ny: int

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def build_rect_mesh(L1: float, L2: float, nx: int, ny: int) -> Mesh:
    """Uniform triangulation of (0, L1) x (0, L2).

    Each grid cell is split by its SW-NE diagonal into the triangles
    (SW, SE, NE) and (SW, NE, NW), both counterclockwise.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    if L1 <= 0 or L2 <= 0:
        raise ValueError(f"side lengths must be positive, got L1={L1}, L2={L2}")

    xs = np.linspace(0.0, L1, nx + 1)
    ys = np.linspace(0.0, L2, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    sw = vid(ii, jj).ravel()
    se = vid(ii + 1, jj).ravel()
    ne = vid(ii + 1, jj + 1).ravel()
    nw = vid(ii, jj + 1).ravel()
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    triangles = np.vstack([lower, upper]).astype(np.int64)

    edges = []
    for i in range(nx):  # bottom, contact
        edges.append((vid(i, 0), vid(i + 1, 0), GAMMA3))
    for j in range(ny):  # right, traction
        edges.append((vid(nx, j), vid(nx, j + 1), GAMMA2))
    for i in range(nx):  # top, traction
        edges.append((vid(i, ny), vid(i + 1, ny), GAMMA2))
    for j in range(ny):  # left, clamped
        edges.append((vid(0, j), vid(0, j + 1), GAMMA1))
    boundary_edges = np.asarray(edges, dtype=np.int64)

    return Mesh(vertices, triangles, boundary_edges, float(L1), float(L2), nx, ny)


def triangle_areas(mesh: Mesh) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def p1_gradients(mesh: Mesh):
    """Per-triangle areas and shape-function gradients.

    Returns (areas, grads) with grads of shape (nt, 3, 2); grads[t, i] is
    the constant gradient of the barycentric function of local vertex i.
    """
    p = mesh.vertices[mesh.triangles]
    x = p[:, :, 0]
    y = p[:, :, 1]
    areas = triangle_areas(mesh)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([b, c], axis=2) / (2.0 * areas)[:, None, None]
    return areas, grads


class FESpace:
    """Vector P1 space with optional Dirichlet elimination on GAMMA1.

    dof_map[v] holds the (x, y) dof indices of vertex v, or (-1, -1) for
    an eliminated vertex.  gamma3_nodes lists the bottom-edge vertices in
    ascending x together with their y-dof (gamma3_ydofs, -1 where
    eliminated, which happens only at the corner (0, 0)).
    """

    def __init__(self, mesh: Mesh, dirichlet_gamma1: bool = True):
        self.mesh = mesh
        self.dirichlet_gamma1 = dirichlet_gamma1

        x = mesh.vertices[:, 0]
        y = mesh.vertices[:, 1]
        if dirichlet_gamma1:
            fixed = np.abs(x) < 1e-12
        else:
            fixed = np.zeros(mesh.n_vertices, dtype=bool)

        self.dof_map = np.full((mesh.n_vertices, 2), -1, dtype=np.int64)
        free = np.flatnonzero(~fixed)
        self.dof_map[free, 0] = 2 * np.arange(free.size)
        self.dof_map[free, 1] = 2 * np.arange(free.size) + 1
        self.free_vertices = free
        self.n_free = 2 * free.size

        bottom = np.flatnonzero(np.abs(y) < 1e-12)
        order = np.argsort(x[bottom], kind="stable")
        self.gamma3_nodes = bottom[order]
        self.gamma3_ydofs = self.dof_map[self.gamma3_nodes, 1]

        self._h1_gram = None

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Free-dof vector -> (nv, 2) nodal values, zeros at eliminated dofs."""
        if u.shape[0] != self.n_free:
            raise ValueError(f"expected {self.n_free} dofs, got {u.shape[0]}")
        full = np.zeros((self.mesh.n_vertices, 2))
        full[self.free_vertices, 0] = u[self.dof_map[self.free_vertices, 0]]
        full[self.free_vertices, 1] = u[self.dof_map[self.free_vertices, 1]]
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        """(nv, 2) nodal values -> free-dof vector."""
        u = np.zeros(self.n_free)
        u[self.dof_map[self.free_vertices, 0]] = full[self.free_vertices, 0]
        u[self.dof_map[self.free_vertices, 1]] = full[self.free_vertices, 1]
        return u


def build_fespace(mesh: Mesh, dirichlet_gamma1: bool = True) -> FESpace:
    return FESpace(mesh, dirichlet_gamma1=dirichlet_gamma1)


def _scatter_elementwise(space: FESpace, local: np.ndarray) -> csr_matrix:
    """Assemble identical x/y component blocks from (nt, 3, 3) element matrices."""
    tris = space.mesh.triangles
    rows, cols, vals = [], [], []
    for comp in range(2):
        dofs = space.dof_map[tris, comp]  # (nt, 3)
        r = np.repeat(dofs, 3, axis=1).ravel()
        c = np.tile(dofs, (1, 3)).ravel()
        v = local.reshape(local.shape[0], -1).ravel()
        keep = (r >= 0) & (c >= 0)
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(v[keep])
    mat = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.n_free, space.n_free),
    )
    return mat.tocsr()


def h1_gram(space: FESpace) -> csr_matrix:
    """Gram matrix of the full H1 inner product, int u.v + grad u : grad v.

    Exact on P1: the mass part uses the closed-form P1 mass matrix and the
    gradient part is constant per element.  Cached on the space.
    """
    if space._h1_gram is None:
        areas, grads = p1_gradients(space.mesh)
        mass = (areas / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
        stiff = areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
        space._h1_gram = _scatter_elementwise(space, mass + stiff)
    return space._h1_gram


def h1_norm(u: np.ndarray, space: FESpace) -> float:
    """Full H1 norm of a P1 vector field given by its free-dof values."""
    if u.shape[0] != space.n_free:
        raise ValueError(f"expected {space.n_free} dofs, got {u.shape[0]}")
    G = h1_gram(space)
    return float(np.sqrt(max(u @ (G @ u), 0.0)))


def prolongate(u_coarse: np.ndarray, coarse: FESpace, fine: FESpace) -> np.ndarray:
    """Exact P1 interpolation of a coarse-space field onto a nested fine mesh.

    The fine mesh must refine the coarse one by the same integer factor in
    both directions (so the fine space contains the coarse space and the
    H1 norm is preserved).
    """
    cm, fm = coarse.mesh, fine.mesh
    if abs(cm.L1 - fm.L1) > 1e-12 or abs(cm.L2 - fm.L2) > 1e-12:
        raise ValueError("meshes cover different domains")
    if fm.nx % cm.nx or fm.ny % cm.ny or fm.nx // cm.nx != fm.ny // cm.ny:
        raise ValueError(
            f"fine mesh ({fm.nx}x{fm.ny}) is not a nested refinement "
            f"of coarse mesh ({cm.nx}x{cm.ny})"
        )

    full = coarse.expand(u_coarse)
    hx = cm.L1 / cm.nx
    hy = cm.L2 / cm.ny
    fx = fm.vertices[:, 0]
    fy = fm.vertices[:, 1]
    ix = np.minimum((fx / hx).astype(np.int64), cm.nx - 1)
    iy = np.minimum((fy / hy).astype(np.int64), cm.ny - 1)
    xi = fx / hx - ix
    eta = fy / hy - iy

    def cvid(i, j):
        return j * (cm.nx + 1) + i

    sw = full[cvid(ix, iy)]
    se = full[cvid(ix + 1, iy)]
    ne = full[cvid(ix + 1, iy + 1)]
    nw = full[cvid(ix, iy + 1)]

    # Lower triangle (SW, SE, NE) where xi >= eta, upper (SW, NE, NW) otherwise.
    lo = (1 - xi)[:, None] * sw + (xi - eta)[:, None] * se + eta[:, None] * ne
    up = (1 - eta)[:, None] * sw + xi[:, None] * ne + (eta - xi)[:, None] * nw
    vals = np.where((xi >= eta)[:, None], lo, up)
    return fine.restrict(vals)
