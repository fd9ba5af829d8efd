"""Plane-stress finite elements on a regular grid of unit-square bilinear quads.

Conventions used everywhere in this package:

* The grid is ``nelx`` elements wide and ``nely`` elements tall, each element
  a unit square. Node ids run column-major, ``id = col * (nely + 1) + row``,
  with ``row`` counted from the top of the grid; node coordinates are
  ``(x, y) = (col, nely - row)`` so y points up.
* Each node carries two displacement DOFs, ``(2 * id, 2 * id + 1)`` for
  (x, y).
* Elements are indexed row-major, ``e = row * nelx + col``, row 0 at the top.
  Density vectors are flat in this element order; reshaping to
  ``(nely, nelx)`` gives an image whose first row is the top of the domain.
* Local element nodes are ordered counterclockwise from the lower-left
  corner: LL, LR, UR, UL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure

# 2x2 Gauss rule on [0, 1]; exact for the bilinear-quad stiffness integrand.
_GAUSS_1D = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass(frozen=True)
class Grid:
    """Regular mesh of ``nelx`` by ``nely`` unit-square elements."""

    nelx: int
    nely: int

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ValueError(f"grid must have positive extents, got {self.nelx}x{self.nely}")

    @property
    def n_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def n_nodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    def node_id(self, col: int, row: int) -> int:
        """Node id at grid column ``col`` (0..nelx) and row ``row`` (0..nely, top down)."""
        if not (0 <= col <= self.nelx and 0 <= row <= self.nely):
            raise ValueError(f"node ({col}, {row}) outside grid {self.nelx}x{self.nely}")
        return col * (self.nely + 1) + row

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 2) array of node (x, y) positions, y up."""
        cols = np.arange(self.n_nodes) // (self.nely + 1)
        rows = np.arange(self.n_nodes) % (self.nely + 1)
        return np.column_stack([cols.astype(float), (self.nely - rows).astype(float)])


@dataclass(frozen=True)
class Material:
    """Isotropic SIMP material: solid modulus, void floor, Poisson ratio."""

    e0: float = 1.0
    emin: float = 1e-9
    nu: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.emin < self.e0):
            raise ValueError(f"need 0 < emin < e0, got emin={self.emin}, e0={self.e0}")
        if not (0.0 <= self.nu < 0.5):
            raise ValueError(f"nu must lie in [0, 0.5), got {self.nu}")


@dataclass
class DensityField:
    """Flat per-element densities on a grid, every entry in [0, 1]."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.n_elements:
            raise ValueError(
                f"expected {self.grid.n_elements} densities, got {v.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("density field contains non-finite entries")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError(
                f"densities outside [0, 1]: min={v.min()}, max={v.max()}"
            )
        self.values = v

    def as_image(self) -> np.ndarray:
        """(nely, nelx) array, first row = top of the domain."""
        return self.values.reshape(self.grid.nely, self.grid.nelx)

    @classmethod
    def from_image(cls, image: np.ndarray) -> "DensityField":
        image = np.asarray(image, dtype=float)
        if image.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {image.shape}")
        nely, nelx = image.shape
        return cls(Grid(nelx, nely), image.ravel())


@dataclass(frozen=True)
class LinearSystem:
    """K u = f with Dirichlet DOFs eliminated at solve time."""

    matrix: sp.csr_array
    rhs: np.ndarray
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray = field(default=None)  # zeros when omitted

    def __post_init__(self):
        if self.fixed_values is None:
            object.__setattr__(
                self, "fixed_values", np.zeros(len(self.fixed_dofs))
            )
        if len(self.fixed_values) != len(self.fixed_dofs):
            raise ValueError("fixed_values length must match fixed_dofs")


def _shape_gradients(xi: float, eta: float) -> np.ndarray:
    """(2, 4) gradients of the bilinear shape functions at (xi, eta) in [0,1]^2."""
    return np.array(
        [
            [-(1.0 - eta), (1.0 - eta), eta, -eta],
            [-(1.0 - xi), -xi, xi, (1.0 - xi)],
        ]
    )


def element_stiffness(material: Material) -> np.ndarray:
    """8x8 stiffness of one unit-square plane-stress element at unit modulus.

    SIMP scaling is applied during assembly, so the material only contributes
    its Poisson ratio here. Integrated with a 2x2 Gauss rule, which is exact
    for this integrand on an undistorted square.
    """
    nu = material.nu
    d = np.array(
        [
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1.0 - nu) / 2.0],
        ]
    ) / (1.0 - nu**2)
    ke = np.zeros((8, 8))
    for xi in _GAUSS_1D:
        for eta in _GAUSS_1D:
            g = _shape_gradients(xi, eta)
            b = np.zeros((3, 8))
            b[0, 0::2] = g[0]
            b[1, 1::2] = g[1]
            b[2, 0::2] = g[1]
            b[2, 1::2] = g[0]
            ke += 0.25 * b.T @ d @ b
    return (ke + ke.T) / 2.0  # exact symmetry, last-ulp safe


@lru_cache(maxsize=None)
def _edof_cached(nelx: int, nely: int) -> np.ndarray:
    ey, ex = np.meshgrid(np.arange(nely), np.arange(nelx), indexing="ij")
    top_left = ((nely + 1) * ex + ey).ravel()  # upper-left node of each element
    ll = top_left + 1
    lr = top_left + nely + 2
    ur = top_left + nely + 1
    ul = top_left
    nodes = np.column_stack([ll, lr, ur, ul])
    edof = np.empty((nelx * nely, 8), dtype=np.int64)
    edof[:, 0::2] = 2 * nodes
    edof[:, 1::2] = 2 * nodes + 1
    return edof


def edof_matrix(grid: Grid) -> np.ndarray:
    """(n_elements, 8) global DOF indices per element, LL, LR, UR, UL order."""
    return _edof_cached(grid.nelx, grid.nely)


def element_nodes(grid: Grid) -> np.ndarray:
    """(n_elements, 4) global node ids per element, LL, LR, UR, UL order."""
    return edof_matrix(grid)[:, 0::2] // 2


def simp_moduli(values: np.ndarray, penal: float, material: Material) -> np.ndarray:
    """Per-element modulus emin + rho^penal (e0 - emin)."""
    return material.emin + values**penal * (material.e0 - material.emin)


def assemble_stiffness(
    rho: DensityField,
    penal: float,
    material: Material,
    ke: np.ndarray | None = None,
) -> sp.csr_array:
    """Global stiffness with SIMP-scaled element blocks; bitwise symmetric."""
    if ke is None:
        ke = element_stiffness(material)
    grid = rho.grid
    edof = edof_matrix(grid)
    factors = simp_moduli(rho.values, penal, material)
    data = (factors[:, None, None] * ke).ravel()
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    k = sp.coo_array((data, (rows, cols)), shape=(grid.n_dofs, grid.n_dofs)).tocsr()
    # x + y is commutative in IEEE float, so this is symmetric to the last bit.
    return ((k + k.T) * 0.5).tocsr()


def solve_many(
    matrix: sp.csr_array,
    rhs_columns: np.ndarray,
    fixed_dofs: np.ndarray,
    fixed_values: np.ndarray | None = None,
    tol: float = 1e-8,
) -> np.ndarray:
    """Direct solve of K u = f for one or more right-hand sides.

    Dirichlet DOFs are eliminated, the free block is factorized once, and each
    solution is iteratively refined until its relative residual meets ``tol``
    (bounded pass count; badly scaled SIMP systems need a few). Raises
    SolverFailure (with the residual attached) when refinement stalls short.
    """
    n = matrix.shape[0]
    fixed_dofs = np.asarray(fixed_dofs, dtype=np.int64)
    if fixed_dofs.size == 0:
        raise ValueError("at least one constrained DOF is required")
    if fixed_values is None:
        fixed_values = np.zeros(fixed_dofs.size)
    rhs_columns = np.atleast_2d(np.asarray(rhs_columns, dtype=float))
    mask = np.ones(n, dtype=bool)
    mask[fixed_dofs] = False
    free = np.flatnonzero(mask)

    a_csc = sp.csc_array(matrix)
    a_ff = a_csc[free][:, free]
    a_fd = a_csc[free][:, fixed_dofs]
    lu = spla.splu(sp.csc_matrix(a_ff))

    out = np.empty((rhs_columns.shape[0], n))
    lift = a_fd @ fixed_values
    for i, f in enumerate(rhs_columns):
        b = f[free] - lift
        u_f = lu.solve(b)
        scale = np.linalg.norm(b)
        for _ in range(6):
            r = b - a_ff @ u_f
            resid = np.linalg.norm(r)
            rel = resid / scale if scale > 0.0 else resid
            if np.isfinite(rel) and rel <= tol:
                break
            u_f = u_f + lu.solve(r)
        else:
            r = b - a_ff @ u_f
            resid = np.linalg.norm(r)
            rel = resid / scale if scale > 0.0 else resid
        if not np.isfinite(rel) or rel > tol:
            raise SolverFailure(
                f"linear solve residual {rel:.3e} exceeds tol {tol:.1e}",
                residual=float(rel),
            )
        u = np.zeros(n)
        u[fixed_dofs] = fixed_values
        u[free] = u_f
        out[i] = u
    return out


def solve_spd(system: LinearSystem, tol: float = 1e-8) -> np.ndarray:
    """Solve one eliminated Dirichlet system; see solve_many for the contract."""
    return solve_many(
        system.matrix,
        system.rhs[None, :],
        system.fixed_dofs,
        system.fixed_values,
        tol=tol,
    )[0]


def compliance(
    u: np.ndarray,
    rho: DensityField,
    penal: float,
    material: Material,
    ke: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Total compliance and per-element strain energies at unit modulus.

    Returns ``(c, ce)`` with ``c = sum_e E_e * ce_e``; ``ce`` feeds the
    sensitivity expressions, which need the unscaled energies.
    """
    if ke is None:
        ke = element_stiffness(material)
    edof = edof_matrix(rho.grid)
    ue = u[edof]
    ce = np.einsum("ni,ij,nj->n", ue, ke, ue)
    c = float(np.dot(simp_moduli(rho.values, penal, material), ce))
    return c, ce
