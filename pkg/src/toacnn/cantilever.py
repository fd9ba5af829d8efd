"""Minimum-compliance design of a tip-loaded cantilever.

Left edge fully clamped, unit downward point load at mid-height of the right
edge, SIMP interpolation, density-weighted sensitivity filtering, and
optimality-criteria updates. Runs until the max density change drops below
``change_tol`` or ``max_iters`` is reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import (
    DensityField,
    Grid,
    LinearSystem,
    Material,
    assemble_stiffness,
    compliance,
    element_stiffness,
    solve_spd,
)
from .optimize import OptResult, build_filter, oc_update, sensitivity_filter


@dataclass(frozen=True)
class CantileverConfig:
    nelx: int = 100
    nely: int = 100
    vf: float = 0.5
    penal: float = 3.0
    rmin: float = 2.4
    move: float = 0.2
    max_iters: int = 200
    change_tol: float = 0.01
    load_magnitude: float = 1.0
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        if not (0.0 < self.vf < 1.0):
            raise ValueError(f"vf must lie in (0, 1), got {self.vf}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @property
    def grid(self) -> Grid:
        return Grid(self.nelx, self.nely)


def cantilever_system(cfg: CantileverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Load vector and fixed DOFs: clamp the left edge, pull the right-edge
    mid-height node down."""
    grid = cfg.grid
    f = np.zeros(grid.n_dofs)
    tip = grid.node_id(grid.nelx, grid.nely // 2)
    f[2 * tip + 1] = -cfg.load_magnitude
    fixed = np.arange(2 * (grid.nely + 1))  # all DOFs of column-0 nodes
    return f, fixed


def evaluate_cantilever(rho: DensityField, cfg: CantileverConfig) -> float:
    """Compliance f^T u of a given design under the cantilever system."""
    if rho.grid != cfg.grid:
        raise ValueError(f"field grid {rho.grid} does not match config grid {cfg.grid}")
    f, fixed = cantilever_system(cfg)
    k = assemble_stiffness(rho, cfg.penal, cfg.material)
    u = solve_spd(LinearSystem(k, f, fixed))
    return float(f @ u)


def solve_cantilever(cfg: CantileverConfig) -> OptResult:
    grid = cfg.grid
    mat = cfg.material
    ke = element_stiffness(mat)
    kernel = build_filter(grid, cfg.rmin)
    f, fixed = cantilever_system(cfg)
    dv = np.ones(grid.n_elements)

    rho = np.full(grid.n_elements, cfg.vf)
    history: list[tuple[float, float]] = []
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        rho_field = DensityField(grid, rho)
        k = assemble_stiffness(rho_field, cfg.penal, mat, ke)
        u = solve_spd(LinearSystem(k, f, fixed))
        c, ce = compliance(u, rho_field, cfg.penal, mat, ke)
        dc = -cfg.penal * rho ** (cfg.penal - 1.0) * (mat.e0 - mat.emin) * ce
        dc = sensitivity_filter(rho, dc, kernel)
        rho_new = oc_update(rho, dc, dv, cfg.vf, cfg.move)
        change = float(np.abs(rho_new - rho).max())
        rho = rho_new
        history.append((c, change))
        if change < cfg.change_tol:
            break

    final = DensityField(grid, rho)
    return OptResult(final, evaluate_cantilever(final, cfg), iters, history)
