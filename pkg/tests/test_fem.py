"""Element matrices, assembly, and the eliminated direct solve."""

import numpy as np
import pytest
import scipy.sparse as sp

from toacnn.errors import SolverFailure
from toacnn.fem import (
    DensityField,
    Grid,
    LinearSystem,
    Material,
    assemble_stiffness,
    compliance,
    edof_matrix,
    element_nodes,
    element_stiffness,
    simp_moduli,
    solve_many,
    solve_spd,
)


def closed_form_ke(nu):
    """Exact unit-modulus stiffness of the unit bilinear quad, plane stress.

    Closed form of the integral; all entries are integer multiples of
    1 / (24 (1 - nu^2)) plus nu times another integer multiple.
    """
    a11 = np.array([[12, 3, -6, -3], [3, 12, 3, 0], [-6, 3, 12, -3], [-3, 0, -3, 12]], float)
    a12 = np.array([[-6, -3, 0, 3], [-3, -6, -3, -6], [0, -3, -6, 3], [3, -6, 3, -6]], float)
    b11 = np.array([[-4, 3, -2, 9], [3, -4, -9, 4], [-2, -9, -4, -3], [9, 4, -3, -4]], float)
    b12 = np.array([[2, -3, 4, -9], [-3, 2, 9, -2], [4, 9, 2, 3], [-9, -2, 3, 2]], float)
    a = np.block([[a11, a12], [a12.T, a11]])
    b = np.block([[b11, b12], [b12.T, b11]])
    return (a + nu * b) / (24.0 * (1.0 - nu**2))


def sympy_ke(nu):
    """Independent oracle: symbolic integration of B^T D B over the unit square."""
    import sympy as spy

    x, y = spy.symbols("x y")
    shapes = [(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y]
    d = spy.Matrix([[1, nu, 0], [nu, 1, 0], [0, 0, spy.Rational(1, 2) * (1 - nu)]]) / (1 - nu**2)
    b = spy.zeros(3, 8)
    for i, n in enumerate(shapes):
        b[0, 2 * i] = spy.diff(n, x)
        b[1, 2 * i + 1] = spy.diff(n, y)
        b[2, 2 * i] = spy.diff(n, y)
        b[2, 2 * i + 1] = spy.diff(n, x)
    ke = spy.integrate(spy.integrate(b.T * d * b, (x, 0, 1)), (y, 0, 1))
    return np.array(ke.evalf(30), dtype=float)


class TestElementStiffness:
    def test_matches_closed_form(self):
        ke = element_stiffness(Material())
        assert np.abs(ke - closed_form_ke(0.3)).max() <= 1e-12

    def test_matches_symbolic_integration(self):
        for nu in (0.0, 0.3, 0.45):
            ke = element_stiffness(Material(nu=nu))
            assert np.abs(ke - sympy_ke(spq(nu))).max() <= 1e-12

    def test_exactly_symmetric(self):
        ke = element_stiffness(Material())
        assert np.abs(ke - ke.T).max() == 0.0

    def test_rigid_modes_in_nullspace(self):
        ke = element_stiffness(Material())
        tx = np.tile([1.0, 0.0], 4)
        ty = np.tile([0.0, 1.0], 4)
        # infinitesimal rotation about the element center: u = (-(y-c), x-c)
        xy = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float) - 0.5
        rot = np.column_stack([-xy[:, 1], xy[:, 0]]).ravel()
        for mode in (tx, ty, rot):
            assert np.abs(ke @ mode).max() < 1e-14

    def test_positive_semidefinite_rank_five(self):
        w = np.linalg.eigvalsh(element_stiffness(Material()))
        assert w[0] > -1e-14
        assert np.sum(w < 1e-12) == 3  # exactly the rigid modes


def spq(nu):
    """Rational nu for sympy where exact, else float."""
    import sympy as spy

    return spy.Rational(3, 10) if nu == 0.3 else spy.nsimplify(nu, rational=True)


class TestGridIndexing:
    def test_node_ids_column_major_top_down(self):
        g = Grid(2, 3)
        assert g.node_id(0, 0) == 0
        assert g.node_id(0, 3) == 3
        assert g.node_id(1, 0) == 4
        assert g.node_id(2, 3) == 11
        assert g.n_nodes == 12 and g.n_dofs == 24

    def test_node_coords_y_up(self):
        g = Grid(1, 2)
        xy = g.node_coords()
        assert xy[g.node_id(0, 0)].tolist() == [0.0, 2.0]  # top-left
        assert xy[g.node_id(0, 2)].tolist() == [0.0, 0.0]  # bottom-left
        assert xy[g.node_id(1, 0)].tolist() == [1.0, 2.0]

    def test_edof_single_element(self):
        g = Grid(1, 1)
        nodes = element_nodes(g)[0]
        # LL, LR, UR, UL with ids col*(nely+1)+row
        assert nodes.tolist() == [1, 3, 2, 0]
        edof = edof_matrix(g)[0]
        assert edof.tolist() == [2, 3, 6, 7, 4, 5, 0, 1]

    def test_edof_row_major_element_order(self):
        g = Grid(2, 2)
        nodes = element_nodes(g)
        # e = row*nelx + col; element 1 is top-right
        assert nodes[1].tolist() == [4, 7, 6, 3]
        assert nodes[2].tolist() == [2, 5, 4, 1]  # bottom-left

    def test_invalid_grid_rejected(self):
        with pytest.raises(ValueError):
            Grid(0, 5)


class TestDensityField:
    def test_rejects_out_of_range(self):
        g = Grid(2, 2)
        with pytest.raises(ValueError):
            DensityField(g, np.array([0.5, 0.5, 0.5, 1.5]))
        with pytest.raises(ValueError):
            DensityField(g, np.array([0.5, -0.1, 0.5, 0.5]))

    def test_rejects_wrong_size_and_nan(self):
        g = Grid(2, 2)
        with pytest.raises(ValueError):
            DensityField(g, np.zeros(5))
        with pytest.raises(ValueError):
            DensityField(g, np.array([0.5, np.nan, 0.5, 0.5]))

    def test_image_roundtrip(self):
        img = np.linspace(0, 1, 12).reshape(3, 4)
        f = DensityField.from_image(img)
        assert f.grid == Grid(4, 3)
        assert np.array_equal(f.as_image(), img)


class TestAssembly:
    def test_solid_equals_scattered_unit_blocks(self):
        g = Grid(3, 2)
        mat = Material()
        ke = element_stiffness(mat)
        k = assemble_stiffness(DensityField(g, np.ones(g.n_elements)), 3.0, mat)
        ref = np.zeros((g.n_dofs, g.n_dofs))
        for edof in edof_matrix(g):
            ref[np.ix_(edof, edof)] += mat.e0 * ke
        assert np.abs(k.toarray() - ref).max() < 1e-12

    def test_bitwise_symmetric(self):
        g = Grid(4, 3)
        rng = np.random.default_rng(0)
        rho = DensityField(g, rng.uniform(size=g.n_elements))
        k = assemble_stiffness(rho, 3.0, Material())
        assert abs(k - k.T).max() == 0.0

    def test_simp_void_floor(self):
        vals = simp_moduli(np.array([0.0, 1.0]), 3.0, Material())
        assert vals[0] == 1e-9
        assert vals[1] == 1.0


def cantilever_1x1():
    g = Grid(1, 1)
    mat = Material()
    rho = DensityField(g, np.ones(1))
    k = assemble_stiffness(rho, 3.0, mat)
    f = np.zeros(g.n_dofs)
    tip = g.node_id(1, 0)
    f[2 * tip + 1] = -1.0
    fixed = np.array(
        [2 * g.node_id(0, 0), 2 * g.node_id(0, 0) + 1, 2 * g.node_id(0, 1), 2 * g.node_id(0, 1) + 1]
    )
    return g, k, f, fixed


class TestSolve:
    def test_single_element_matches_dense_elimination(self):
        g, k, f, fixed = cantilever_1x1()
        u = solve_spd(LinearSystem(k, f, fixed))
        kd = k.toarray()
        free = np.setdiff1d(np.arange(g.n_dofs), fixed)
        uref = np.zeros(g.n_dofs)
        uref[free] = np.linalg.solve(kd[np.ix_(free, free)], f[free])
        assert np.abs(u - uref).max() <= 1e-9

    def test_random_grid_matches_dense_elimination(self):
        rng = np.random.default_rng(7)
        g = Grid(5, 4)
        rho = DensityField(g, rng.uniform(0.05, 1.0, g.n_elements))
        k = assemble_stiffness(rho, 3.0, Material())
        f = rng.standard_normal(g.n_dofs)
        fixed = np.array([0, 1, 2, 3, 8, 9])
        u = solve_spd(LinearSystem(k, f, fixed))
        kd = k.toarray()
        free = np.setdiff1d(np.arange(g.n_dofs), fixed)
        uref = np.zeros(g.n_dofs)
        uref[free] = np.linalg.solve(kd[np.ix_(free, free)], f[free])
        assert np.abs(u - uref).max() < 1e-8

    def test_prescribed_values_enter_rhs(self):
        rng = np.random.default_rng(3)
        g = Grid(3, 3)
        rho = DensityField(g, rng.uniform(0.2, 1.0, g.n_elements))
        k = assemble_stiffness(rho, 3.0, Material())
        fixed = np.array([0, 1, 20, 21])
        vals = np.array([0.1, -0.2, 0.0, 0.3])
        u = solve_spd(LinearSystem(k, np.zeros(g.n_dofs), fixed, vals))
        assert u[fixed] == pytest.approx(vals, abs=0)
        free = np.setdiff1d(np.arange(g.n_dofs), fixed)
        resid = (k @ u)[free]
        assert np.abs(resid).max() < 1e-8 * np.abs(k @ u).max()

    def test_failure_carries_residual(self):
        g, k, f, fixed = cantilever_1x1()
        with pytest.raises(SolverFailure) as exc:
            solve_spd(LinearSystem(k, f, fixed), tol=0.0)
        assert exc.value.residual is not None

    def test_requires_constraints(self):
        g, k, f, fixed = cantilever_1x1()
        with pytest.raises(ValueError):
            solve_spd(LinearSystem(k, f, np.array([], dtype=int)))

    def test_multi_rhs_shares_factorization(self):
        g, k, f, fixed = cantilever_1x1()
        f2 = np.zeros_like(f)
        f2[2 * g.node_id(1, 1)] = 1.0
        u = solve_many(k, np.stack([f, f2]), fixed)
        u0 = solve_spd(LinearSystem(k, f, fixed))
        u1 = solve_spd(LinearSystem(k, f2, fixed))
        assert np.array_equal(u[0], u0)
        assert np.array_equal(u[1], u1)


class TestCompliance:
    def test_energy_matches_work(self):
        rng = np.random.default_rng(11)
        g = Grid(6, 4)
        rho = DensityField(g, rng.uniform(0.0, 1.0, g.n_elements))
        mat = Material()
        k = assemble_stiffness(rho, 3.0, mat)
        f = np.zeros(g.n_dofs)
        f[2 * g.node_id(6, 2) + 1] = -1.0
        fixed = np.arange(2 * (g.nely + 1))  # clamp the whole left edge
        u = solve_spd(LinearSystem(k, f, fixed))
        c, ce = compliance(u, rho, 3.0, mat)
        assert np.all(ce >= 0.0)
        assert c == pytest.approx(float(f @ u), rel=1e-8)
        assert c == pytest.approx(float(u @ (k @ u)), rel=1e-8)
