import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from schrolab.double_well import V_DW, smooth_sign
from schrolab.grid import (Grid1D, GridSizeError, NonConvergence, PotentialTerm, SparseSymOp,
                           TensorGrid, assemble_schrodinger, dump_vectors, laplacian_1d,
                           lowest_eigenpairs, sample_potential)


def discrete_dirichlet_modes(m: int, k: int) -> np.ndarray:
    """Exact eigenvalues of the 3-point Dirichlet stencil (closed form)."""
    d = 2.0 / (m + 1)
    j = np.arange(1, k + 1)
    return (4.0 / d**2) * np.sin(j * np.pi / (2 * (m + 1))) ** 2


class TestGrid1D:
    def test_dirichlet_nodes(self):
        g = Grid1D(9)
        assert g.spacing == pytest.approx(0.2)
        assert np.all(np.diff(g.nodes) > 0)
        assert g.nodes[0] > -1 and g.nodes[-1] < 1
        np.testing.assert_allclose(g.nodes, np.linspace(-0.8, 0.8, 9), atol=1e-15)

    def test_periodic_nodes_tile_circle(self):
        g = Grid1D(8, "periodic")
        assert g.spacing == pytest.approx(0.25)
        assert g.nodes[0] == -1.0
        assert g.nodes[-1] + g.spacing == pytest.approx(1.0)

    def test_refinement_nests(self):
        g = Grid1D(7)
        np.testing.assert_allclose(g.refined().nodes[1::2], g.nodes, atol=1e-15)

    def test_bad_boundary(self):
        with pytest.raises(ValueError):
            Grid1D(4, "neumann")


class TestTensorGrid:
    def test_index_bijection_last_fastest(self):
        tg = TensorGrid((Grid1D(3), Grid1D(4)))
        assert tg.flat_index((0, 1)) == 1
        assert tg.flat_index((1, 0)) == 4
        for f in range(tg.size):
            assert tg.flat_index(tg.multi_index(f)) == f

    def test_mixed_boundaries_rejected(self):
        with pytest.raises(ValueError):
            TensorGrid((Grid1D(3), Grid1D(4, "periodic")))

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            TensorGrid.uniform(4, 3)


class TestLaplacian:
    @pytest.mark.parametrize("k, exact", [(0, np.pi**2 / 4), (1, np.pi**2)])
    def test_dirichlet_low_modes(self, k, exact):
        w = lowest_eigenpairs(laplacian_1d(Grid1D(999)), 2).eigenvalues
        assert abs(w[k] - exact) / exact < 1e-4

    def test_periodic_constant_in_kernel(self):
        L = laplacian_1d(Grid1D(16, "periodic"))
        np.testing.assert_allclose(L @ np.ones(16), 0.0, atol=1e-12)

    def test_stencil(self):
        L = laplacian_1d(Grid1D(4)).toarray()
        d2 = (2.0 / 5) ** 2
        np.testing.assert_allclose(L * d2, 2 * np.eye(4) - np.eye(4, k=1) - np.eye(4, k=-1))

    def test_second_order_convergence(self):
        ms = [15, 31, 63, 127]
        errs = [abs(lowest_eigenpairs(laplacian_1d(Grid1D(m)), 1).eigenvalues[0] - np.pi**2 / 4)
                for m in ms]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(ratios >= 3.5), ratios

    def test_symmetric_by_construction(self):
        L = laplacian_1d(Grid1D(33, "periodic")).matrix
        assert abs(L - L.T).max() == 0


class TestPotential:
    def test_zero(self):
        op = sample_potential(TensorGrid.uniform(2, 5), [])
        assert abs(op.matrix).max() == 0

    def test_quadratic(self):
        g = TensorGrid.uniform(1, 11)
        op = sample_potential(g, [PotentialTerm((0,), lambda x: x**2)])
        np.testing.assert_allclose(op.diagonal(), g.dims[0].nodes ** 2, atol=1e-15)

    def test_two_body_separable(self):
        g = TensorGrid.uniform(2, 12)
        f = lambda x: smooth_sign(0.1, x)
        op = sample_potential(g, [PotentialTerm((0, 1), lambda x, y: f(x) * f(y))])
        s = f(g.dims[0].nodes)
        np.testing.assert_allclose(op.diagonal(), np.outer(s, s).ravel(), atol=1e-15)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError), np.errstate(divide="ignore"):
            sample_potential(TensorGrid.uniform(1, 5), [PotentialTerm((0,), lambda x: 1 / (x * 0))])

    def test_three_body_rejected(self):
        with pytest.raises(ValueError):
            PotentialTerm((0, 1, 2), lambda x, y, z: x)


class TestAssembly:
    def test_1d_free_equals_laplacian(self):
        g = Grid1D(20)
        op = assemble_schrodinger(TensorGrid((g,)), [1.0], [])
        assert abs(op.matrix - laplacian_1d(g).matrix).max() == 0

    def test_2d_free_ground_state(self):
        op = assemble_schrodinger(TensorGrid.uniform(2, 60), [1.0, 1.0], [])
        w = lowest_eigenpairs(op, 1).eigenvalues[0]
        assert w == pytest.approx(2 * discrete_dirichlet_modes(60, 1)[0], rel=1e-12)
        assert w == pytest.approx(np.pi**2 / 2, rel=2e-3)

    def test_matvec_matches_dense_2body(self):
        g = TensorGrid.uniform(2, 12)
        V = [PotentialTerm((0,), lambda x: x**2), PotentialTerm((0, 1), lambda x, y: np.sin(x * y))]
        op = assemble_schrodinger(g, [1.0, 0.5], V)
        dense = op.toarray()
        assert np.abs(dense - dense.T).max() == 0
        v = np.random.default_rng(0).standard_normal(g.size)
        np.testing.assert_allclose(op @ v, dense @ v, atol=1e-12)

    def test_matrix_free_3d_matches_assembled(self):
        g = TensorGrid.uniform(3, 6)
        V = [PotentialTerm((0, 2), lambda x, z: x * z)]
        mf = assemble_schrodinger(g, [1.0, 2.0, 0.5], V)
        asm = assemble_schrodinger(g, [1.0, 2.0, 0.5], V, matrix_free=False)
        assert mf.matrix is None
        v = np.random.default_rng(1).standard_normal((g.size, 3))
        np.testing.assert_allclose(mf @ v, asm @ v, atol=1e-10)

    def test_grid_cap(self):
        with pytest.raises(GridSizeError):
            assemble_schrodinger(TensorGrid.uniform(2, 100), [1.0, 1.0], [], max_points=9999)

    def test_negative_kinetic_rejected(self):
        with pytest.raises(ValueError):
            assemble_schrodinger(TensorGrid.uniform(1, 10), [-1.0], [])


class TestSparseSymOp:
    def test_from_entries_mirrors(self):
        op = SparseSymOp.from_entries(3, [0, 0, 1], [0, 2, 1], [1.0, -2.0, 3.0])
        np.testing.assert_array_equal(op.toarray(), [[1, 0, -2], [0, 3, 0], [-2, 0, 0]])

    def test_from_entries_rejects_lower(self):
        with pytest.raises(ValueError):
            SparseSymOp.from_entries(2, [1], [0], [1.0])

    def test_gershgorin_bounds(self):
        op = assemble_schrodinger(TensorGrid.uniform(2, 10), [1.0, 1.0],
                                  [PotentialTerm((0,), lambda x: 5 * x)])
        w = np.linalg.eigvalsh(op.toarray())
        assert op.lower_bound() <= w[0]
        assert op.norm_bound() >= np.abs(w).max()


class TestLowestEigenpairs:
    def test_diagonal(self):
        op = SparseSymOp(3, sp.diags([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(lowest_eigenpairs(op, 2).eigenvalues, [1.0, 2.0])

    def test_dirichlet_three_modes(self):
        w = lowest_eigenpairs(laplacian_1d(Grid1D(1999)), 3).eigenvalues
        np.testing.assert_allclose(w, (np.arange(1, 4) * np.pi / 2) ** 2, rtol=1e-5)

    def test_double_well_matches_dense(self):
        op = assemble_schrodinger(TensorGrid((Grid1D(2000),)), [0.01],
                                  [PotentialTerm((0,), V_DW)])
        w = lowest_eigenpairs(op, 4).eigenvalues
        ref = np.linalg.eigvalsh(op.toarray())[:4]
        np.testing.assert_allclose(w, ref, rtol=0, atol=1e-9)

    @pytest.mark.parametrize("n, m", [(2, 12), (2, 40)])
    def test_agrees_with_dense(self, n, m):
        V = [PotentialTerm((0, 1), lambda x, y: 3 * x * y + y**2)]
        op = assemble_schrodinger(TensorGrid.uniform(n, m), [1.0, 0.7], V)
        tol = 1e-10
        spec = lowest_eigenpairs(op, 5, tol=tol)
        ref = np.linalg.eigvalsh(op.toarray())[:5]
        assert np.abs(spec.eigenvalues - ref).max() <= 10 * tol * op.norm_bound()
        np.testing.assert_allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(5), atol=1e-8)

    def test_lanczos_large_2d_separable_oracle(self):
        m = 70
        op = assemble_schrodinger(TensorGrid.uniform(2, m), [1.0, 1.0], [])
        spec = lowest_eigenpairs(op, 3)
        assert spec.method == "lanczos-shift-invert"
        one = discrete_dirichlet_modes(m, 2)
        np.testing.assert_allclose(spec.eigenvalues, [2 * one[0], one[0] + one[1], one[0] + one[1]],
                                   rtol=1e-10)

    def test_matrix_free_3d(self):
        m = 17
        op = assemble_schrodinger(TensorGrid.uniform(3, m), [1.0, 1.0, 1.0], [])
        spec = lowest_eigenpairs(op, 1, tol=1e-9)
        assert spec.method == "lanczos"
        assert spec.eigenvalues[0] == pytest.approx(3 * discrete_dirichlet_modes(m, 1)[0], rel=1e-9)

    def test_k_validation(self):
        with pytest.raises(ValueError):
            lowest_eigenpairs(laplacian_1d(Grid1D(5)), 5)

    def test_nonconvergence_carries_residuals(self):
        op = assemble_schrodinger(TensorGrid.uniform(2, 70), [1.0, 1.0], [])
        with pytest.raises(NonConvergence) as exc:
            lowest_eigenpairs(op, 3, tol=1e-30, maxiter=2)
        assert exc.value.residuals is not None and len(exc.value.residuals) == 3

    def test_csv_and_dump(self, tmp_path):
        g = TensorGrid((Grid1D(30),))
        spec = lowest_eigenpairs(laplacian_1d(g.dims[0]), 3)
        lines = spec.to_csv().splitlines()
        assert lines[0] == "index,eigenvalue,residual" and len(lines) == 4
        stem = str(tmp_path / "vec")
        dump_vectors(stem, spec.eigenvectors, g)
        meta = json.load(open(stem + ".json"))
        back = np.fromfile(stem + ".bin", dtype="<f8").reshape(meta["shape"])
        np.testing.assert_array_equal(back, spec.eigenvectors)


@settings(max_examples=20, deadline=None)
@given(m=st.integers(4, 30), g=st.floats(0.1, 10), c=st.floats(-5, 5))
def test_assembled_operator_symmetric(m, g, c):
    op = assemble_schrodinger(TensorGrid.uniform(2, m), [g, 1.0],
                              [PotentialTerm((0, 1), lambda x, y: c * x * y)])
    assert abs(op.matrix - op.matrix.T).max() == 0
