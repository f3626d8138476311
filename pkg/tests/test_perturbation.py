import json

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from schrolab.grid import Grid1D, TensorGrid, assemble_schrodinger, lowest_eigenpairs
from schrolab.perturbation import (LEMMAS, BlockSplit, LemmaViolation, _instance, check_duhamel,
                                   check_pert_sim, check_pert_spec, check_trunc_leak, check_weyl,
                                   pert_sim_envelope, random_block_split, random_hermitian,
                                   run_suite, write_summary)


def expm_oracle(H, t):
    return la.expm(-1j * t * H)


class TestTrivialCases:
    def test_weyl_identical(self):
        A = random_hermitian(5, np.random.default_rng(0))
        res = check_weyl(A, A)
        assert res.lhs <= 1e-13 and res.detail["norm"] == 0.0

    @pytest.mark.parametrize("eps", [1e-3, 0.5, 4.0])
    def test_weyl_tight_for_scalar_shift(self, eps):
        A = random_hermitian(6, np.random.default_rng(1))
        res = check_weyl(A, A + eps * np.eye(6))
        assert res.lhs == pytest.approx(eps, rel=1e-10)
        assert res.detail["norm"] == pytest.approx(eps, rel=1e-12)

    def test_duhamel_at_zero(self):
        rng = np.random.default_rng(2)
        res = check_duhamel(random_hermitian(4, rng), random_hermitian(4, rng), 0.0)
        assert res.lhs <= 1e-15

    def test_decoupled_blocks(self):
        split = random_block_split(3, 5, np.random.default_rng(3), r_norm=0.0)
        assert split.r_norm() <= 1e-14
        assert check_trunc_leak(split, 2.0).lhs <= 1e-12
        assert check_pert_sim(split, 2.0).lhs <= 1e-12

    def test_envelope_formula(self):
        assert pert_sim_envelope(0.5, 2.0) == pytest.approx(2 * np.sqrt(2) / 3)


class TestBlockSplit:
    def test_blocks_match_coordinate_partition(self):
        split = random_block_split(2, 4, np.random.default_rng(4), rotate=False)
        H = split.dense()
        np.testing.assert_allclose(split.A(), H[:2, :2], atol=1e-14)
        assert split.r_norm() == pytest.approx(la.svdvals(H[2:, :2])[0], rel=1e-12)
        np.testing.assert_allclose(la.eigvalsh(split.B()), la.eigvalsh(H[2:, 2:]), atol=1e-12)

    def test_delta_control(self):
        split = random_block_split(3, 6, np.random.default_rng(5), delta=1.25)
        assert split.delta() == pytest.approx(1.25, abs=1e-10)

    def test_rejects_non_orthonormal_frame(self):
        with pytest.raises(ValueError):
            BlockSplit(np.eye(3), np.ones((3, 1)))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            BlockSplit(np.triu(np.ones((3, 3))), np.eye(3, 1))

    def test_sparse_operator_path(self):
        op = assemble_schrodinger(TensorGrid((Grid1D(60),)), [0.1], [])
        F = lowest_eigenpairs(op, 2).eigenvectors + 0.0
        F, _ = np.linalg.qr(F + 0.01 * np.random.default_rng(0).standard_normal(F.shape))
        sparse, dense = BlockSplit(op, F), BlockSplit(op.toarray(), F)
        assert sparse.r_norm() == pytest.approx(dense.r_norm(), rel=1e-10)
        assert check_pert_sim(sparse, 0.3).lhs == pytest.approx(check_pert_sim(dense, 0.3).lhs,
                                                               abs=1e-10)


class TestPreconditions:
    def test_pert_spec_skips_without_gap(self):
        split = random_block_split(2, 5, np.random.default_rng(6), delta=-0.5)
        res = check_pert_spec(split)
        assert res.skipped and res.ok

    def test_pert_spec_with_gap(self):
        split = random_block_split(2, 5, np.random.default_rng(7), r_norm=0.2, delta=2.0)
        res = check_pert_spec(split)
        assert not res.skipped and res.lhs <= res.rhs

    @pytest.mark.parametrize("lemma", ["trunc_leak", "pert_sim"])
    def test_dynamics_lemmas_need_no_gap(self, lemma):
        split = random_block_split(3, 4, np.random.default_rng(8), r_norm=0.3, delta=-3.0)
        check = check_trunc_leak if lemma == "trunc_leak" else check_pert_sim
        assert check(split, 1.0).ok


class TestDetection:
    def test_wrong_propagator_is_caught(self):
        split = random_block_split(2, 6, np.random.default_rng(9), r_norm=1e-3)
        bogus = lambda F, t: F * np.exp(-1j * 5.0 * t)
        with pytest.raises(LemmaViolation):
            check_pert_sim(split, 1.0, propagator=bogus)

    def test_custom_propagator_matches_builtin(self):
        split = random_block_split(2, 6, np.random.default_rng(10), r_norm=0.1)
        prop = lambda F, t: expm_oracle(split.dense(), t) @ F
        a = check_pert_sim(split, 1.5, propagator=prop).lhs
        b = check_pert_sim(split, 1.5).lhs
        assert a == pytest.approx(b, abs=1e-12)


class TestScaling:
    def test_pert_sim_error_shrinks_superlinearly_in_r(self):
        base = random_block_split(2, 8, np.random.default_rng(11), r_norm=1.0, rotate=False)
        H0 = base.dense()
        rs = np.array([1e-3, 3e-3, 1e-2, 3e-2])
        errs = []
        for r in rs:
            H = H0.copy()
            H[2:, :2] *= r
            H[:2, 2:] *= r
            errs.append(check_pert_sim(BlockSplit(H, base.frame), 1.0).lhs)
        slope = np.polyfit(np.log(rs), np.log(errs), 1)[0]
        assert slope >= 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.01, 20.0))
def test_dynamic_bounds_random(seed, t):
    rng = np.random.default_rng(seed)
    split = random_block_split(int(rng.integers(1, 5)), int(rng.integers(1, 12)), rng,
                               r_norm=float(10 ** rng.uniform(-3, 0.5)))
    assert check_trunc_leak(split, t, strict=False).ok
    assert check_pert_sim(split, t, strict=False).ok


class TestSuite:
    def test_instances_reproducible(self):
        for lemma in LEMMAS:
            a, b = _instance(lemma, 17), _instance(lemma, 17)
            assert a.lhs == b.lhs and a.rhs == b.rhs

    def test_small_suite_clean(self, tmp_path):
        tallies = run_suite(25, seed0=1000)
        for lemma, t in tallies.items():
            assert t.failed == 0 and t.passed == 25, lemma
        write_summary(tallies, tmp_path / "s.json")
        data = json.load(open(tmp_path / "s.json"))
        assert set(data) == set(LEMMAS)
