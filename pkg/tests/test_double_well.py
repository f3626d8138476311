import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings, strategies as st

from schrolab.double_well import (AGMON_S0, CACHE_ENV, AttainableRangeError, CalibrationError,
                                  SmoothSign, V_DW, X_STAR, agmon_distance, attainable_G_range,
                                  c1_norms, cached_encoding_for_G, calibrate, concentration_profile,
                                  encoding_for_G, gap_law_fit, kinetic_scale, load_encoding,
                                  logical_pauli_residuals, right_well_mass, save_encoding,
                                  smooth_sign, tunneling_gap)
from schrolab.grid import Grid1D, _lap1d_matrix

# Frozen from a full (non-parity-split) dense diagonalization, see test_gap_dense_oracle
GAP_H010_M2001 = 0.06859163354783962


def dense_gap(h: float, m: int) -> float:
    g = Grid1D(m)
    A = h * h * _lap1d_matrix(g).toarray() + np.diag(V_DW(g.nodes))
    w = la.eigvalsh(A, subset_by_index=(0, 1))
    return float(w[1] - w[0])


class TestPotential:
    def test_symmetric_with_minima(self):
        x = np.linspace(-1, 1, 201)
        np.testing.assert_allclose(V_DW(x), V_DW(-x), atol=0)
        assert V_DW(X_STAR) == 0 and V_DW(-X_STAR) == 0
        assert V_DW.second_derivative(X_STAR) > 0

    def test_second_derivative_matches_fd(self):
        x, d = 0.3, 1e-4
        fd = (V_DW(x + d) - 2 * V_DW(x) + V_DW(x - d)) / d**2
        assert fd == pytest.approx(V_DW.second_derivative(x), rel=1e-6)


class TestSmoothSign:
    def test_values(self):
        w = 0.05
        assert smooth_sign(w, 0.0) == 0.0
        assert smooth_sign(w, w) == 1.0 and smooth_sign(w, -w) == -1.0
        assert 0 < smooth_sign(w, w / 2) < 1

    @settings(max_examples=50, deadline=None)
    @given(w=st.floats(0.01, 0.5), x=st.floats(-1, 1))
    def test_odd_bounded_exact_outside(self, w, x):
        s = smooth_sign(w, x)
        assert abs(s) <= 1
        assert smooth_sign(w, -x) == pytest.approx(-s, abs=1e-15)
        if abs(x) >= w:
            assert s == np.sign(x)

    def test_monotone(self):
        x = np.linspace(-0.2, 0.2, 20001)
        assert np.all(np.diff(smooth_sign(0.1, x)) >= 0)

    @pytest.mark.parametrize("w", [0.02, 0.05, 0.2])
    def test_lipschitz(self, w):
        L = SmoothSign(w).measured_lipschitz()
        assert L <= 2.5 / w
        assert L * w == pytest.approx(2.0, rel=1e-3)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            smooth_sign(0.0, 0.1)


class TestAgmon:
    def test_s0(self):
        exact = 0.5 / 4 - 0.5**3 / 3 - (-0.5 / 4 + 0.5**3 / 3)
        assert exact == pytest.approx(1 / 6, abs=1e-15)
        assert abs(agmon_distance(V_DW, 0.0, 0.5, -0.5) - exact) <= 1e-9

    def test_empty_path(self):
        assert agmon_distance(V_DW, 0.0, 0.3, 0.3) == 0.0

    def test_half(self):
        assert agmon_distance(V_DW, 0.0, 0.5, 0.0) == pytest.approx(AGMON_S0 / 2, abs=1e-12)


class TestCalibration:
    def test_gap_dense_oracle(self):
        assert tunneling_gap(0.1, 801) == pytest.approx(dense_gap(0.1, 801), rel=1e-9)
        assert tunneling_gap(0.1, 2001) == pytest.approx(GAP_H010_M2001, rel=1e-12)

    @pytest.mark.parametrize("h", [0.02, 0.04, 0.07, 0.1, 0.12, 0.15])
    def test_calibration_identity(self, h):
        enc = calibrate(h)
        assert enc.C > 0
        assert abs(enc.E1 - enc.E0 - 2.0) <= 1e-8
        assert enc.G == pytest.approx(enc.C * h * h)

    def test_parity_and_orthonormality(self):
        enc = calibrate(0.06)
        x = enc.psi0
        np.testing.assert_allclose(x, x[::-1], atol=1e-12)
        np.testing.assert_allclose(enc.psi1, -enc.psi1[::-1], atol=1e-12)
        np.testing.assert_allclose(enc.states.T @ enc.states, np.eye(enc.states.shape[1]),
                                   atol=1e-10)

    def test_sign_convention_puts_right_state_right(self):
        enc = calibrate(0.05)
        assert enc.psi0.sum() > 0
        assert enc.psi1[enc.grid.nodes > 0].sum() > 0
        assert right_well_mass(enc) > 0.5

    def test_reflection(self):
        enc = calibrate(0.08)
        np.testing.assert_allclose(enc.psi_left, enc.psi_right[::-1], atol=1e-10)

    def test_separation_at_h008(self):
        enc = calibrate(0.08)
        assert enc.E2 - enc.E1 > 10 * (enc.E1 - enc.E0) / enc.C
        # uncalibrated excitation gap is of order h
        assert (enc.E2 - enc.E1) / enc.C > 0.08

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            calibrate(0.3)

    def test_refinement_failure_reports(self):
        with pytest.raises(CalibrationError, match="not grid-converged"):
            calibrate(0.02, 31)

    def test_refinement_recorded(self):
        enc = calibrate(0.1, 1001)
        assert enc.refinement["m_refined"] == 2003
        assert enc.refinement["relative_change"] < 0.01


class TestGapLaw:
    def test_slope(self):
        fit = gap_law_fit([0.10, 0.08, 0.06, 0.05, 0.04])
        assert fit["relative_deviation"] <= 0.2
        assert fit["slope"] == pytest.approx(-0.1750956078476549, rel=1e-6)


class TestEncodingForG:
    def test_fixed_point(self):
        G = kinetic_scale(0.1)
        enc = encoding_for_G(G)
        assert enc.h == pytest.approx(0.1, abs=1e-4)
        assert enc.G == pytest.approx(G, rel=1e-6)

    def test_doubling_G_lowers_h(self):
        hs = [encoding_for_G(G, 1001, h_bracket=(0.008, 0.12)).h for G in (1, 2, 4, 8, 16)]
        assert all(b < a for a, b in zip(hs, hs[1:]))

    def test_range_endpoints(self):
        lo, hi = attainable_G_range(2001, (0.02, 0.15))
        assert lo == pytest.approx(calibrate(0.15).G, rel=1e-12)
        assert hi == pytest.approx(calibrate(0.02).G, rel=1e-12)

    def test_out_of_range_reports_interval(self):
        with pytest.raises(AttainableRangeError) as exc:
            encoding_for_G(1e6)
        lo, hi = exc.value.interval
        assert lo < hi < 1e6

    def test_cache_roundtrip(self, tmp_path, monkeypatch):
        monkeypatch.setenv(CACHE_ENV, str(tmp_path))
        a = cached_encoding_for_G(10.0, 1001, h_bracket=(0.008, 0.12))
        assert len(list(tmp_path.glob("enc-*.json"))) == 1
        b = cached_encoding_for_G(10.0, 1001, h_bracket=(0.008, 0.12))
        np.testing.assert_array_equal(a.states, b.states)
        assert a.h == b.h and a.C == b.C


class TestLogicalResiduals:
    @pytest.fixture(scope="class")
    @staticmethod
    def sweep():
        encs = [encoding_for_G(G, 2001, h_bracket=(0.008, 0.12)) for G in (1, 10, 100, 1000)]
        return [logical_pauli_residuals(e, 0.05) for e in encs]

    def test_diagonal_vanishes(self, sweep):
        for r in sweep:
            assert abs(r.diag0) <= 1e-10 and abs(r.diag1) <= 1e-10

    def test_offdiag_approaches_one(self, sweep):
        off = [abs(r.offdiag) for r in sweep]
        assert all(b > a for a, b in zip(off, off[1:]))
        assert off[-1] > 0.9999

    def test_leakage_decreases(self, sweep):
        for attr in ("leakage0", "leakage1"):
            vals = [getattr(r, attr) for r in sweep]
            assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_leakage_split(self, sweep):
        for r in sweep:
            assert r.leakage0 ** 2 == pytest.approx(r.truncated_leakage0**2 + r.complement0**2,
                                                    rel=1e-8)


class TestConcentration:
    def test_envelope_weakest_near_left_well(self):
        prof = concentration_profile(calibrate(0.05), [-0.49, -0.2, 0.0, 0.2])
        assert np.all(np.diff(prof.envelope) > 0)
        assert prof.envelope[0] == pytest.approx(np.exp(-2 * 0.8 * AGMON_S0 / 0.05), rel=1e-2)

    def test_slope_in_semiclassical_regime(self):
        hs = np.array([0.02, 0.025, 0.03, 0.04])
        tails = [concentration_profile(calibrate(h, 4001), [0.0]).tail_right[0] for h in hs]
        slope = np.polyfit(1 / hs, np.log(tails), 1)[0]
        assert slope <= -2 * 0.8 / 12

    def test_mirror_symmetry(self):
        prof = concentration_profile(calibrate(0.06), [-0.3, 0.0, 0.25])
        np.testing.assert_allclose(prof.tail_left_mirror, prof.tail_right, atol=1e-10)

    def test_probe_validation(self):
        with pytest.raises(ValueError):
            concentration_profile(calibrate(0.06), [0.6])


def test_persistence_roundtrip(tmp_path):
    enc = calibrate(0.07, 1001)
    save_encoding(enc, str(tmp_path / "e"))
    back = load_encoding(str(tmp_path / "e"))
    np.testing.assert_array_equal(back.states, enc.states)
    assert back.C == enc.C and back.h == enc.h and back.sign == enc.sign


def test_c1_norms_reported():
    norms = c1_norms(calibrate(0.05))
    assert len(norms) == 2 and all(np.isfinite(norms))
