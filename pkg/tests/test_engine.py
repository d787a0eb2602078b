import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from cdfqa.engine import (
    EvolutionOp,
    StateVector,
    diagonalize,
    energy_bins,
    evolve_exact,
    evolve_trotter1,
    expectation,
    initial_state,
    trotter_order,
)
from cdfqa.model import SpinChainSpec, build_ising, build_operator
from cdfqa.pauli import PauliString, PauliSum

from test_model import E0_LFI6

MFI6 = SpinChainSpec(6, field_hz=0.4, field_hx=0.4)


def random_state(n, seed=0):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, psi / np.linalg.norm(psi))


class TestStateVector:
    def test_read_only(self):
        st_ = initial_state("X", 2)
        with pytest.raises(ValueError):
            st_.amplitudes[0] = 1.0

    def test_shape_and_cap(self):
        with pytest.raises(ValueError):
            StateVector(2, np.ones(3))
        with pytest.raises(ValueError):
            initial_state("X", 13)


class TestInitialState:
    def test_plus_state(self):
        np.testing.assert_allclose(initial_state("X", 2).amplitudes, [0.5] * 4)

    def test_up_state(self):
        amp = initial_state("Z", 3).amplitudes
        assert amp[0] == 1 and np.count_nonzero(amp) == 1

    def test_y_rotation_maps_z_to_x(self):
        n = 4
        op = EvolutionOp(build_operator("Y", SpinChainSpec(n)))
        out = evolve_exact(initial_state("Z", n), op, np.pi / 4)
        np.testing.assert_allclose(out.amplitudes, initial_state("X", n).amplitudes, atol=1e-10)

    def test_unsupported(self):
        with pytest.raises(ValueError):
            initial_state("Y", 3)


class TestEvolutionOp:
    @pytest.mark.parametrize("tag", ["X", "Y", "YZ", "YX", "XY+0.3*Z", "YX+0.5*YZ"])
    def test_matches_expm(self, tag):
        h = build_operator(tag, SpinChainSpec(5, boundary="open"))
        op = EvolutionOp(h)
        for s in (0.013, -0.7, 2.1):
            np.testing.assert_allclose(op.matrix(s), sl.expm(-1j * s * h.to_matrix()), atol=1e-9)

    def test_ising_matches_expm(self):
        h = build_ising(MFI6)
        psi = random_state(6)
        out = evolve_exact(psi, EvolutionOp(h), 0.37)
        np.testing.assert_allclose(out.amplitudes, sl.expm(-0.37j * h.to_matrix()) @ psi.amplitudes, atol=1e-9)

    def test_scale_zero_and_inverse(self):
        op = EvolutionOp(build_operator("YZ", MFI6))
        psi = random_state(6, 3)
        assert evolve_exact(psi, op, 0.0).amplitudes is psi.amplitudes
        back = evolve_exact(evolve_exact(psi, op, 0.4), op, -0.4)
        np.testing.assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-10)

    def test_single_string(self):
        s = PauliString.from_label("XZY")
        op = EvolutionOp(PauliSum.from_string(s))
        psi = random_state(3, 1)
        th = 0.3
        expected = np.cos(th) * psi.amplitudes - 1j * np.sin(th) * s.apply(psi.amplitudes)
        np.testing.assert_allclose(evolve_exact(psi, op, th).amplitudes, expected, atol=1e-12)

    def test_ground_state_is_stationary(self):
        h = build_ising(MFI6)
        spec = diagonalize(h)
        op = EvolutionOp(h)
        psi = StateVector(6, spec.eigenvectors[:, 0])
        e0 = expectation(psi, h).real
        for _ in range(200):
            psi = evolve_exact(psi, op, 0.01)
        assert abs(expectation(psi, h).real - e0) < 1e-9
        assert psi.fidelity(StateVector(6, spec.eigenvectors[:, 0])) == pytest.approx(1.0, abs=1e-9)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            EvolutionOp(build_operator("Y", MFI6) * 1j)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evolve_exact(initial_state("X", 4), EvolutionOp(build_operator("X", MFI6)), 0.1)

    def test_norm_over_600_unitaries(self):
        ops = [EvolutionOp(build_ising(MFI6)), EvolutionOp(build_operator("X", MFI6)), EvolutionOp(build_operator("YX", MFI6))]
        psi = initial_state("X", 6)
        rng = np.random.default_rng(5)
        for k in range(600):
            psi = evolve_exact(psi, ops[k % 3], rng.uniform(-0.5, 0.5))
        assert abs(psi.norm - 1) < 1e-9


class TestTrotter:
    def test_commuting_terms_exact(self):
        chain = SpinChainSpec(5, field_hz=0.4)
        h = build_ising(chain)
        psi = random_state(5)
        for s in (0.01, 0.9):
            a = evolve_trotter1(psi, h, s).amplitudes
            b = evolve_exact(psi, EvolutionOp(h), s).amplitudes
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_order_is_bonds_then_z_then_x(self):
        h = build_ising(SpinChainSpec(3, field_hz=0.4, field_hx=0.4))
        labels = [s.label for s, _ in trotter_order(h)]
        assert labels == ["ZZI", "ZIZ", "IZZ", "ZII", "IZI", "IIZ", "XII", "IXI", "IIX"]

    def test_first_order_error(self):
        h = build_ising(MFI6)
        psi = random_state(6, 2)
        exact = evolve_exact(psi, EvolutionOp(h), 0.01)
        approx = evolve_trotter1(psi, h, 0.01)
        assert 1 - exact.fidelity(approx) < 1e-6

    def test_reversed_order_close(self):
        h = build_ising(MFI6)
        order = trotter_order(h)
        psi = a = b = initial_state("X", 6)
        for _ in range(200):
            a = evolve_trotter1(a, h, 0.01)
            b = evolve_trotter1(b, h, 0.01, order[::-1])
        e0 = diagonalize(h).ground_energy
        ea = (expectation(a, h).real - e0) / 6
        eb = (expectation(b, h).real - e0) / 6
        assert abs(ea - eb) < 1e-3
        assert psi is not a


class TestExpectation:
    def test_values_on_plus_state(self):
        psi = initial_state("X", 6)
        assert expectation(psi, build_operator("X", MFI6)).real == pytest.approx(6.0)
        assert abs(expectation(psi, build_operator("ZZ", MFI6))) < 1e-12
        assert expectation(psi, build_ising(MFI6)).real == pytest.approx(-2.4)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            expectation(initial_state("X", 4), build_ising(MFI6))


class TestSpectrum:
    def test_open_zz_degenerate(self):
        spec = diagonalize(build_ising(SpinChainSpec(3, boundary="open")))
        assert spec.ground_energy == pytest.approx(-2.0)
        assert spec.ground_states().shape[1] == 2

    def test_tfi_zero_field_ghz_pair(self):
        spec = diagonalize(build_ising(SpinChainSpec(4)))
        g = spec.ground_states()
        assert g.shape[1] == 2
        # the span is that of |0000> and |1111>
        proj = g @ g.conj().T
        assert proj[0, 0].real == pytest.approx(1.0) and proj[15, 15].real == pytest.approx(1.0)

    def test_lfi_golden(self):
        assert diagonalize(build_ising(SpinChainSpec(6, field_hz=0.4))).ground_energy == pytest.approx(E0_LFI6)

    def test_eigen_relations(self):
        h = build_ising(MFI6)
        spec = diagonalize(h)
        m = h.to_matrix()
        v = spec.eigenvectors
        assert np.all(np.diff(spec.eigenvalues) >= 0)
        np.testing.assert_allclose(v.conj().T @ v, np.eye(64), atol=1e-9)
        resid = np.abs(m @ v - v * spec.eigenvalues).max()
        assert resid < 1e-8 * np.abs(m).max()
        psi = StateVector(6, v[:, 0])
        assert expectation(psi, h).real == pytest.approx(spec.ground_energy, abs=1e-9)

    def test_cap(self):
        with pytest.raises(ValueError):
            diagonalize(build_operator("Z", SpinChainSpec(13)))


class TestBins:
    def test_ground_state_in_first_bin(self):
        spec = diagonalize(build_ising(MFI6))
        w = energy_bins(StateVector(6, spec.eigenvectors[:, 0]), spec)
        assert w[0] == pytest.approx(1.0) and w.sum() == pytest.approx(1.0)

    def test_degenerate_levels_share_a_bin(self):
        # -ZZ on an open 3-chain: levels -2 (x2), 0 (x4), 2 (x2); edges sit exactly on levels
        spec = diagonalize(build_ising(SpinChainSpec(3, boundary="open")))
        w = energy_bins(initial_state("X", 3), spec, n_bins=3)
        np.testing.assert_allclose(w, [0.25, 0.5, 0.25], atol=1e-12)

    def test_overflow_goes_to_last_bin(self):
        spec = diagonalize(build_ising(MFI6))
        w = energy_bins(random_state(6), spec, n_bins=2)
        assert w.sum() == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        spec = diagonalize(build_ising(MFI6))
        with pytest.raises(ValueError):
            energy_bins(initial_state("X", 4), spec)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.sampled_from(["X", "Y", "YZ", "YX", "ZZ"]))
def test_evolution_preserves_norm(scale, tag):
    op = EvolutionOp(build_operator(tag, SpinChainSpec(4)))
    psi = evolve_exact(random_state(4, 7), op, scale)
    assert abs(psi.norm - 1) < 1e-12
