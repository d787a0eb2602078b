import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdfqa.model import SpinChainSpec, build_ising
from cdfqa.noisy import (
    SHERBROOKE_ERROR,
    TORINO_ERROR,
    DensityMatrix,
    NoiseSpec,
    _NoisyState,
    depolarize,
    extrapolation_weights,
    fold_and_extrapolate,
    richardson_extrapolate,
    run_noisy,
    run_zne,
)
from cdfqa.pauli import PauliString, PauliSum
from cdfqa.protocol import ProtocolSpec, run_protocol, trace_array

MFI4 = SpinChainSpec(4, field_hz=0.4, field_hx=0.4, boundary="open")
SPEC = ProtocolSpec(MFI4, h_cd_tag="Y", alpha=4.0, delta_t=0.02, n_layers=10)


def random_rho(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(1 << n, 1 << n)) + 1j * rng.normal(size=(1 << n, 1 << n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


class TestChannel:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.text(alphabet="IXYZ", min_size=3, max_size=3).filter(lambda s: s != "III"))
    def test_contracts_pauli_expectations(self, p, label):
        rho = random_rho(3, 0)
        m = PauliString.from_label(label).to_matrix()
        before = np.trace(rho @ m)
        after = np.trace(depolarize(rho, p) @ m)
        assert abs(after - (1 - p) * before) < 1e-10

    def test_keeps_state_physical(self):
        rho = random_rho(3, 1)
        out = DensityMatrix(3, depolarize(rho, 0.3))
        assert out.trace == pytest.approx(1.0)
        np.testing.assert_allclose(out.matrix, out.matrix.conj().T, atol=1e-14)
        assert out.min_eigenvalue() >= -1e-12

    def test_density_expectation(self):
        psi = np.full(4, 0.5)
        rho = DensityMatrix.pure(psi)
        assert rho.expectation(PauliSum.from_labels([("XX", 2.0)])).real == pytest.approx(2.0)

    def test_size_cap(self):
        with pytest.raises(ValueError):
            DensityMatrix(6, np.eye(64))
        with pytest.raises(ValueError):
            run_noisy(ProtocolSpec(SpinChainSpec(6), n_layers=2), NoiseSpec(0.01))


class TestNoiseSpec:
    @pytest.mark.parametrize("kw", [dict(per_layer_error=1.5), dict(fold_factors=(1, 2)), dict(fold_factors=(3, 1))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            NoiseSpec(**kw)


class TestNoisyLoop:
    def test_zero_noise_is_exact(self):
        a = run_noisy(SPEC, NoiseSpec(0.0))
        b = run_protocol(SPEC)
        for col in ("beta", "gamma", "energy"):
            np.testing.assert_allclose(trace_array(a, col), trace_array(b, col), atol=1e-12)

    def test_full_depolarizing_kills_feedback(self):
        recs = run_noisy(SPEC, NoiseSpec(1.0))
        assert all(abs(r.beta) < 1e-12 and abs(r.gamma) < 1e-12 for r in recs[2:])
        assert recs[-1].energy == pytest.approx(0.0, abs=1e-12)

    def test_noise_raises_final_energy(self):
        clean = run_protocol(SPEC)[-1].energy
        finals = [run_noisy(SPEC, NoiseSpec(p))[-1].energy for p in (TORINO_ERROR, SHERBROOKE_ERROR)]
        assert clean < finals[0] < finals[1]

    def test_states_stay_physical(self):
        ns = _NoisyState(SPEC)
        rho = ns.rho0()
        for k in range(1, 6):
            rho = ns.apply_layer(rho, k, 0.3, -0.2, 0.05, fold=3)
        assert np.trace(rho).real == pytest.approx(1.0)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-13)
        assert np.linalg.eigvalsh(rho)[0] > -1e-12

    @pytest.mark.parametrize("fold", [3, 5])
    def test_folding_is_identity_without_noise(self, fold):
        ns = _NoisyState(SPEC)
        rho = ns.rho0()
        a = ns.apply_layer(rho, 2, 0.4, -0.3, 0.0)
        b = ns.apply_layer(rho, 2, 0.4, -0.3, 0.0, fold=fold)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_sampled_fields_rerun(self):
        a = trace_array(run_noisy(SPEC, NoiseSpec(0.01), shots_m=200, seed=3), "beta")
        b = trace_array(run_noisy(SPEC, NoiseSpec(0.01), shots_m=200, seed=3), "beta")
        np.testing.assert_array_equal(a, b)

    def test_rejects_trotter(self):
        with pytest.raises(ValueError):
            run_noisy(ProtocolSpec(MFI4, evolution_mode="trotter1", n_layers=2), NoiseSpec())


class TestExtrapolation:
    @pytest.mark.parametrize("factors", [(1, 3), (1, 3, 5), (1, 5, 9)])
    def test_recovers_polynomial(self, factors):
        coeffs = np.array([0.7, -0.2, 0.05])[: len(factors)]
        values = [np.polyval(coeffs[::-1], f) for f in factors]
        assert richardson_extrapolate(factors, values) == pytest.approx(coeffs[0], abs=1e-9)

    def test_weights_sum_to_one_and_variance_grows(self):
        w2, w3 = extrapolation_weights((1, 3)), extrapolation_weights((1, 3, 5))
        assert w2.sum() == pytest.approx(1.0) and w3.sum() == pytest.approx(1.0)
        assert (w3**2).sum() > (w2**2).sum()

    def test_needs_two_factors(self):
        with pytest.raises(ValueError):
            extrapolation_weights((1,))
        with pytest.raises(ValueError):
            run_zne(SPEC, NoiseSpec(0.01, (1,)))
        with pytest.raises(ValueError):
            richardson_extrapolate((1, 3), [1.0])

    @pytest.mark.parametrize("p", [TORINO_ERROR, SHERBROOKE_ERROR])
    def test_zne_closer_than_unmitigated(self, p):
        spec = ProtocolSpec(MFI4, h_cd_tag="Y", alpha=4.0, delta_t=0.02, n_layers=5)
        clean = trace_array(run_protocol(spec), "energy")
        raw = trace_array(run_noisy(spec, NoiseSpec(p)), "energy")
        zne, _ = run_zne(spec, NoiseSpec(p))
        err_raw = np.abs(raw - clean)[1:]
        err_zne = np.abs(trace_array(zne, "energy") - clean)[1:]
        assert np.all(err_zne < err_raw)

    def test_zero_noise_zne_is_exact(self):
        h = build_ising(MFI4)
        assert fold_and_extrapolate(SPEC, NoiseSpec(0.0), h) == pytest.approx(run_protocol(SPEC)[-1].energy, abs=1e-10)
