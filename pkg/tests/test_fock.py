import numpy as np
import pytest
from scipy.linalg import expm

from prhtomo.errors import NumericalInvariantError
from prhtomo.fock import (
    DensityMatrix,
    FockVector,
    TwoModeMixture,
    TwoModeState,
    beamsplitter,
    condition_oracle,
    loss_channel,
    quadrature_pdf,
    rotate_state,
    squeezed_vacuum,
    two_mode_with_vacuum,
)


def fock_ket(n, dim):
    amp = np.zeros(dim, dtype=complex)
    amp[n] = 1.0
    return FockVector(amp)


class TestSqueezedVacuum:
    def test_zero_squeezing_is_vacuum(self):
        state = squeezed_vacuum(0.0, 10)
        assert state.amplitudes[0] == 1.0
        assert np.all(state.amplitudes[1:] == 0.0)

    def test_two_photon_ratio(self):
        state = squeezed_vacuum(0.3, 30)
        ratio = state.amplitudes[2] / state.amplitudes[0]
        assert ratio.real == pytest.approx(-np.tanh(0.3) / np.sqrt(2), abs=1e-14)

    def test_odd_entries_vanish(self):
        state = squeezed_vacuum(0.5, 30)
        assert np.all(state.amplitudes[1::2] == 0.0)

    def test_normalization(self):
        state = squeezed_vacuum(0.3, 30)
        assert np.sum(np.abs(state.amplitudes) ** 2) == pytest.approx(1.0, abs=1e-10)

    def test_against_squeeze_operator_exponential(self):
        # independent route: expm of the squeeze generator on vacuum
        r, dim = 0.4, 41
        n = np.arange(1, dim)
        a = np.zeros((dim, dim))
        a[n - 1, n] = np.sqrt(n)
        gen = 0.5 * r * (a @ a - a.T @ a.T)
        ref = expm(gen) @ np.eye(dim)[:, 0]
        state = squeezed_vacuum(r, 30)
        assert np.allclose(state.amplitudes, ref[:31], atol=1e-10)

    def test_truncation_leakage_raises(self):
        with pytest.raises(NumericalInvariantError):
            squeezed_vacuum(1.5, 6)


class TestBeamsplitter:
    def test_two_photon_splitting_matches_reference(self):
        # |2,0> -> (1-eta^2)|2,0> + sqrt(2 eta^2(1-eta^2))|1,1> + eta^2|0,2>
        eta = np.sqrt(0.9)
        out = beamsplitter(fock_ket(2, 11), eta).amplitudes
        assert out[2, 0] == pytest.approx(1 - eta**2, abs=1e-12)
        assert out[1, 1] == pytest.approx(np.sqrt(2 * eta**2 * (1 - eta**2)), abs=1e-12)
        assert out[0, 2] == pytest.approx(eta**2, abs=1e-12)

    def test_full_transmission_sends_everything_to_mode_b(self):
        state = squeezed_vacuum(0.3, 16)
        out = beamsplitter(state, 1.0).amplitudes
        assert np.allclose(out[0, :], state.amplitudes)
        assert np.allclose(out[1:, :], 0.0)

    def test_balanced_single_photon(self):
        out = beamsplitter(fock_ket(1, 5), 1 / np.sqrt(2)).amplitudes
        assert out[1, 0] == pytest.approx(1 / np.sqrt(2), abs=1e-12)
        assert out[0, 1] == pytest.approx(1 / np.sqrt(2), abs=1e-12)

    def test_inverse_recovers_input(self):
        state = two_mode_with_vacuum(squeezed_vacuum(0.4, 24))
        eta = 0.8
        once = beamsplitter(state, eta)
        # the symmetric convention is an involution: applying it twice is identity
        back = beamsplitter(once, eta)
        assert np.max(np.abs(back.amplitudes - state.amplitudes)) < 1e-10

    def test_norm_preserved(self):
        state = squeezed_vacuum(0.5, 30)
        out = beamsplitter(state, 0.7)
        assert out.norm() == pytest.approx(state.norm(), abs=1e-10)


class TestLossChannel:
    def test_identity_at_unit_transmissivity(self):
        rho = squeezed_vacuum(0.3, 16).to_density()
        out = loss_channel(rho, 1.0)
        assert np.allclose(out.matrix, rho.matrix, atol=1e-14)

    def test_full_loss_gives_vacuum(self):
        rho = fock_ket(3, 8).to_density()
        out = loss_channel(rho, 0.0)
        assert out.matrix[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert np.sum(np.abs(out.matrix)) == pytest.approx(1.0, abs=1e-12)

    def test_single_photon_kraus(self):
        out = loss_channel(fock_ket(1, 4).to_density(), 0.9)
        assert out.matrix[1, 1] == pytest.approx(0.9, abs=1e-14)
        assert out.matrix[0, 0] == pytest.approx(0.1, abs=1e-14)

    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.98])
    def test_trace_preserved(self, lam):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        rho = DensityMatrix(m @ m.conj().T)
        rho = rho.normalized()
        assert loss_channel(rho, lam).trace() == pytest.approx(1.0, abs=1e-10)


class TestConditionOracle:
    def setup_method(self):
        # normalized |0> - gamma |2> through the tap beamsplitter
        self.gamma = 0.05
        self.eta2 = 0.9
        amp = np.zeros(7, dtype=complex)
        amp[0], amp[2] = 1.0, -self.gamma
        amp /= np.linalg.norm(amp)
        self.scale = 1.0 / (1.0 + self.gamma**2)  # normalization of |0> - gamma|2>
        self.state = beamsplitter(FockVector(amp), np.sqrt(self.eta2))

    def test_number_conditioning_reproduces_weak_squeezing_mixture(self):
        # weights 2 eta^2 (1-eta^2) gamma^2 on |1><1| and 2 (1-eta^2)^2 gamma^2 on |0><0|
        raw, _ = condition_oracle(self.state, np.arange(7, dtype=float))
        g2 = self.gamma**2 * self.scale
        expected_1 = 2 * self.eta2 * (1 - self.eta2) * g2
        expected_0 = 2 * (1 - self.eta2) ** 2 * g2
        assert raw.matrix[1, 1].real == pytest.approx(expected_1, rel=1e-12)
        assert raw.matrix[0, 0].real == pytest.approx(expected_0, rel=1e-12)
        off = raw.matrix - np.diag(np.diag(raw.matrix))
        assert np.max(np.abs(off)) < 1e-15

    def test_two_photon_removal_leaves_single_photon_term(self):
        # f(n) = n(n-2): only |1><1| survives, magnitude 2 eta^2(1-eta^2) gamma^2;
        # the sign is f(1) = -1 (the published expression prints the magnitude)
        n = np.arange(7, dtype=float)
        raw, norm = condition_oracle(self.state, n * (n - 2))
        g2 = self.gamma**2 * self.scale
        expected = 2 * self.eta2 * (1 - self.eta2) * g2
        assert abs(raw.matrix[1, 1]) == pytest.approx(expected, rel=1e-12)
        assert raw.matrix[1, 1].real < 0
        rest = raw.matrix.copy()
        rest[1, 1] = 0.0
        assert np.max(np.abs(rest)) < 1e-15
        assert norm == pytest.approx(-expected, rel=1e-12)

    def test_unit_weights_give_reduced_state(self):
        raw, norm = condition_oracle(self.state, np.ones(7))
        reduced = TwoModeMixture.from_pure(self.state).reduced_b()
        assert np.allclose(raw.matrix, reduced.matrix, atol=1e-14)
        assert norm == pytest.approx(1.0, abs=1e-12)

    def test_vacuum_number_conditioning_is_zero(self):
        vac = two_mode_with_vacuum(fock_ket(0, 6))
        with pytest.raises(NumericalInvariantError):
            condition_oracle(vac, np.arange(6, dtype=float))


class TestQuadraturePdf:
    def test_vacuum(self):
        grid = np.linspace(-6, 6, 401)
        pdf = quadrature_pdf(fock_ket(0, 5).to_density(), 0.3, grid)
        assert np.allclose(pdf, np.exp(-grid**2 / 2) / np.sqrt(2 * np.pi), atol=1e-12)

    def test_single_photon(self):
        grid = np.linspace(-6, 6, 401)
        pdf = quadrature_pdf(fock_ket(1, 5).to_density(), 1.1, grid)
        ref = grid**2 * np.exp(-grid**2 / 2) / np.sqrt(2 * np.pi)
        assert np.allclose(pdf, ref, atol=1e-12)

    def test_squeezed_variance(self):
        grid = np.linspace(-10, 10, 2001)
        rho = squeezed_vacuum(0.4, 30).to_density()
        pdf = quadrature_pdf(rho, 0.0, grid)
        var = np.trapezoid(grid**2 * pdf, grid)
        assert var == pytest.approx(np.exp(-0.8), abs=1e-8)

    def test_integrates_to_trace(self):
        grid = np.linspace(-10, 10, 2001)
        rho = squeezed_vacuum(0.5, 30).to_density()
        pdf = quadrature_pdf(rho, 0.7, grid)
        assert np.trapezoid(pdf, grid) == pytest.approx(rho.trace(), abs=1e-6)

    def test_phase_covariance(self):
        grid = np.linspace(-8, 8, 801)
        rho = squeezed_vacuum(0.3, 20).to_density()
        rotated = rotate_state(rho, 0.6)
        assert np.allclose(
            quadrature_pdf(rotated, 0.2, grid),
            quadrature_pdf(rho, 0.8, grid),
            atol=1e-12,
        )

    def test_nonnegative_for_physical_state(self):
        grid = np.linspace(-8, 8, 801)
        rho = loss_channel(squeezed_vacuum(0.4, 25).to_density(), 0.9)
        assert quadrature_pdf(rho, 0.5, grid).min() > -1e-12


class TestDensityMatrixSerialization:
    def test_json_round_trip(self):
        rho = loss_channel(squeezed_vacuum(0.3, 16).to_density(), 0.95)
        doc = rho.to_json_dict()
        assert doc["dim"] == 17
        assert doc["convention"] == "x-var-1"
        back = DensityMatrix.from_json_dict(doc)
        assert np.allclose(back.matrix, rho.matrix, atol=1e-15)

    def test_rejects_non_hermitian(self):
        with pytest.raises(NumericalInvariantError):
            DensityMatrix(np.array([[0.0, 1.0], [0.0, 1.0]]))

    def test_physical_validation(self):
        good = fock_ket(0, 3).to_density()
        good.validate_physical()
        with pytest.raises(NumericalInvariantError):
            DensityMatrix(np.diag([1.5, -0.5])).validate_physical()


class TestTwoModeMixtureMoments:
    def test_pure_squeezed_moments(self):
        r = 0.3
        mix = TwoModeMixture.from_pure(two_mode_with_vacuum(squeezed_vacuum(r, 30)))
        va, vb, cov = mix.second_moments(0.0, 0.0)
        # without a beamsplitter, mode a carries the squeezed input
        assert va == pytest.approx(np.exp(-2 * r), abs=1e-9)
        assert vb == pytest.approx(1.0, abs=1e-12)
        assert cov == pytest.approx(0.0, abs=1e-12)

    def test_loss_shrinks_moments(self):
        mix = TwoModeMixture.from_pure(two_mode_with_vacuum(squeezed_vacuum(0.5, 30)))
        lossy = mix.apply_loss("a", 0.8)
        va, _, _ = lossy.second_moments(np.pi / 2, 0.0)
        assert va == pytest.approx(0.8 * np.exp(1.0) + 0.2, abs=1e-8)
