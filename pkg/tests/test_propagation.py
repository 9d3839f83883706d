import numpy as np
import pytest
import scipy.linalg

from quditpulse import (
    ControlWaveform,
    FieldTrajectory,
    PhysicalParams,
    propagate,
    step_propagator,
    step_propagator_with_derivatives,
    total_unitary,
    unitarity_defect,
)
from quditpulse.errors import NumericalError

from conftest import random_hermitian

TWO_PI = 2 * np.pi


def random_waveform(n, dt, rng, label=""):
    return ControlWaveform.from_vector(dt, rng.uniform(0, TWO_PI, 3 * n), label)


class TestControlWaveform:
    def test_counts_and_times(self, rng):
        wf = random_waveform(150, 4e-6, rng)
        assert wf.n_steps == 150
        assert wf.n_phases == 450
        assert wf.total_time == 150 * 4e-6

    def test_vector_round_trip(self, rng):
        vec = rng.uniform(-5, 12, 30)
        wf = ControlWaveform.from_vector(2e-6, vec)
        assert np.array_equal(wf.to_vector(), vec)
        assert wf.step(0).phi_x == vec[0]
        assert wf.step(3).phi_uw == vec[23]

    def test_phases_property(self, rng):
        wf = random_waveform(4, 1e-6, rng)
        steps = wf.phases
        assert len(steps) == 4
        assert steps[2].phi_y == wf.phi_y[2]

    def test_wrapped(self):
        wf = ControlWaveform(1e-6, [7.0], [-1.0], [0.5])
        w = wf.wrapped()
        assert 0 <= w.phi_x[0] < TWO_PI
        assert w.phi_y[0] == pytest.approx(TWO_PI - 1.0)
        assert w.phi_uw[0] == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            ControlWaveform(0.0, [1.0], [1.0], [1.0])
        with pytest.raises(ValueError):
            ControlWaveform(1e-6, [], [], [])
        with pytest.raises(ValueError):
            ControlWaveform(1e-6, [1.0, 2.0], [1.0], [1.0])
        with pytest.raises(ValueError):
            ControlWaveform(1e-6, [np.inf], [0.0], [0.0])


class TestFieldTrajectory:
    def test_static_requires_equal_endpoints(self):
        with pytest.raises(ValueError):
            FieldTrajectory("static", 1.0, 2.0)

    def test_midpoint_sampling(self):
        traj = FieldTrajectory.linear_ramp(-10.0, 10.0)
        offs = traj.offsets(4)
        assert np.allclose(offs, [-7.5, -2.5, 2.5, 7.5])

    def test_static_offsets_constant(self):
        offs = FieldTrajectory.static(3.0).offsets(7)
        assert np.all(offs == 3.0)

    def test_degenerate_ramp_equals_static(self):
        a = FieldTrajectory.linear_ramp(2.0, 2.0).offsets(9)
        b = FieldTrajectory.static(2.0).offsets(9)
        assert np.array_equal(a, b)


class TestStepPropagator:
    def test_zero_hamiltonian(self):
        u = step_propagator(np.zeros((6, 6), dtype=complex), 1e-6)
        assert np.abs(u - np.eye(6)).max() < 1e-15

    def test_diagonal_case(self):
        omega = np.array([1.0, -2.0, 0.5, 7.0]) * 1e5
        u = step_propagator(np.diag(omega).astype(complex), 4e-6)
        assert np.abs(u - np.diag(np.exp(-1j * omega * 4e-6))).max() < 1e-14

    def test_against_pade_oracle(self, rng):
        # oracle: scipy's scaling-and-squaring Pade expm
        for _ in range(10):
            h = random_hermitian(16, rng) * 1e5
            dt = 4e-6
            u = step_propagator(h, dt)
            assert np.abs(u - scipy.linalg.expm(-1j * h * dt)).max() < 1e-10

    def test_negative_dt_is_adjoint(self, rng):
        h = random_hermitian(8, rng) * 1e5
        u = step_propagator(h, 3e-6)
        assert np.abs(step_propagator(h, -3e-6) - u.conj().T).max() < 1e-12

    def test_nonfinite_dt_rejected(self, rng):
        with pytest.raises(ValueError):
            step_propagator(random_hermitian(4, rng), np.nan)


class TestStepDerivatives:
    def test_zero_dh(self, rng):
        h = random_hermitian(8, rng) * 1e5
        _, (du,) = step_propagator_with_derivatives(h, [np.zeros((8, 8))], 1e-6)
        assert np.abs(du).max() == 0.0

    def test_zero_h_first_order_exact(self, rng):
        dh = random_hermitian(8, rng)
        dt = 2e-6
        u, (du,) = step_propagator_with_derivatives(np.zeros((8, 8)), [dh], dt)
        assert np.abs(u - np.eye(8)).max() < 1e-14
        assert np.abs(du - (-1j * dt * dh)).max() < 1e-14

    @pytest.mark.parametrize("trial", range(10))
    def test_finite_difference_oracle(self, trial):
        rng = np.random.default_rng(300 + trial)
        d = 16
        h = random_hermitian(d, rng) * 1e5
        dh = random_hermitian(d, rng) * 1e4
        dt = rng.uniform(1e-6, 8e-6)
        _, (du,) = step_propagator_with_derivatives(h, [dh], dt)
        eps = 1e-6
        fd = (scipy.linalg.expm(-1j * (h + eps * dh) * dt)
              - scipy.linalg.expm(-1j * (h - eps * dh) * dt)) / (2 * eps)
        assert np.abs(du - fd).max() / np.abs(fd).max() < 1e-6

    def test_near_degenerate_spectrum(self, rng):
        # eigenvalues split below the cancellation threshold
        d = 6
        q = np.linalg.qr(rng.standard_normal((d, d))
                         + 1j * rng.standard_normal((d, d)))[0]
        lam = np.array([1.0, 1.0 + 1e-11, 2.0, 2.0, 3.0, -1.0]) * 1e5
        h = (q * lam) @ q.conj().T
        h = (h + h.conj().T) / 2
        dh = random_hermitian(d, rng) * 1e4
        dt = 4e-6
        _, (du,) = step_propagator_with_derivatives(h, [dh], dt)
        eps = 1e-6
        fd = (scipy.linalg.expm(-1j * (h + eps * dh) * dt)
              - scipy.linalg.expm(-1j * (h - eps * dh) * dt)) / (2 * eps)
        assert np.abs(du - fd).max() / np.abs(fd).max() < 1e-6

    def test_multiple_dhs(self, rng):
        h = random_hermitian(5, rng)
        dhs = [random_hermitian(5, rng) for _ in range(3)]
        u, dus = step_propagator_with_derivatives(h, dhs, 1e-6)
        assert len(dus) == 3
        assert unitarity_defect(u) < 1e-12


class TestPropagate:
    def test_single_step_no_drive_identity(self, cs_params):
        params = PhysicalParams(rf_rabi_x=0, rf_rabi_y=0, uw_rabi=0,
                                manifold=cs_params.manifold)
        wf = ControlWaveform(4e-6, [0.0], [0.0], [0.0])
        rec = propagate(wf, params)
        assert np.abs(rec.total - np.eye(16)).max() < 1e-14

    def test_semigroup_on_identical_steps(self, cs_params, rng):
        phases = rng.uniform(0, TWO_PI, 3)
        wf1 = ControlWaveform(4e-6, phases[:1], phases[1:2], phases[2:])
        wf2 = ControlWaveform(4e-6, np.repeat(phases[0], 2),
                              np.repeat(phases[1], 2), np.repeat(phases[2], 2))
        u1 = propagate(wf1, cs_params).total
        u2 = propagate(wf2, cs_params).total
        assert np.abs(u2 - u1 @ u1).max() < 1e-12

    def test_unitarity_audit(self, cs_params, rng):
        for _ in range(5):
            wf = random_waveform(50, 4e-6, rng)
            traj = FieldTrajectory.linear_ramp(rng.normal() * 1e3, rng.normal() * 1e3)
            rec = propagate(wf, cs_params, traj)
            assert unitarity_defect(rec.total) < 1e-9
            for u in rec.step_unitaries[::10]:
                assert unitarity_defect(u) < 1e-10

    def test_partial_products_unitary_long(self, toy_params, rng):
        wf = random_waveform(400, 4e-6, rng)
        rec = propagate(wf, toy_params)
        for k in (0, 99, 199, 399):
            assert unitarity_defect(rec.forward_partials[k]) < 1e-9

    def test_forward_partials_consistent(self, toy_params, rng):
        wf = random_waveform(7, 4e-6, rng)
        rec = propagate(wf, toy_params)
        acc = np.eye(8, dtype=complex)
        for k in range(7):
            acc = rec.step_unitaries[k] @ acc
            assert np.abs(rec.forward_partials[k] - acc).max() < 1e-12
        assert np.array_equal(rec.total, rec.forward_partials[-1])

    def test_concatenation(self, toy_params, rng):
        v1 = rng.uniform(0, TWO_PI, 3 * 6)
        v2 = rng.uniform(0, TWO_PI, 3 * 4)
        dt = 4e-6
        w1 = ControlWaveform.from_vector(dt, v1)
        w2 = ControlWaveform.from_vector(dt, v2)
        joined = ControlWaveform(
            dt,
            np.concatenate([w1.phi_x, w2.phi_x]),
            np.concatenate([w1.phi_y, w2.phi_y]),
            np.concatenate([w1.phi_uw, w2.phi_uw]),
        )
        field = FieldTrajectory.static(500.0)
        u_joined = propagate(joined, toy_params, field).total
        u_split = propagate(w2, toy_params, field).total @ propagate(w1, toy_params, field).total
        assert np.abs(u_joined - u_split).max() < 1e-10

    def test_stepwise_time_reversal(self, toy_params, rng):
        wf = random_waveform(5, 4e-6, rng)
        rec = propagate(wf, toy_params)
        from quditpulse.spin_model import build_step_hamiltonian
        for k in range(5):
            h = np.asarray(
                build_step_hamiltonian(toy_params, wf.step(k), 0.0)
            )
            u_back = step_propagator(h, -wf.dt)
            assert np.abs(u_back - rec.step_unitaries[k].conj().T).max() < 1e-12

    def test_total_unitary_matches_propagate(self, cs_params, rng):
        wf = random_waveform(20, 4e-6, rng)
        traj = FieldTrajectory.linear_ramp(-800.0, 1200.0)
        assert np.array_equal(
            total_unitary(wf, cs_params, traj), propagate(wf, cs_params, traj).total
        )

    def test_eigensystem_caching(self, toy_params, rng):
        wf = random_waveform(4, 4e-6, rng)
        rec = propagate(wf, toy_params, keep_eigensystems=True)
        assert rec.eigenvalues.shape == (4, 8)
        recon = (rec.eigenvectors[1] * np.exp(-1j * rec.eigenvalues[1] * wf.dt)) \
            @ rec.eigenvectors[1].conj().T
        assert np.abs(recon - rec.step_unitaries[1]).max() < 1e-12
        assert propagate(wf, toy_params).eigenvalues is None
