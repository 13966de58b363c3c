import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import expm_hermitian_phase, rk4_propagator
from qbundle.errors import BoundaryTime, DomainError, NonHermitianInput, StepFailure
from qbundle.generators import random_hermitian, random_smooth_hamiltonian, random_state
from qbundle.linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, Tolerance, dagger, norm, unitarity_defect
from qbundle.propagation import (
    EXACT_PIECEWISE,
    MIDPOINT_MAGNUS,
    HamiltonianFamily,
    IntegratorConfig,
    Propagator,
    hamiltonian_from_propagator,
    propagate,
    schrodinger_residual,
)


def driven_qubit():
    return HamiltonianFamily.from_terms([(lambda t: 1.0, lambda t: 0.0, SIGMA_Z),
                                         (np.sin, np.cos, SIGMA_X)])


class TestFamily:
    def test_constant_family_kind(self):
        h = HamiltonianFamily.constant(SIGMA_Z)
        assert h.kind == "constant"
        assert np.array_equal(h.derivative(0.3), np.zeros((2, 2)))

    def test_piecewise_needs_matching_counts(self):
        with pytest.raises(ValueError):
            HamiltonianFamily.piecewise_constant([0.5], [SIGMA_Z])

    def test_analytic_derivative_matches_differences(self, rng):
        h = random_smooth_hamiltonian(rng, 3)
        for t in rng.uniform(0, 2, size=5):
            fd = (h(t + 1e-4) - h(t - 1e-4)) / 2e-4
            assert norm(h.derivative(t) - fd) <= 1e-6

    def test_sum_merges_breakpoints(self):
        a = HamiltonianFamily.piecewise_constant([0.5], [SIGMA_Z, SIGMA_X])
        b = HamiltonianFamily.constant(SIGMA_Y)
        c = a + b
        assert c.kind == "piecewise-constant" and 0.5 in c.breakpoints
        assert np.allclose(c(0.7), SIGMA_X + SIGMA_Y)

    def test_domain_enforced(self):
        h = HamiltonianFamily(lambda t: SIGMA_Z, 2, domain=(0.0, 1.0))
        with pytest.raises(DomainError):
            h(2.0)
        with pytest.raises(DomainError):
            Propagator(h, 0.0, 2.0)


class TestPropagateExamples:
    def test_zero_hamiltonian(self):
        z = HamiltonianFamily.zero(3)
        assert np.allclose(propagate(z, 0.2, 1.7), np.eye(3), atol=1e-15)

    def test_sigma_z_half_period(self):
        u = propagate(HamiltonianFamily.constant(SIGMA_Z), 0.0, np.pi)
        assert norm(u + np.eye(2)) <= 1e-13

    def test_driven_qubit_matches_rk4(self):
        h = driven_qubit()
        ref = rk4_propagator(h, 0.0, 2.0, 1e-4)
        u = propagate(h, 0.0, 2.0, IntegratorConfig(max_step=1e-4))
        assert norm(u - ref) <= 1e-8

    def test_backward_propagation_is_inverse(self):
        h = driven_qubit()
        fwd, bwd = propagate(h, 0.0, 1.0), propagate(h, 1.0, 0.0)
        assert norm(bwd - dagger(fwd)) <= 1e-12

    def test_same_time_is_exact_identity(self):
        u = Propagator(driven_qubit(), 0.0, 1.0)
        assert np.array_equal(u(0.37, 0.37), np.eye(2))

    def test_outside_window(self):
        u = Propagator(driven_qubit(), 0.0, 1.0)
        with pytest.raises(DomainError):
            u(1.5, 0.0)

    def test_non_hermitian_rejected(self):
        bad = HamiltonianFamily(lambda t: np.array([[0, 1], [0, 0]], dtype=complex), 2)
        with pytest.raises(NonHermitianInput):
            Propagator(bad, 0.0, 1.0)

    def test_step_failure_on_impossible_tolerance(self):
        h = HamiltonianFamily.constant(50.0 * SIGMA_X)
        cfg = IntegratorConfig(max_step=1.0, tol=Tolerance(1e-30, 0.0))
        with pytest.raises(StepFailure):
            Propagator(h, 0.0, 1.0, cfg, scheme=MIDPOINT_MAGNUS)


class TestSchemes:
    def test_piecewise_constant_is_exact(self, rng):
        a, b = random_hermitian(rng, 3), random_hermitian(rng, 3)
        h = HamiltonianFamily.piecewise_constant([0.4], [a, b])
        u = Propagator(h, 0.0, 1.0)
        assert u.scheme == EXACT_PIECEWISE
        ref = expm_hermitian_phase(b, 0.6) @ expm_hermitian_phase(a, 0.4)
        assert norm(u(1.0, 0.0) - ref) <= 1e-13
        ref_mid = expm_hermitian_phase(b, 0.3) @ expm_hermitian_phase(a, 0.4)
        assert norm(u(0.7, 0.0) - ref_mid) <= 1e-13

    def test_exact_scheme_rejects_general_family(self):
        with pytest.raises(ValueError):
            Propagator(driven_qubit(), 0.0, 1.0, scheme=EXACT_PIECEWISE)

    def test_magnus_second_order(self):
        h = driven_qubit()
        ref = rk4_propagator(h, 0.0, 2.0, 1e-4)
        errs = [norm(Propagator(h, 0.0, 2.0, IntegratorConfig(max_step=dt))(2.0, 0.0) - ref)
                for dt in (4e-3, 2e-3, 1e-3)]
        assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5

    def test_reunitarize_option(self, rng):
        h = random_smooth_hamiltonian(rng, 3)
        u = Propagator(h, 0.0, 1.0, IntegratorConfig(max_step=1e-2, reunitarize=True))
        assert unitarity_defect(u(1.0, 0.0)) <= 1e-13

    def test_hbar_rescales_time(self):
        h = HamiltonianFamily.constant(SIGMA_Z, hbar=2.0)
        assert norm(propagate(h, 0.0, 2 * np.pi) + np.eye(2)) <= 1e-13


class TestLaws:
    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
    def test_unitarity_composition_inverse(self, seed, n):
        rng = np.random.default_rng(seed)
        u = Propagator(random_smooth_hamiltonian(rng, n), 0.0, 1.0)
        assert u.step_unitarity_defect() <= 1e-10
        t0, t1, t2 = rng.uniform(0, 1, size=3)
        assert norm(u(t2, t0) - u(t2, t1) @ u(t1, t0)) <= 1e-10
        # adjoint of the map t1 -> t2 equals its inverse, which is U(t1, t2)
        assert norm(dagger(u(t2, t1)) - np.linalg.inv(u(t2, t1))) <= 1e-10
        assert norm(np.linalg.inv(u(t2, t1)) - u(t1, t2)) <= 1e-10

    def test_grid_point_composition(self, rng):
        u = Propagator(random_smooth_hamiltonian(rng, 4), 0.0, 1.0)
        g = u.grid
        assert norm(u(g[700], g[100]) - u(g[700], g[350]) @ u(g[350], g[100])) <= 1e-10


class TestHamiltonianRecovery:
    def test_zero(self):
        u = Propagator(HamiltonianFamily.zero(2), 0.0, 1.0)
        assert norm(hamiltonian_from_propagator(u, 0.5)) <= 1e-10

    def test_sigma_z(self):
        u = Propagator(HamiltonianFamily.constant(SIGMA_Z), 0.0, 1.0)
        for t in (0.1, 0.5, 0.9):
            assert norm(hamiltonian_from_propagator(u, t) - SIGMA_Z) <= 1e-6

    def test_cos_sigma_y(self):
        h = HamiltonianFamily.from_terms([(np.cos, lambda t: -np.sin(t), SIGMA_Y)])
        u = Propagator(h, 0.0, 1.0)
        assert norm(hamiltonian_from_propagator(u, 0.5) - np.cos(0.5) * SIGMA_Y) <= 1e-6

    def test_boundary(self):
        u = Propagator(HamiltonianFamily.constant(SIGMA_Z), 0.0, 1.0)
        with pytest.raises(BoundaryTime):
            hamiltonian_from_propagator(u, 0.0)


class TestSchrodingerResidual:
    def test_evolved_state(self):
        u = Propagator(HamiltonianFamily.constant(SIGMA_Z), 0.0, 1.0)
        psi0 = np.array([0.6, 0.8j])
        r = schrodinger_residual(HamiltonianFamily.constant(SIGMA_Z), lambda t: u(t, 0.0) @ psi0,
                                 [0.2, 0.5, 0.8])
        assert r <= 1e-6

    def test_constant_state_zero_hamiltonian(self):
        assert schrodinger_residual(HamiltonianFamily.zero(2), lambda t: np.array([1.0, 0.0]),
                                    [0.1, 0.2]) == 0.0

    def test_violation_detected(self):
        psi = np.array([1, 1]) / np.sqrt(2)
        r = schrodinger_residual(HamiltonianFamily.constant(SIGMA_Z), lambda t: psi, [0.3])
        assert r == pytest.approx(1.0, abs=1e-12)

    def test_random_smooth(self, rng):
        h = random_smooth_hamiltonian(rng, 4)
        u = Propagator(h, 0.0, 1.0)
        psi0 = random_state(rng, 4)
        assert schrodinger_residual(h, lambda t: u(t, 0.0) @ psi0, np.linspace(0.1, 0.9, 5)) <= 1e-5
