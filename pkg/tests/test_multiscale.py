"""Tests for the coupled fast-slow simulator, the Ito identity and the moment probe."""

import numpy as np
import pytest

from fastslow.effective import semigroup_mc
from fastslow.errors import NotCenteredError, RequiresDerivativesError
from fastslow.fast import FastSpec
from fastslow.lie import SU, AlgebraVector, exp_matrices, pauli
from fastslow.multiscale import (
    MultiscaleSystem,
    ito_reduction_check,
    simulate_pair,
    slow_marginal,
    squared_distance,
    uniform_moment_probe,
)
from fastslow.observables import Observable, constant, real_trace
from fastslow.presets import preset_hopf
from fastslow.rng import RngStream

X1, X2, X3 = (AlgebraVector(SU(2), x) for x in pauli())


def const_alpha(c, name):
    return Observable(lambda z: np.full(np.shape(z)[:-2], c), abs(c), name)


@pytest.fixture(scope="module")
def hopf():
    return preset_hopf()


class TestSystem:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            MultiscaleSystem(SU(2), [X2, X3], FastSpec(SU(2), (X1,)), [const_alpha(0.0, "a")])

    def test_uncentred_rejected(self):
        sys = MultiscaleSystem(SU(2), [X2], FastSpec(SU(2), (X1,)), [const_alpha(1.0, "one")])
        with pytest.raises(NotCenteredError):
            sys.validate()

    def test_hopf_validates(self, hopf):
        rep = hopf.system.validate()
        assert rep["hormander"].satisfied and rep["hormander"].generated_dim == 1


class TestSimulatePair:
    def test_zero_alpha_freezes_slow_state(self):
        fast = FastSpec(SU(2), (X1,), epsilon=0.2)
        sys = MultiscaleSystem(SU(2), [X2], fast, [const_alpha(0.0, "zero")])
        path = simulate_pair(sys, 1.0, 0.1, RngStream(0), record_grid=[0.5, 1.0])
        for g in path.states:
            np.testing.assert_array_equal(g.matrix, np.eye(2))
        assert list(path.times) == [0.5, 1.0]

    def test_frozen_fast_variable(self):
        z0 = exp_matrices(SU(2), 0.4 * X1.matrix)
        fast = FastSpec(SU(2), (), epsilon=0.5)
        alphas = [Observable(lambda z: np.real(z[..., 0, 0]), 1.0, "re"), Observable(lambda z: np.imag(z[..., 0, 0]), 1.0, "im")]
        sys = MultiscaleSystem(SU(2), [X2, X3], fast, alphas, z0=z0)
        t = 0.3
        path = simulate_pair(sys, t, 0.01, RngStream(0))
        a = np.array([np.cos(0.4), np.sin(0.4)])
        ref = exp_matrices(SU(2), (t / 0.5) * (a[0] * X2.matrix + a[1] * X3.matrix))
        np.testing.assert_allclose(path.states[-1].matrix, ref, atol=1e-6)

    def test_deterministic_scheme_is_first_order(self):
        # fast motion is the deterministic rotation z_t = exp(t X1), so the slow
        # equation is a time-dependent ODE integrated by left-endpoint Lie-Euler
        fast = FastSpec(SU(2), (), drift_field=X1, epsilon=1.0)
        alphas = [Observable(lambda z: np.real(z[..., 0, 0] ** 2), 1.0, "c"),
                  Observable(lambda z: np.imag(z[..., 0, 0] ** 2), 1.0, "s")]
        sys = MultiscaleSystem(SU(2), [X2, X3], fast, alphas)
        ref = simulate_pair(sys, 2.0, 0.0005, RngStream(0)).states[-1].matrix
        thetas = np.array([0.4, 0.2, 0.1, 0.05])
        errs = [np.abs(simulate_pair(sys, 2.0, th, RngStream(0)).states[-1].matrix - ref).max() for th in thetas]
        slope = np.polyfit(np.log(thetas), np.log(errs), 1)[0]
        assert 0.8 <= slope <= 1.2

    def test_single_path_marginal_matches_simulate_pair(self, hopf):
        sys = hopf.system.with_epsilon(0.2)
        ens = slow_marginal(sys, 0.5, 1, 0.1, master_seed=9)
        path = simulate_pair(sys, 0.5, 0.1, RngStream(9, 0))
        np.testing.assert_array_equal(ens.states[0], path.states[-1].matrix)

    def test_states_stay_in_group(self, hopf):
        ens = slow_marginal(hopf.system.with_epsilon(0.1), 1.0, 64, 0.1)
        for g in ens.states:
            np.testing.assert_allclose(g.conj().T @ g, np.eye(2), atol=1e-12)

    def test_record_grid_off_grid(self, hopf):
        with pytest.raises(ValueError):
            simulate_pair(hopf.system.with_epsilon(0.2), 1.0, 0.1, RngStream(0), record_grid=[0.1234567])

    def test_bad_theta(self, hopf):
        with pytest.raises(ValueError):
            simulate_pair(hopf.system, 1.0, 0.6, RngStream(0))


class TestMarginal:
    def test_ci_scaling(self, hopf):
        sys = hopf.system.with_epsilon(0.2)
        f = real_trace(2)
        _, s1 = slow_marginal(sys, 0.5, 1000, 0.2, master_seed=1).mean(f)
        _, s4 = slow_marginal(sys, 0.5, 4000, 0.2, master_seed=2).mean(f)
        assert 1.8 <= s1 / s4 <= 2.2

    def test_theta_halving(self, hopf):
        sys = hopf.system.with_epsilon(0.2)
        f = real_trace(2)
        m1, s1 = slow_marginal(sys, 1.0, 4000, 0.1, master_seed=3).mean(f)
        m2, s2 = slow_marginal(sys, 1.0, 4000, 0.05, master_seed=3).mean(f)
        assert abs(m1 - m2) <= 1.96 * np.hypot(s1, s2)

    def test_consistent_with_limit_semigroup(self, hopf):
        sys = hopf.system.with_epsilon(0.05)
        f = real_trace(2)
        m, s = slow_marginal(sys, 1.0, 4096, 0.1, master_seed=4).mean(f)
        lim = semigroup_mc(f, sys.y0, hopf.effective(), 1.0, 0.01, 20_000, master_seed=4, first_stream=1 << 40)
        assert abs(m - lim.estimate) <= 3 * np.hypot(s, lim.std_error)


class TestIdentity:
    def test_constant_observable(self, hopf):
        rep = ito_reduction_check(hopf.system.with_epsilon(0.2), constant(3.0), 0.2, 200, 0.1)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed

    def test_linearity(self, hopf):
        sys = hopf.system.with_epsilon(0.2)
        f = real_trace(2)
        a = ito_reduction_check(sys, f, 0.2, 300, 0.1, master_seed=5)
        b = ito_reduction_check(sys, f.scaled(2.0), 0.2, 300, 0.1, master_seed=5)
        assert b.lhs == pytest.approx(2 * a.lhs, rel=1e-12)
        assert b.rhs == pytest.approx(2 * a.rhs, rel=1e-12)

    def test_requires_derivatives(self, hopf):
        with pytest.raises(RequiresDerivativesError):
            ito_reduction_check(hopf.system, squared_distance(SU(2)), 0.2, 10)

    def test_small_budget_pass(self, hopf):
        rep = ito_reduction_check(hopf.system.with_epsilon(0.2), real_trace(2), 0.4, 4000, 0.05, master_seed=6)
        assert rep.passed


class TestMomentProbe:
    def test_zero_exponent(self, hopf):
        probe = uniform_moment_probe(hopf.system, p=0.0, eps_grid=(0.2, 0.1), T=0.2, n_paths=50)
        assert probe.moments == (1.0, 1.0) and probe.ratio == 1.0

    def test_bounded_by_diameter(self, hopf):
        probe = uniform_moment_probe(hopf.system, p=1.5, eps_grid=(0.2, 0.1), T=0.5, n_paths=200)
        assert all(m <= np.pi ** 3 for m in probe.moments)
