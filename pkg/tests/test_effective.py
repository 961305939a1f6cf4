"""Tests for the effective SDE, its semigroup and the backward-equation check."""

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import kstest

from fastslow.effective import (
    EffectiveSDE,
    averaged_generator_on_trace,
    backward_check,
    build_effective,
    generator_on_trace,
    limit_sample,
    semigroup_mc,
    step_limit,
)
from fastslow.errors import RequiresDerivativesError
from fastslow.lie import SO, SU, AlgebraVector, GroupElement, distance_from_identity, haar_matrices, pauli, so_generator
from fastslow.multiscale import squared_distance
from fastslow.observables import constant, real_trace, trace_observable
from fastslow.poisson import AveragedModel
from fastslow.rng import RngStream

X1, X2, X3 = (AlgebraVector(SU(2), x) for x in pauli())
SO3_FIELDS = [AlgebraVector(SO(3), so_generator(3, i, j)) for i, j in [(1, 2), (1, 3), (2, 3)]]


def hopf_sde():
    return build_effective(AveragedModel.from_matrix(-0.25 * np.eye(2)), [X2, X3])


def y_coords(sde, fields):
    """Coordinates of each driving field in the slow-field basis."""
    return np.array([[f.inner(y) for y in fields] for f in sde.driving_fields]).reshape(-1, len(fields))


def random_model(rng, m, antisym=0.0):
    g = rng.normal(size=(m, m))
    k = rng.normal(size=(m, m))
    return AveragedModel.from_matrix(-(g @ g.T) + antisym * (k - k.T))


class TestBuild:
    def test_hopf_fields(self):
        sde = hopf_sde()
        c = y_coords(sde, [X2, X3])
        np.testing.assert_allclose(c.T @ c, 0.5 * np.eye(2), atol=1e-12)
        assert np.all(sde.bracket_drift.matrix == 0)
        np.testing.assert_allclose(sde.generator_matrix(), -0.5 * np.eye(2), atol=1e-12)

    def test_zero_matrix(self):
        sde = build_effective(AveragedModel.from_matrix(np.zeros((2, 2))), [X2, X3])
        assert sde.driving_fields == () and np.all(sde.bracket_drift.matrix == 0)

    def test_quadratic_form_random(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            model = random_model(rng, 3)
            sde = build_effective(model, SO3_FIELDS)
            c = y_coords(sde, SO3_FIELDS)
            np.testing.assert_allclose(c.T @ c, -2.0 * model.a_sym, atol=1e-10)

    def test_orthogonal_factor_independence(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, 3)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        rotated = AveragedModel(model.a_bar, model.a_sym, model.a_anti, model.sigma @ q, 0.0)
        c1 = y_coords(build_effective(model, SO3_FIELDS), SO3_FIELDS)
        c2 = y_coords(build_effective(rotated, SO3_FIELDS), SO3_FIELDS)
        np.testing.assert_allclose(c1.T @ c1, c2.T @ c2, atol=1e-10)

    @pytest.mark.parametrize("antisym", [0.0, 0.7])
    def test_generator_match(self, antisym):
        rng = np.random.default_rng(2)
        model = random_model(rng, 3, antisym)
        sde = build_effective(model, SO3_FIELDS)
        g = haar_matrices(SO(3), RngStream(2), 20)
        f = trace_observable(rng.normal(size=(3, 3)))
        lhs = generator_on_trace(f, sde, g)
        rhs = averaged_generator_on_trace(f, model.a_bar, SO3_FIELDS, g)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestStepping:
    def test_no_fields(self):
        sde = EffectiveSDE(SU(2), (), AlgebraVector.zero(SU(2)))
        y = GroupElement.identity(SU(2))
        assert step_limit(y, sde, 0.1, RngStream(0)).allclose(y, 0.0)

    def test_unitarity(self):
        y = GroupElement.identity(SU(2))
        sde = hopf_sde()
        rng = RngStream(1)
        for _ in range(200):
            y = step_limit(y, sde, 0.05, rng)
        np.testing.assert_allclose(y.matrix.conj().T @ y.matrix, np.eye(2), atol=1e-12)

    def test_scalar_brownian_oracle(self):
        field = X2 * 0.8
        sde = EffectiveSDE(SU(2), (field,), AlgebraVector.zero(SU(2)))
        t = 0.5
        ens = limit_sample(sde, np.eye(2, dtype=complex), t, 0.05, 4000, 3)
        d = distance_from_identity(SU(2), ens.states)
        scale = np.sqrt(t) * field.norm()
        assert kstest(d / scale, "halfnorm").pvalue > 0.01


class TestSemigroup:
    def test_zero_horizon(self):
        y0 = GroupElement(SU(2), expm(0.3 * X2.matrix))
        f = real_trace(2)
        est = semigroup_mc(f, y0, hopf_sde(), 0.0, 0.1, 10)
        assert est.estimate == pytest.approx(f(y0)) and est.std_error == 0.0

    def test_constant(self):
        est = semigroup_mc(constant(1.0), GroupElement.identity(SU(2)), hopf_sde(), 1.0, 0.1, 500)
        assert est.estimate == 1.0

    def test_exact_trace_semigroup(self):
        sde = hopf_sde()
        y0 = expm(0.7 * X3.matrix)
        f = real_trace(2)
        est = semigroup_mc(f, y0, sde, 1.0, 0.02, 20_000, master_seed=4)
        exact = np.real(np.trace(y0 @ expm(sde.generator_matrix())))
        assert abs(est.estimate - exact) <= 3 * est.std_error + 1e-3

    def test_step_halving(self):
        sde = hopf_sde()
        f = real_trace(2)
        a = semigroup_mc(f, np.eye(2, dtype=complex), sde, 1.0, 0.1, 20_000, master_seed=5)
        b = semigroup_mc(f, np.eye(2, dtype=complex), sde, 1.0, 0.05, 20_000, master_seed=6)
        assert abs(a.estimate - b.estimate) <= 3 * np.hypot(a.std_error, b.std_error)

    def test_monotone(self):
        sde = hopf_sde()
        f = real_trace(2)
        g = trace_observable(np.eye(2), 1.0)
        a = semigroup_mc(f, np.eye(2, dtype=complex), sde, 0.5, 0.05, 2000, master_seed=7)
        b = semigroup_mc(g, np.eye(2, dtype=complex), sde, 0.5, 0.05, 2000, master_seed=7)
        assert a.estimate <= b.estimate


class TestBackward:
    def test_constant(self):
        rep = backward_check(constant(2.0), hopf_sde(), 0.5, 0.05, 100)
        assert rep.lhs_slope == 0.0 and rep.rhs_value == 0.0 and rep.passed

    def test_drift_only(self):
        d = AlgebraVector(SU(2), 0.3 * X1.matrix)
        sde = EffectiveSDE(SU(2), (), d)
        rep = backward_check(real_trace(2), sde, 1.0, 0.05, 10, y0=expm(0.5 * X2.matrix))
        assert rep.passed
        assert rep.lhs_slope == pytest.approx(rep.rhs_value, abs=1e-3)

    def test_hopf_small_budget(self):
        rep = backward_check(real_trace(2), hopf_sde(), 1.0, 0.05, 5000, y0=expm(0.4 * X2.matrix), master_seed=8)
        assert rep.passed

    def test_requires_derivatives(self):
        with pytest.raises(RequiresDerivativesError):
            backward_check(squared_distance(SU(2)), hopf_sde(), 1.0, 0.05, 10)
