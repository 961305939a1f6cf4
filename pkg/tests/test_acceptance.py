"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Budgets (path counts, horizons, tolerances) are the ones the criteria state;
the runtime ceilings are asserted alongside the numerical checks.
"""

import itertools
import time

import numpy as np
import pytest

from fastslow.cli import main
from fastslow.effective import backward_check
from fastslow.ensemble import Ensemble
from fastslow.fast import FastSpec, hormander_check, lln_error, simulate_fast_batch
from fastslow.lie import (
    SO,
    SU,
    AlgebraVector,
    bracket,
    exp_map,
    haar_matrices,
    log_map,
    pairwise_distances,
    pauli,
    so_generator,
)
from fastslow.metrics import rate_fit, wasserstein1, wasserstein_convergence, weak_error
from fastslow.multiscale import ito_reduction_check, uniform_moment_probe
from fastslow.observables import real_trace
from fastslow.poisson import solve_poisson_mc, solve_poisson_spectral, validation_points
from fastslow.presets import get_preset
from fastslow.rng import RngStream

pytestmark = pytest.mark.slow

GROUPS = [SU(2), SO(3), SO(4), SO(5)]
EPS = (0.2, 0.1, 0.05)


@pytest.fixture(scope="module")
def hopf():
    return get_preset("hopf", 0.1)


def random_algebra(spec, rng, radius):
    c = rng.normal(size=spec.dim)
    r = radius * rng.uniform()
    return AlgebraVector.from_coords(spec, r * c / np.linalg.norm(c))


class TestAcceptance:
    def test_01_geometry(self, verdict):
        start = time.perf_counter()
        rng = np.random.default_rng(1)
        roundtrip = jacobi = 0.0
        for spec in GROUPS:
            for _ in range(1000):
                # stay inside the injectivity radius, where log inverts exp
                a = random_algebra(spec, rng, 0.9 * np.pi)
                roundtrip = max(roundtrip, np.abs(log_map(exp_map(a)).coordinates() - a.coordinates()).max())
                x, y, z = (random_algebra(spec, rng, 2.0) for _ in range(3))
                jac = bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y))
                jacobi = max(jacobi, jac.norm())
        drift = 0.0
        for name in ("hopf", "so4_hypoelliptic"):
            fast = get_preset(name, 1.0).system.fast
            n = fast.group.n
            z = simulate_fast_batch(fast.group.identity()[None], fast, 1e6 * 0.05, 0.05, RngStream(11))
            drift = max(drift, np.abs(np.conj(z[0].T) @ z[0] - np.eye(n)).max(), abs(np.linalg.det(z[0]) - 1))
        elapsed = time.perf_counter() - start
        ok = roundtrip <= 1e-10 and drift <= 1e-10 and jacobi <= 1e-10 and elapsed < 30
        verdict(1, ok, f"roundtrip {roundtrip:.2e}, drift after 1e6 steps {drift:.2e}, "
                       f"jacobi {jacobi:.2e}, {elapsed:.1f} s")
        assert ok

    def test_02_hormander(self, verdict):
        start = time.perf_counter()
        _, x2, x3 = (AlgebraVector(SU(2), x) for x in pauli())
        a12, a13 = (AlgebraVector(SO(3), so_generator(3, 1, j)) for j in (2, 3))
        cases = [(hormander_check([x2, x3]), True, 3),
                 (hormander_check([a12]), False, 1),
                 (hormander_check([a12, a13]), True, 3)]
        elapsed = time.perf_counter() - start
        got = [(r.satisfied, r.generated_dim) for r, _, _ in cases]
        ok = got == [(s, d) for _, s, d in cases] and elapsed < 1
        verdict(2, ok, f"(satisfied, dim) = {got}, {elapsed:.2f} s")
        assert ok

    def test_03_poisson(self, verdict, hopf):
        start = time.perf_counter()
        fast = hopf.system.fast.with_epsilon(1.0)
        alpha = hopf.system.alphas[0]
        pts = validation_points(fast, 16)
        spectral = solve_poisson_spectral(alpha, fast)
        ref = spectral.beta(pts)
        oracle = np.abs(ref + 0.5 * alpha(pts)).max()
        mc = solve_poisson_mc(alpha, fast, tail_T=20.0, n_paths=100_000, validation_count=0)
        rel = np.abs(mc.beta(pts) - ref).max() / np.abs(ref).max()
        elapsed = time.perf_counter() - start
        ok = oracle <= 1e-10 and spectral.residual_sup <= 1e-6 and rel <= 0.02 and elapsed < 120
        verdict(3, ok, f"spectral vs -cos/2 {oracle:.1e}, residual {spectral.residual_sup:.1e}, "
                       f"MC relative sup error {rel:.3%}, {elapsed:.0f} s")
        assert ok

    def test_04_averaging(self, verdict):
        start = time.perf_counter()
        model = get_preset("hopf").averaged()
        err = np.abs(model.a_bar + 0.25 * np.eye(2)).max()
        fac = np.abs(model.sigma @ model.sigma.T + model.a_sym).max()
        elapsed = time.perf_counter() - start
        ok = err <= 1e-6 and fac <= 1e-10 and elapsed < 10
        verdict(4, ok, f"|a_bar + I/4| {err:.1e}, |sigma sigma^T + a_sym| {fac:.1e}, {elapsed:.2f} s")
        assert ok

    def test_05_lln(self, verdict):
        start = time.perf_counter()
        p = get_preset("hopf", 1.0)
        pts = lln_error(p.system.alphas[0], p.system.fast, range(1, 65), 2000, master_seed=5)
        slope = np.polyfit(np.log([q.t for q in pts]), np.log([q.l2_error for q in pts]), 1)[0]
        elapsed = time.perf_counter() - start
        ok = -0.6 <= slope <= -0.4 and elapsed < 120
        verdict(5, ok, f"log-log slope {slope:.3f} over t = 1..64, {elapsed:.0f} s")
        assert ok

    def test_06_ito_identity(self, verdict, hopf):
        start = time.perf_counter()
        rep = ito_reduction_check(hopf.system.with_epsilon(0.1), real_trace(2), 0.5, 50_000, theta=0.05,
                                  master_seed=6)
        elapsed = time.perf_counter() - start
        gap = abs(rep.lhs - rep.rhs)
        ok = rep.passed and elapsed < 300
        verdict(6, ok, f"lhs {rep.lhs:.4f}, rhs {rep.rhs:.4f}, gap {gap:.4f} <= "
                       f"3*{rep.pooled_se:.4f} + {rep.allowance:.4f}, {elapsed:.0f} s")
        assert ok

    def test_07_weak_convergence(self, verdict, hopf):
        start = time.perf_counter()
        sde = hopf.effective()
        f = real_trace(2)
        res = [weak_error(f, hopf.system.with_epsilon(e), sde, 1.0, 100_000, master_seed=7) for e in EPS]
        errs = [r.error for r in res]
        ses = [r.pooled_se for r in res]
        decreasing = all(a.error - b.error > np.hypot(a.pooled_se, b.pooled_se) for a, b in zip(res, res[1:]))
        fit = rate_fit(EPS, errs, ses, seed=7)
        elapsed = time.perf_counter() - start
        ok = decreasing and 0.6 <= fit.exponent <= 1.4 and elapsed < 900
        verdict(7, ok, f"errors {np.round(errs, 4).tolist()} (se {np.round(ses, 4).tolist()}), "
                       f"exponent {fit.exponent:.2f} CI [{fit.exponent_ci[0]:.2f}, {fit.exponent_ci[1]:.2f}], "
                       f"model_ratios {np.round(fit.model_ratios, 3).tolist()}, {elapsed:.0f} s")
        assert ok

    def test_08_wasserstein(self, verdict, hopf):
        # T = 0.25 keeps the eps = 0.2 gap above the n = 1000 sampling floor
        start = time.perf_counter()
        st = wasserstein_convergence(hopf.system, hopf.effective(), 0.25, EPS, 1000, master_seed=8)
        elapsed = time.perf_counter() - start
        separated = st.ci[0][0] > st.ci[-1][1]
        near_floor = st.w1[-1] <= 2 * st.sampling_floor
        ok = separated and near_floor and elapsed < 600
        fit = (f"exponent {st.fit.exponent:.2f} CI [{st.fit.exponent_ci[0]:.2f}, {st.fit.exponent_ci[1]:.2f}]"
               if st.fit is not None else st.fit_note)
        verdict(8, ok, f"w1 {np.round(st.w1, 4).tolist()}, CI(0.2) lower {st.ci[0][0]:.4f} vs CI(0.05) upper "
                       f"{st.ci[-1][1]:.4f}, floor {st.sampling_floor:.4f}; {fit}; {elapsed:.0f} s")
        assert ok

    def test_09_exact_transport(self, verdict):
        start = time.perf_counter()
        worst = 0.0
        perms = np.array(list(itertools.permutations(range(6))))
        for trial in range(100):
            spec = SU(2) if trial % 2 else SO(3)
            a = Ensemble(spec, haar_matrices(spec, RngStream(900, 2 * trial), 6))
            b = Ensemble(spec, haar_matrices(spec, RngStream(900, 2 * trial + 1), 6))
            cost, _ = pairwise_distances(spec, a.states, b.states)
            brute = cost[np.arange(6), perms].mean(axis=1).min()
            worst = max(worst, abs(wasserstein1(a, b, bootstrap=0).w1 - brute))
        elapsed = time.perf_counter() - start
        ok = worst <= 1e-12 and elapsed < 10
        verdict(9, ok, f"max |assignment - brute force| {worst:.1e} over 100 trials, {elapsed:.1f} s")
        assert ok

    def test_10_backward_equation(self, verdict, hopf):
        start = time.perf_counter()
        rep = backward_check(real_trace(2), hopf.effective(), 1.0, 0.01, 100_000, y0=hopf.system.y0,
                             master_seed=10)
        elapsed = time.perf_counter() - start
        ok = rep.passed and elapsed < 300
        verdict(10, ok, f"slope {rep.lhs_slope:.4f} vs P_T(Lbar f) {rep.rhs_value:.4f}, "
                        f"se {rep.pooled_se:.4f}, allowance {rep.allowance:.1e}, {elapsed:.0f} s")
        assert ok

    def test_11_uniform_moments(self, verdict, hopf):
        start = time.perf_counter()
        probe = uniform_moment_probe(hopf.system, p=2.0, eps_grid=EPS, T=1.0, n_paths=2000, master_seed=11)
        elapsed = time.perf_counter() - start
        ok = probe.ratio <= 2.0 and elapsed < 300
        verdict(11, ok, f"moments {np.round(probe.moments, 3).tolist()}, ratio {probe.ratio:.3f}, {elapsed:.0f} s")
        assert ok

    def test_12_reproducibility(self, verdict, tmp_path):
        config = tmp_path / "run.ini"
        config.write_text("[experiment]\npreset = hopf\nepsilon = 0.1\nT = 0.2\npaths = 600\n"
                          "limit_paths = 600\neps_grid = 0.2, 0.1, 0.05\nn = 40\nblock_size = 128\n")
        outputs = {}
        for command, files in (("simulate", ["simulate.csv"]), ("converge", ["converge.csv"]),
                               ("wasserstein", ["wasserstein.csv"])):
            for workers in (1, 1, 2, 4):
                out = tmp_path / f"{command}-{workers}-{len(outputs)}"
                code = main([command, "--config", str(config), "--seed", "12", "--workers", str(workers),
                             "--out", str(out)])
                assert code in (0, 2)
                outputs[(command, workers, len(outputs))] = b"".join((out / f).read_bytes() for f in files)
        identical = all(len({v for (c, _, _), v in outputs.items() if c == cmd}) == 1
                        for cmd in ("simulate", "converge", "wasserstein"))
        verdict(12, identical, "simulate, converge and wasserstein CSVs byte-identical over two runs "
                               "and workers 1, 2, 4")
        assert identical
