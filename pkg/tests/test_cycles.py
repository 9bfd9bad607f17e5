"""Relaxation operators, coarse solvers, instrumented cycles, V-cycles."""

import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sparse

from mixedmg import (
    CARRIER,
    ContractionError,
    PROOF_LINES,
    PrecisionFormat,
    SparseSpd,
    coarse_complement_projector,
    energy_norm,
    energy_operator_norm,
    exact_tg_reference,
    make_exact_coarse,
    make_jacobi,
    make_perturbed_coarse,
    make_recursive_coarse,
    make_richardson,
    measure_bc_deviation,
    normalize_hierarchy,
    projector_energy_norm,
    rho_star,
    solve_spd,
    tg_cycle,
    v_cycle,
)
from mixedmg.cycles import default_smoothers
from mixedmg.hierarchy import linear_interpolation, poisson_1d

EPS = float(np.finfo(np.float64).eps)
FMT12 = PrecisionFormat(12)


@pytest.fixture(scope="module")
def jacobi31(level31):
    M = make_jacobi(level31.A, 2.0 / 3.0, FMT12)
    N = make_jacobi(level31.A, 2.0 / 3.0, FMT12)
    return M, N


class TestMakeJacobi:
    def test_identity_matrix_gives_identity_operator(self):
        M = make_jacobi(SparseSpd(np.eye(5)), 1.0, FMT12)
        assert np.array_equal(M.diag, np.ones(5))
        assert M.contraction == pytest.approx(0.0, abs=1e-14)
        assert M.eta_euclid == 1.0

    def test_contracts_on_scaled_poisson(self):
        lvl = normalize_hierarchy(poisson_1d(7), linear_interpolation(7))
        M = make_jacobi(lvl.A, 2.0 / 3.0, FMT12)
        assert M.contraction < 1.0
        # independent check: eigenvalue magnitudes of the error propagator
        prop = np.eye(7) - M.diag[:, None] * lvl.A.dense
        lams = scipy.linalg.eigvals(prop)
        assert np.abs(lams).max() <= M.contraction + 1e-12

    def test_overrelaxation_rejected(self):
        lvl = normalize_hierarchy(poisson_1d(7), linear_interpolation(7))
        with pytest.raises(ContractionError):
            make_jacobi(lvl.A, 4.0, FMT12)

    def test_alpha_certification_1000_draws(self, level31):
        M = make_jacobi(level31.A, 2.0 / 3.0, FMT12)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            z = rng.standard_normal(31)
            value, bound = M.apply_rounded(z, FMT12)
            err = np.linalg.norm(value - M.apply_exact(z))
            assert err <= bound
            assert bound <= M.alpha * FMT12.unit_roundoff * np.linalg.norm(z) * (1 + 1e-15)

    def test_format_mismatch_rejected(self, jacobi31):
        M, _ = jacobi31
        with pytest.raises(ValueError):
            M.apply_rounded(np.ones(31), PrecisionFormat(8))


class TestMakeRichardson:
    def test_scalar_operator(self):
        lvl = normalize_hierarchy(poisson_1d(7), linear_interpolation(7))
        R = make_richardson(lvl.A, 0.9, FMT12)
        assert np.all(R.diag == R.diag[0])
        assert R.contraction < 1.0
        assert R.eta_energy == pytest.approx(R.eta_euclid, rel=1e-12)


class TestPerturbedCoarse:
    def test_sigma_zero_is_exact(self, level31):
        solver = make_perturbed_coarse(level31, 0.0)
        assert solver.variant == "exact"
        assert solver.bc_deviation == 0.0

    def test_deviation_matches_sigma(self, level31):
        solver = make_perturbed_coarse(level31, 0.5, seed=7)
        measured = energy_operator_norm(
            solver.bc_matrix - np.eye(level31.n_c), level31.A_c)
        assert measured == pytest.approx(0.5, abs=10 * EPS)

    def test_bc_norm_below_two(self, level31):
        for sigma in (0.1, 0.5, 0.9, 0.99):
            solver = make_perturbed_coarse(level31, sigma, seed=11)
            assert energy_operator_norm(solver.bc_matrix, level31.A_c) <= 2.0

    def test_sigma_out_of_range(self, level31):
        with pytest.raises(ValueError):
            make_perturbed_coarse(level31, 1.0)


class TestExactReference:
    def test_zero_rhs(self, level31, jacobi31):
        M, N = jacobi31
        y = exact_tg_reference(level31, np.zeros(31), M, N, make_exact_coarse())
        assert np.array_equal(y, np.zeros(31))

    def test_error_within_rho_star(self, level31, jacobi31):
        M, N = jacobi31
        coarse = make_exact_coarse()
        rho = rho_star(level31, M, N, coarse)
        rng = np.random.default_rng(1)
        for _ in range(100):
            r = rng.standard_normal(31)
            x = solve_spd(level31.A, r)
            y = exact_tg_reference(level31, r, M, N, coarse)
            assert (energy_norm(y - x, level31.A)
                    <= rho * energy_norm(x, level31.A) * (1 + 1e-11))

    @pytest.mark.parametrize("sigma", [0.0, 0.3, 0.9])
    def test_intermediate_iterate_does_not_grow(self, level31, jacobi31, sigma):
        # the corrected iterate before post-relaxation cannot increase the
        # initial energy error, for any coarse perturbation below one
        from mixedmg.cycles import _reference_stages

        M, N = jacobi31
        coarse = make_perturbed_coarse(level31, sigma, seed=5)
        rng = np.random.default_rng(2)
        for _ in range(100):
            r = rng.standard_normal(31)
            x = solve_spd(level31.A, r)
            stages = _reference_stages(level31, r, M, N, coarse)
            xn = energy_norm(x, level31.A)
            assert energy_norm(stages.y_nu - x, level31.A) <= (1 + 1e-10) * xn

    @pytest.mark.parametrize("sigma", [0.0, 0.3, 0.9])
    def test_coarse_correction_euclid_bound(self, level31, jacobi31, sigma):
        from mixedmg.cycles import _reference_stages

        M, N = jacobi31
        coarse = make_perturbed_coarse(level31, sigma, seed=5)
        bound_factor = 2.0 * math.sqrt(level31.kappa_c)
        rng = np.random.default_rng(3)
        for _ in range(100):
            r = rng.standard_normal(31)
            x = solve_spd(level31.A, r)
            stages = _reference_stages(level31, r, M, N, coarse)
            assert (np.linalg.norm(stages.d_c)
                    <= bound_factor * energy_norm(x, level31.A) * (1 + 1e-12))

    @pytest.mark.parametrize("sigma", [0.0, 0.3, 0.9])
    def test_result_energy_bound(self, level31, jacobi31, sigma):
        M, N = jacobi31
        coarse = make_perturbed_coarse(level31, sigma, seed=5)
        assert rho_star(level31, M, N, coarse) < 1.0
        rng = np.random.default_rng(4)
        for _ in range(100):
            r = rng.standard_normal(31)
            x = solve_spd(level31.A, r)
            y = exact_tg_reference(level31, r, M, N, coarse)
            assert (energy_norm(y, level31.A)
                    <= 2.0 * energy_norm(x, level31.A) * (1 + 1e-12))


class TestTgCycle:
    def test_zero_rhs_gives_zero(self, level31, jacobi31):
        M, N = jacobi31
        y, trace = tg_cycle(level31, np.zeros(31), M, N, make_exact_coarse(), FMT12)
        assert np.array_equal(y, np.zeros(31))
        assert trace.delta_y_energy == 0.0

    def test_trace_norms_finite_nonnegative(self, level31, jacobi31):
        M, N = jacobi31
        r = np.random.default_rng(5).standard_normal(31)
        _, trace = tg_cycle(level31, r, M, N, make_exact_coarse(), FMT12)
        assert set(trace.line_norms) == set(PROOF_LINES)
        for v in trace.line_norms.values():
            assert np.isfinite(v) and v >= 0.0

    def test_carrier_format_matches_reference(self):
        levels = [normalize_hierarchy(poisson_1d(3), linear_interpolation(3))]
        lvl = levels[0]
        M = make_jacobi(lvl.A, 2.0 / 3.0, CARRIER)
        N = make_jacobi(lvl.A, 2.0 / 3.0, CARRIER)
        rng = np.random.default_rng(6)
        tol = 1e3 * EPS * math.sqrt(lvl.kappa)
        for _ in range(20):
            r = rng.standard_normal(3)
            y, trace = tg_cycle(lvl, r, M, N, make_exact_coarse(), CARRIER)
            x = solve_spd(lvl.A, r)
            rel = energy_norm(y - trace.y_reference, lvl.A) / energy_norm(x, lvl.A)
            assert rel <= tol

    def test_final_error_bound_single_config(self, level31, jacobi31):
        from mixedmg.harness import bound_inputs_for
        from mixedmg.bounds import compute_constants

        M, N = jacobi31
        coarse = make_exact_coarse()
        rho = rho_star(level31, M, N, coarse)
        report = compute_constants(
            bound_inputs_for(level31, M, N, FMT12), rho_star=rho)
        rng = np.random.default_rng(7)
        for _ in range(100):
            r = rng.standard_normal(31)
            x = solve_spd(level31.A, r)
            y, _ = tg_cycle(level31, r, M, N, coarse, FMT12)
            assert (energy_norm(y - x, level31.A)
                    <= report.rho_tg * energy_norm(x, level31.A))


class TestRhoStar:
    def test_exact_inverse_smoother_gives_zero(self):
        # identity system: Richardson with omega = 1 is the exact inverse
        lvl = normalize_hierarchy(
            SparseSpd(np.eye(3)), sparse.csr_array(np.array([[0.5], [1.0], [0.5]])))
        M = make_richardson(lvl.A, 1.0, CARRIER)
        assert rho_star(lvl, M, M, make_exact_coarse()) == pytest.approx(0.0, abs=1e-13)

    def test_smallest_poisson_in_unit_interval(self):
        lvl = normalize_hierarchy(poisson_1d(3), linear_interpolation(3))
        M = make_jacobi(lvl.A, 2.0 / 3.0, CARRIER)
        value = rho_star(lvl, M, M, make_exact_coarse())
        assert 0.0 < value < 1.0

    def test_perturbation_does_not_improve(self, level31, jacobi31):
        M, N = jacobi31
        base = rho_star(level31, M, N, make_exact_coarse())
        for sigma in (0.3, 0.9):
            perturbed = rho_star(
                level31, M, N, make_perturbed_coarse(level31, sigma, seed=5))
            assert base <= perturbed + 1e-12


class TestVCycle:
    def test_zero_rhs(self, levels31_3):
        y = v_cycle(levels31_3, 1, 1, np.zeros(31), FMT12)
        assert np.array_equal(y, np.zeros(31))

    def test_two_level_bitwise_identity_with_tg(self, level31, jacobi31):
        M, N = jacobi31
        levels = [level31, None]  # coarsest level is only a placeholder
        from mixedmg.hierarchy import coarsest_level

        levels[1] = coarsest_level(level31.A_c)
        rng = np.random.default_rng(8)
        for _ in range(10):
            r = rng.standard_normal(31)
            y_tg, _ = tg_cycle(level31, r, M, N, make_exact_coarse(), FMT12)
            y_v = v_cycle(levels, 1, 1, r, FMT12, smoothers=[(M, N)])
            assert np.array_equal(y_tg, y_v)

    def test_three_level_reduces_energy_error(self, levels31_3):
        fmt = PrecisionFormat(16)
        rng = np.random.default_rng(9)
        lvl = levels31_3[0]
        for _ in range(10):
            r = rng.standard_normal(31)
            x = solve_spd(lvl.A, r)
            y = v_cycle(levels31_3, 1, 1, r, fmt)
            assert energy_norm(y - x, lvl.A) < energy_norm(x, lvl.A)

    def test_multiple_sweeps_beat_single(self, levels31_3):
        rng = np.random.default_rng(10)
        lvl = levels31_3[0]
        worse = better = 0.0
        for _ in range(10):
            r = rng.standard_normal(31)
            x = solve_spd(lvl.A, r)
            e1 = energy_norm(v_cycle(levels31_3, 1, 1, r, CARRIER) - x, lvl.A)
            e3 = energy_norm(v_cycle(levels31_3, 3, 3, r, CARRIER) - x, lvl.A)
            worse += e1
            better += e3
        assert better < worse

    def test_rejects_bad_arguments(self, levels31_3, level31):
        with pytest.raises(ValueError):
            v_cycle([level31], 1, 1, np.zeros(31), FMT12)
        with pytest.raises(ValueError):
            v_cycle(levels31_3, 0, 0, np.zeros(31), FMT12)
        with pytest.raises(ValueError):
            v_cycle(levels31_3, 1, 1, np.zeros(31), FMT12, smoothers=[])


class TestRecursiveCoarse:
    def test_direct_solve_has_zero_deviation(self, level31):
        from mixedmg.hierarchy import coarsest_level

        levels = [level31, coarsest_level(level31.A_c)]
        dev = measure_bc_deviation(levels, 1, 1)
        assert dev <= 1e-10

    def test_three_level_deviation_below_one(self, levels31_3):
        dev = measure_bc_deviation(levels31_3, 1, 1)
        assert 0.0 < dev < 1.0

    def test_deviation_equals_coarse_cycle_rho(self, levels31_3):
        dev = measure_bc_deviation(levels31_3, 1, 1)
        sub = levels31_3[1:]
        M, N = default_smoothers(sub, CARRIER)[0]
        rho_coarse = rho_star(sub[0], M, N, make_exact_coarse())
        assert dev == pytest.approx(rho_coarse, rel=1e-10)

    def test_recursive_solver_in_tg_cycle(self, levels31_3):
        solver = make_recursive_coarse(levels31_3, 1, 1)
        assert solver.variant == "recursive"
        assert solver.bc_deviation < 1.0
        lvl = levels31_3[0]
        M = make_jacobi(lvl.A, 2.0 / 3.0, FMT12)
        rho = rho_star(lvl, M, M, solver)
        assert rho < 1.0
        r = np.random.default_rng(11).standard_normal(31)
        x = solve_spd(lvl.A, r)
        y, _ = tg_cycle(lvl, r, M, M, solver, FMT12)
        assert energy_norm(y - x, lvl.A) < energy_norm(x, lvl.A)

    def test_two_level_recursion_degenerates_to_exact(self, level31):
        from mixedmg.hierarchy import coarsest_level

        levels = [level31, coarsest_level(level31.A_c)]
        solver = make_recursive_coarse(levels, 1, 1)
        assert solver.variant == "exact"


class TestProjectionChain:
    def test_projector_energy_norm_at_most_one(self, level31):
        assert projector_energy_norm(level31) <= 1.0 + 10 * EPS

    def test_projector_idempotent(self, level31):
        T = coarse_complement_projector(level31)
        assert np.linalg.norm(T @ T - T, 2) <= 1e3 * EPS

    def test_projector_annihilates_coarse_range(self, level31):
        T = coarse_complement_projector(level31)
        rng = np.random.default_rng(12)
        for _ in range(10):
            wc = rng.standard_normal(level31.n_c)
            image = T @ (level31.P @ wc)
            assert np.linalg.norm(image) <= 1e-10 * np.linalg.norm(level31.P @ wc)
