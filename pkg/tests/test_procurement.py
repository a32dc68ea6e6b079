"""Procurement model, solver, CVaR machinery, and oracle cross-checks."""

import numpy as np
import pytest

from dpmeter.market import SystemExogenous
from dpmeter.milp import check_feasibility
from dpmeter.procurement import (
    ProcurementInstance,
    brute_force_oracle,
    build_milp,
    cvar_of_costs,
    default_volume_bounds,
    evaluate_selection,
    read_instance,
    solve,
    write_instance,
)
from dpmeter.scenario import ErrorScenarioSet

from helpers import random_instance, uniform_curve


def flat_instance(beta=0.0, price=50.0):
    """T=1, S=1, single bracket everywhere: optimum is a closed form."""
    scen = ErrorScenarioSet(np.zeros((1, 1)), np.ones(1))
    da = uniform_curve(40.0, 80.0, 1, [price])
    bal = uniform_curve(-20.0, 20.0, 1, [80.0])
    exo = SystemExogenous(np.array([50.0]), np.zeros((1, 1)))
    return ProcurementInstance(
        d_fore=np.array([10.0]),
        scenarios=scen,
        da_curve=da,
        bal_curves=(bal,),
        exogenous=exo,
        beta=beta,
        alpha=0.9,
        d_da_lower=np.array([-5.0]),
        d_da_upper=np.array([15.0]),
    )


class TestCvar:
    def test_worst_half(self):
        assert cvar_of_costs([10.0, 20.0], [0.5, 0.5], 0.5) == pytest.approx(20.0)

    def test_all_equal(self):
        for alpha in (0.1, 0.5, 0.95):
            assert cvar_of_costs([7.0] * 5, [0.2] * 5, alpha) == pytest.approx(7.0)

    def test_matches_tail_mean_oracle(self):
        rng = np.random.default_rng(42)
        alpha = 0.95
        for _ in range(100):
            n = int(rng.integers(2, 60))
            costs = rng.normal(0, 100, n)
            probs = np.full(n, 1.0 / n)
            got = cvar_of_costs(costs, probs, alpha)
            # independent oracle: scan zeta over sorted costs, tail average
            best = np.inf
            for z in np.sort(costs):
                best = min(best, z + np.maximum(costs - z, 0).mean() / (1 - alpha))
            assert got == pytest.approx(best, abs=1e-9)

    def test_bad_probs_rejected(self):
        with pytest.raises(ValueError):
            cvar_of_costs([1.0], [0.5], 0.9)


class TestBuildMilp:
    def test_structure_counts(self):
        rng = np.random.default_rng(0)
        inst = random_instance(rng, T=2, S=2, B=3, F=3)
        model = build_milp(inst)
        assert model.off_u_bal - model.off_u_da == 6  # u_da
        assert model.lp.n_cols - model.off_u_bal == 12  # u_bal
        assert model.off_c_bal - model.off_c_da == 6  # c_da
        assert model.off_u_da - model.off_c_bal == 12  # c_bal

    def test_single_bracket_forced(self):
        inst = flat_instance()
        model = build_milp(inst)
        assert model.B == 1 and model.F == 1
        sol = solve(model)
        assert sol.status == "optimal"
        assert sol.u_da[0, 0] == 1.0 and sol.u_bal[0, 0, 0] == 1.0

    def test_beta_zero_has_no_risk_term_in_objective(self):
        rng = np.random.default_rng(1)
        inst = random_instance(rng, T=2, S=2, B=2, F=2, beta=0.0)
        model = build_milp(inst)
        zeta_obj = model.lp.obj[model.col_zeta]
        eta_obj = model.lp.obj[model.off_eta : model.off_eta + model.S]
        assert zeta_obj == 0.0
        assert np.all(eta_obj == 0.0)

    def test_uncovered_grid_raises_with_period(self):
        inst = flat_instance()
        bad = ProcurementInstance(
            d_fore=inst.d_fore,
            scenarios=inst.scenarios,
            da_curve=uniform_curve(52.0, 80.0, 1, [50.0]),  # misses low demands
            bal_curves=inst.bal_curves,
            exogenous=inst.exogenous,
            beta=inst.beta,
            alpha=inst.alpha,
            d_da_lower=inst.d_da_lower,
            d_da_upper=inst.d_da_upper,
        )
        with pytest.raises(ValueError, match="period 0"):
            build_milp(bad)


class TestSolve:
    def test_flat_price_closed_form(self):
        # cost = 50*d + 80*(10 - d) = 800 - 30*d over d in [-5, 15]: the
        # balancing market pays more than day-ahead costs, so the LSE buys
        # to its upper bound and sells the surplus back
        inst = flat_instance(beta=0.0)
        sol = solve(build_milp(inst))
        assert sol.status == "optimal"
        assert sol.d_da[0] == pytest.approx(15.0, abs=1e-6)
        assert sol.objective == pytest.approx(350.0, abs=1e-5)

    def test_solution_feasible_in_full_model(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            inst = random_instance(rng)
            model = build_milp(inst)
            sol = solve(model)
            assert sol.status == "optimal"
            assert check_feasibility(model.lp, sol.lp_point) <= 1e-6

    def test_linearization_exactness_post_solve(self):
        rng = np.random.default_rng(21)
        worst = 0.0
        for _ in range(10):
            inst = random_instance(rng)
            model = build_milp(inst)
            sol = solve(model)
            x = sol.lp_point
            for t in range(model.T):
                d = x[model.off_d_da + t]
                for bb in range(model.B):
                    u = x[model.u_da_col(t, bb)]
                    c_sem = x[model.c_da_col(t, bb)] + inst.d_da_lower[t] * u
                    worst = max(worst, abs(c_sem - u * d))
            for s in range(model.S):
                for t in range(model.T):
                    d = x[model.d_bal_col(s, t)]
                    for f in range(model.F):
                        u = x[model.u_bal_col(s, t, f)]
                        lo_bal = model.k_mat[s, t] - inst.d_da_upper[t]
                        c_sem = x[model.c_bal_col(s, t, f)] + lo_bal * u
                        worst = max(worst, abs(c_sem - u * d))
        assert worst < 1e-9

    def test_expected_cost_decomposition(self):
        rng = np.random.default_rng(3)
        inst = random_instance(rng, beta=0.0)
        sol = solve(build_milp(inst))
        recomputed = float(inst.scenarios.probabilities @ sol.scenario_costs)
        assert sol.expected_cost == pytest.approx(recomputed, abs=1e-8)
        assert sol.objective == pytest.approx(sol.expected_cost, abs=1e-8)

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(11)
        for k in range(20):
            inst = random_instance(rng)
            sol = solve(build_milp(inst), tol=1e-7)
            ref = brute_force_oracle(inst, grid_points=14)
            assert sol.status == "optimal" and ref.status == "optimal"
            scale = max(1.0, abs(ref.objective))
            assert sol.objective <= ref.objective + 1e-5 * scale, f"case {k}: solver worse"
            assert sol.objective >= ref.objective - 1e-5 * scale, f"case {k}: oracle worse"

    def test_risk_monotonicity(self):
        rng = np.random.default_rng(19)
        inst0 = random_instance(rng, T=2, S=2, B=3, F=3, beta=0.0)
        results = []
        for beta in (0.0, 0.5, 1.0, 5.0):
            inst = ProcurementInstance(
                d_fore=inst0.d_fore,
                scenarios=inst0.scenarios,
                da_curve=inst0.da_curve,
                bal_curves=inst0.bal_curves,
                exogenous=inst0.exogenous,
                beta=beta,
                alpha=0.75,
                d_da_lower=inst0.d_da_lower,
                d_da_upper=inst0.d_da_upper,
            )
            results.append(solve(build_milp(inst)))
        tol = 1e-6
        for a, b in zip(results, results[1:]):
            assert b.expected_cost >= a.expected_cost - tol
            assert b.cvar <= a.cvar + tol


class TestOracle:
    def test_matches_flat_closed_form(self):
        inst = flat_instance(beta=0.0)
        ref = brute_force_oracle(inst)
        assert ref.objective == pytest.approx(350.0, abs=1e-6)

    def test_grid_refinement_stability(self):
        rng = np.random.default_rng(4)
        inst = random_instance(rng, T=2, S=2, B=2, F=2)
        a = brute_force_oracle(inst, grid_points=8)
        b = brute_force_oracle(inst, grid_points=16)
        assert a.objective == pytest.approx(b.objective, abs=1e-6)

    def test_too_large_rejected(self):
        rng = np.random.default_rng(5)
        inst = random_instance(rng, T=3, S=2, B=2, F=2)
        with pytest.raises(ValueError):
            brute_force_oracle(inst, max_boxes=2)


class TestInstanceIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        inst = random_instance(rng, T=2, S=2, B=3, F=2)
        path = tmp_path / "inst.json"
        write_instance(inst, path)
        back = read_instance(path)
        np.testing.assert_allclose(back.d_fore, inst.d_fore)
        np.testing.assert_allclose(back.scenarios.errors, inst.scenarios.errors)
        np.testing.assert_allclose(back.da_curve.prices, inst.da_curve.prices)
        assert back.beta == inst.beta and back.alpha == inst.alpha
        assert solve(build_milp(back)).objective == pytest.approx(
            solve(build_milp(inst)).objective, abs=1e-9
        )

    def test_default_bounds(self):
        lo, hi = default_volume_bounds(np.array([1.0, -4.0, 2.0]))
        assert np.all(lo == -12.0) and np.all(hi == 12.0)
