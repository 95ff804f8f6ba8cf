import numpy as np
import pytest

from mfbeam import (Ensemble, InsufficientAgents, MeanFieldPair,
                    MeanFieldSolution, NonPositiveDenominator, RiccatiSolution,
                    SolveMethod, TimeGrid, Variant, conjugate_weights_by_output,
                    deterministic_mean_cost, empirical_cost, mfc_payoff,
                    mfg_payoff, optimal_mean_control, payoff_report,
                    price_of_anarchy, simulate_ensemble, solve_mean_field,
                    validate_problem, value_function)
from conftest import make_demo_problem
from oracles import expected_strategy_cost


@pytest.fixture(scope="module")
def demo_solutions():
    p = make_demo_problem()
    return p, {v: solve_mean_field(p, v) for v in Variant}


# ---------------------------------------------------------------------------
# value function
# ---------------------------------------------------------------------------

def test_value_at_origin_is_offset():
    phi = np.zeros((3, 2, 2))
    chi = np.ones((3, 2))
    zeta = np.array([5.0, 6.0, 7.0])
    assert value_function(np.zeros(2), 1, phi, chi, zeta) == 6.0


def test_value_quadratic_form():
    phi = np.broadcast_to(2.0 * np.eye(2), (3, 2, 2))
    chi = np.zeros((3, 2))
    zeta = np.zeros(3)
    assert value_function(np.array([1.0, 1.0]), 0, phi, chi, zeta) == pytest.approx(2.0)


def test_value_at_initial_mean_equals_payoff(demo_solutions):
    p, sols = demo_solutions
    sol = sols[Variant.MFG]
    v0 = value_function(p.x0_mean, 0, sol.riccati.phi, sol.pair.chi, sol.riccati.zeta)
    assert v0 == pytest.approx(mfg_payoff(sol, p), rel=1e-14)


# ---------------------------------------------------------------------------
# analytic payoffs
# ---------------------------------------------------------------------------

def test_mfg_payoff_zero_mean_unit_covariance():
    p = make_demo_problem(x0_mean=np.zeros(2), sigma0=np.eye(2))
    sol = solve_mean_field(p, Variant.MFG)
    # with a zero initial mean the costate term drops even for an arbitrary chi
    injected = MeanFieldSolution(
        riccati=sol.riccati,
        pair=MeanFieldPair(eta=sol.pair.eta, chi=sol.pair.chi + 17.0,
                           residual=0.0, convergence=np.array([0.0]),
                           iterations=1, method=SolveMethod.NEWTON))
    expected = 0.5 * np.trace(sol.riccati.phi[0]) + sol.riccati.zeta[0]
    assert mfg_payoff(injected, p) == pytest.approx(expected, rel=1e-12)


def test_mfg_payoff_matches_independent_evaluator():
    # the value-function payoff and the rollout+covariance evaluator converge
    # to each other under grid refinement (first-order discretizations)
    gaps = []
    for vt in (100, 400):
        p = make_demo_problem(subintervals=vt)
        sol = solve_mean_field(p, Variant.MFG)
        formula = mfg_payoff(sol, p)
        rollout = expected_strategy_cost(p, sol.riccati.phi, sol.pair.chi)
        gaps.append(abs(formula - rollout) / rollout)
    assert gaps[0] <= 1.5e-2
    assert gaps[1] <= gaps[0] / 2.5


def test_mfc_payoff_matches_independent_evaluator():
    p = make_demo_problem(subintervals=400)
    sol = solve_mean_field(p, Variant.MFC)
    formula = mfc_payoff(sol, p)
    rollout = expected_strategy_cost(p, sol.riccati.phi, sol.pair.chi)
    assert formula == pytest.approx(rollout, rel=2e-3)


def test_mfc_corrections_vanish_without_coupling():
    p = make_demo_problem(Gamma=np.zeros((2, 2)))  # S = S_T = I already
    sol = solve_mean_field(p, Variant.MFC)
    base = mfg_payoff(sol, p)
    assert mfc_payoff(sol, p) == base


def test_mfc_payoff_pure_noise():
    p = make_demo_problem(x0_mean=np.zeros(2))
    sol = solve_mean_field(p, Variant.MFC)
    assert mfc_payoff(sol, p) == pytest.approx(sol.riccati.zeta[0], rel=1e-12)


@pytest.fixture(scope="module")
def mc_setup():
    """Shared Monte-Carlo ensembles for the payoff cross-checks."""
    p = make_demo_problem(subintervals=400)
    out = {}
    for variant in Variant:
        sol = solve_mean_field(p, variant)
        ensembles = [simulate_ensemble(p, sol, N=2000, seed=20240 + r)
                     for r in range(12)]
        out[variant] = (sol, ensembles)
    return p, out


def test_mfg_payoff_matches_monte_carlo(mc_setup):
    # E[individual cost] at equilibrium is the analytic payoff; 12 independent
    # single-agent realizations give the standard error
    p, out = mc_setup
    sol, ensembles = out[Variant.MFG]
    est = empirical_cost(ensembles, p, mode=0)
    assert abs(mfg_payoff(sol, p) - est.mean) <= 3.0 * est.stderr


def test_mfc_payoff_matches_monte_carlo(mc_setup):
    p, out = mc_setup
    sol, ensembles = out[Variant.MFC]
    est = empirical_cost(ensembles, p, mode=0)
    assert abs(mfc_payoff(sol, p) - est.mean) <= 3.0 * est.stderr


# ---------------------------------------------------------------------------
# empirical cost functional
# ---------------------------------------------------------------------------

def constant_ensemble(states, grid):
    """Frozen paths with zero controls for closed-form quadrature checks."""
    states = np.asarray(states, dtype=float)
    N, n = states.shape
    paths = np.repeat(states[:, None, :], grid.n_nodes, axis=1)
    controls = np.zeros((N, grid.n_nodes, n))
    return Ensemble(paths=paths, control_paths=controls, seed=0, grid=grid)


def test_two_agent_constant_quadrature():
    grid = TimeGrid(horizon=1.0, subintervals=4)
    p = make_demo_problem(subintervals=4)
    x0, x1 = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    e = constant_ensemble([x0, x1], grid)
    # hand quadrature: constants integrate to horizon * value
    T = grid.horizon

    def agent_cost(own, other):
        dev = own - p.S @ other
        dev_T = own - p.S_T @ other
        return (0.5 * T * (own @ p.Q @ own + dev @ p.Qbar @ dev)
                + 0.5 * (own @ p.Q_T @ own + dev_T @ p.Qbar_T @ dev_T))

    est0 = empirical_cost(e, p, mode=0)
    assert est0.mean == pytest.approx(agent_cost(x0, x1), rel=1e-12)
    est_soc = empirical_cost(e, p, mode="social")
    expected = 0.5 * (agent_cost(x0, x1) + agent_cost(x1, x0))
    assert est_soc.mean == pytest.approx(expected, rel=1e-12)
    assert np.isnan(est_soc.stderr)


def test_zero_weights_cost_nothing():
    grid = TimeGrid(horizon=1.0, subintervals=4)
    zeros = np.zeros((2, 2))
    p = make_demo_problem(subintervals=4, Q=zeros, Qbar=zeros,
                          Q_T=zeros, Qbar_T=zeros)
    e = constant_ensemble([[1.0, 2.0], [3.0, -1.0]], grid)
    assert empirical_cost(e, p, mode="social").mean == 0.0


def test_identical_agents_reduce_to_individual_cost(demo_solutions):
    # no noise, no initial spread: the deviation terms vanish identically and
    # only the per-agent regulation cost remains
    p = make_demo_problem(D=np.zeros((2, 2)))
    sol = solve_mean_field(p, Variant.MFG)
    e = simulate_ensemble(p, sol, N=4, seed=1)
    w = p.grid.trapezoid_weights()
    x, u = e.paths[0], e.control_paths[0]
    run = 0.5 * (np.einsum("vi,ij,vj->v", x, p.Q, x)
                 + np.einsum("vi,ij,vj->v", u, p.R, u))
    lqr_only = float(w @ run) + 0.5 * x[-1] @ p.Q_T @ x[-1]
    est = empirical_cost(e, p, mode="social")
    assert est.mean == pytest.approx(lqr_only, rel=1e-10)


def test_zero_noise_collapse_to_mean_quadrature():
    # deterministic symmetric ensemble: the realized social cost equals the
    # deterministic mean-system quadrature of the recorded control
    p = make_demo_problem(D=np.zeros((2, 2)))
    sol = solve_mean_field(p, Variant.MFC)
    e = simulate_ensemble(p, sol, N=3, seed=5)
    est = empirical_cost(e, p, mode="social")
    direct = deterministic_mean_cost(p, Variant.MFC, e.control_paths[0])
    assert abs(est.mean - direct) <= 1e-8


def test_single_agent_rejected():
    grid = TimeGrid(horizon=1.0, subintervals=4)
    p = make_demo_problem(subintervals=4)
    e = Ensemble(paths=np.ones((1, grid.n_nodes, 2)),
                 control_paths=np.zeros((1, grid.n_nodes, 2)), seed=0, grid=grid)
    with pytest.raises(InsufficientAgents):
        empirical_cost(e, p, mode=0)


# ---------------------------------------------------------------------------
# price of anarchy
# ---------------------------------------------------------------------------

def test_poa_arithmetic():
    assert price_of_anarchy(5.0, 5.0) == 1.0
    assert price_of_anarchy(2.184, 2.0) == pytest.approx(1.092)
    with pytest.raises(NonPositiveDenominator):
        price_of_anarchy(1.0, 0.0)
    with pytest.raises(NonPositiveDenominator):
        price_of_anarchy(1.0, -2.0)


def test_demo_poa_bracket(demo_solutions):
    p, sols = demo_solutions
    report = payoff_report(p, sols[Variant.MFG], sols[Variant.MFC])
    assert 1.0 <= report.poa <= 1.20
    for key in ("quadratic_initial", "mfg_chi_initial", "mfg_zeta_initial",
                "mfc_chi_initial", "mfc_zeta_initial",
                "mfc_correction_integral", "mfc_terminal_correction"):
        assert key in report.breakdown
    pieces = (report.breakdown["quadratic_initial"]
              + report.breakdown["mfg_chi_initial"]
              + report.breakdown["mfg_zeta_initial"])
    assert pieces == pytest.approx(report.j_mfg, rel=1e-12)


def test_poa_never_below_one():
    # the cooperative optimum never loses to the equilibrium on instances
    # where the terminal tie is exact (mean maps 0 or identity)
    rng = np.random.default_rng(11)
    instances = [make_demo_problem(),
                 validate_problem(conjugate_weights_by_output(make_demo_problem())),
                 make_demo_problem(Gamma=np.zeros((2, 2)))]
    for _ in range(4):
        gamma = float(rng.uniform(0.0, 0.6))
        instances.append(make_demo_problem(
            subintervals=150,
            A=np.diag(rng.uniform(-1.0, 1.2, size=2)),
            Gamma=gamma * np.eye(2),
            Q=np.diag(rng.uniform(0.5, 5.0, size=2)),
            Qbar=np.diag(rng.uniform(0.1, 2.0, size=2)),
            R=np.diag(rng.uniform(0.5, 3.0, size=2)),
            Q_T=np.diag(rng.uniform(0.0, 1.0, size=2)),
            Qbar_T=np.diag(rng.uniform(0.0, 1.0, size=2)),
            x0_mean=rng.uniform(-3.0, 3.0, size=2),
            sigma0=np.diag(rng.uniform(0.0, 0.5, size=2)),
        ))
    for p in instances:
        j_mfg = mfg_payoff(solve_mean_field(p, Variant.MFG), p)
        j_mfc = mfc_payoff(solve_mean_field(p, Variant.MFC), p)
        assert price_of_anarchy(j_mfg, j_mfc) >= 1.0 - 1e-6


def test_identity_mean_map_without_coupling_gives_unit_poa():
    p = make_demo_problem(Gamma=np.zeros((2, 2)))
    j_mfg = mfg_payoff(solve_mean_field(p, Variant.MFG), p)
    j_mfc = mfc_payoff(solve_mean_field(p, Variant.MFC), p)
    assert abs(price_of_anarchy(j_mfg, j_mfc) - 1.0) <= 1e-6


def test_tracking_conjugation_arithmetic(demo_problem):
    conj = conjugate_weights_by_output(demo_problem)
    block = np.array([[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(conj.Q, 120.0 * block)
    np.testing.assert_allclose(conj.Qbar, 15.0 * block)
    np.testing.assert_allclose(conj.Q_T, 2.0 * block)
    np.testing.assert_allclose(conj.Qbar_T, 7.0 * block)
    np.testing.assert_allclose(conj.R, demo_problem.R)


# ---------------------------------------------------------------------------
# deterministic mean system and the optimality check
# ---------------------------------------------------------------------------

def test_discrete_optimizer_beats_all_perturbations(demo_solutions):
    p, sols = demo_solutions
    rng = np.random.default_rng(2718)
    for variant in Variant:
        eta_ref = sols[Variant.MFG].pair.eta if variant is Variant.MFG else None
        u_star, _ = optimal_mean_control(p, variant, eta_ref=eta_ref)
        j_star = deterministic_mean_cost(p, variant, u_star, eta_ref=eta_ref)
        worst = 0.0
        for _ in range(20):
            direction = rng.standard_normal(u_star.shape)
            direction /= np.linalg.norm(direction)
            for eps in (1e-3, 1e-2):
                j = deterministic_mean_cost(p, variant, u_star + eps * direction,
                                            eta_ref=eta_ref)
                worst = min(worst, j - j_star)
        assert worst >= -1e-10


def test_discrete_optimizer_tracks_solver_control(demo_solutions):
    # the DP optimizer of the discretized problem converges to the solver's
    # feedback control; at V_T=100 they already agree to leading order
    p, sols = demo_solutions
    for variant in Variant:
        sol = sols[variant]
        eta_ref = sol.pair.eta if variant is Variant.MFG else None
        u_dp, _ = optimal_mean_control(p, variant, eta_ref=eta_ref)
        gain = np.linalg.solve(p.R, p.B.T)
        u_solver = -np.einsum("ij,vj->vi", gain,
                              np.einsum("vij,vj->vi", sol.riccati.phi, sol.pair.eta)
                              + sol.pair.chi)
        rel = (np.linalg.norm(u_dp[:-1] - u_solver[:-1])
               / np.linalg.norm(u_solver[:-1]))
        assert rel <= 0.35


def test_optimizer_cost_below_solver_cost(demo_solutions):
    p, sols = demo_solutions
    sol = sols[Variant.MFC]
    gain = np.linalg.solve(p.R, p.B.T)
    u_solver = -np.einsum("ij,vj->vi", gain,
                          np.einsum("vij,vj->vi", sol.riccati.phi, sol.pair.eta)
                          + sol.pair.chi)
    u_dp, _ = optimal_mean_control(p, Variant.MFC)
    assert (deterministic_mean_cost(p, Variant.MFC, u_dp)
            <= deterministic_mean_cost(p, Variant.MFC, u_solver))


def test_mean_cost_requires_reference_for_best_response(demo_problem):
    u = np.zeros((demo_problem.grid.n_nodes, demo_problem.m))
    with pytest.raises(ValueError):
        deterministic_mean_cost(demo_problem, Variant.MFG, u)
    with pytest.raises(ValueError):
        optimal_mean_control(demo_problem, Variant.MFG)
