"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report. Tolerances are fixed here, not tuned at runtime.
"""

import json
import math
import time

import numpy as np
import pytest

from mfbeam import (SolveMethod, Variant, assemble, deterministic_mean_cost,
                    mean_consistency_error, mfc_payoff, mfg_payoff,
                    optimal_mean_control, simulate_ensemble, solve_dense,
                    solve_fixed_point, solve_mean_field, solve_newton,
                    solve_riccati, solve_zeta, trajectory_l2_norm,
                    validate_problem)
from mfbeam.cli import main as cli_main
from mfbeam.costs import conjugate_weights_by_output, payoff_report
from conftest import make_demo_problem
from test_riccati import scalar_problem


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def pair_l2(grid, a, b):
    return trajectory_l2_norm(grid, a.eta - b.eta, a.chi - b.chi)


def test_criterion_1_riccati_closed_form():
    # scalar A=0, B=R=1, Q+Qbar=1, zero terminal, T=1: phi(0) = tanh(1)
    p = scalar_problem()
    t0 = time.perf_counter()
    phi = solve_riccati(p)
    elapsed = time.perf_counter() - t0
    err = abs(phi[0, 0, 0] - math.tanh(1.0))
    ok = err <= 1e-6 and elapsed < 0.1
    report("criterion 1 (Riccati closed form)", ok,
           f"|phi(0) - tanh(1)| = {err:.2e} (tol 1e-6), runtime {elapsed * 1e3:.1f} ms (< 100)")


def test_criterion_2_method_agreement():
    p = make_demo_problem(subintervals=100)
    t0 = time.perf_counter()
    phi = solve_riccati(p)
    agreements = []
    newton_polish = []
    for variant in Variant:
        sys = assemble(p, phi, variant)
        fp = solve_fixed_point(sys, damping=0.5, tol=1e-8, max_iter=2000)
        nt = solve_newton(sys, tol=1e-8)
        dense = solve_dense(sys)
        agreements.append((pair_l2(p.grid, fp, nt), pair_l2(p.grid, fp, dense),
                           pair_l2(p.grid, nt, dense)))
        # affine residual: the second Newton step only measures solve roundoff,
        # so the bound is relative to the first step (absolute 1e-12 is below
        # float64 resolution at this state scale)
        newton_polish.append(nt.convergence[1] / nt.convergence[0])
    elapsed = time.perf_counter() - t0
    worst_fp_nt = max(a[0] for a in agreements)
    worst_dense = max(max(a[1], a[2]) for a in agreements)
    worst_polish = max(newton_polish)
    ok = (worst_fp_nt <= 1e-6 and worst_dense <= 1e-7
          and worst_polish <= 1e-12 and elapsed < 1.0)
    report("criterion 2 (method agreement)", ok,
           f"fp-vs-newton {worst_fp_nt:.2e} (tol 1e-6), vs dense {worst_dense:.2e} "
           f"(tol 1e-7), newton 2nd/1st step {worst_polish:.2e} (tol 1e-12), "
           f"runtime {elapsed:.2f} s (< 1)")


def test_criterion_3_convergence_curve_shape():
    p = make_demo_problem(subintervals=100)
    phi = solve_riccati(p)
    worst = None
    for variant in Variant:
        sys = assemble(p, phi, variant)
        pair = solve_fixed_point(sys, damping=0.5, tol=1e-8, max_iter=500)
        diffs = pair.convergence
        finite = bool(np.all(np.isfinite(diffs)))
        positive = bool(np.all(diffs > 0))
        decreasing = all(diffs[j + 1] < diffs[j] for j in range(3, len(diffs) - 1))
        ok = finite and positive and decreasing
        if worst is None or not ok:
            worst = (variant, len(diffs), finite, positive, decreasing)
        assert ok, f"{variant}: finite={finite} positive={positive} decreasing={decreasing}"
    report("criterion 3 (convergence curve)", True,
           f"both variants finite, positive, strictly decreasing after iteration 3 "
           f"({worst[1]} iterations)")


def test_criterion_4_poa_reproduction():
    p = make_demo_problem(subintervals=100)
    tracking = validate_problem(conjugate_weights_by_output(make_demo_problem(subintervals=100)))
    table = {}
    for method in SolveMethod:
        entries = {}
        for label, prob in (("state_average", p), ("tracking", tracking)):
            mfg_sol = solve_mean_field(prob, Variant.MFG, method=method, max_iter=2000)
            mfc_sol = solve_mean_field(prob, Variant.MFC, method=method, max_iter=2000)
            entries[label] = payoff_report(prob, mfg_sol, mfc_sol).poa
        table[method] = entries
    values = [v for entries in table.values() for v in entries.values()]
    in_bracket = all(1.00 <= v <= 1.20 for v in values)
    above_one = all(v >= 1.0 - 1e-6 for v in values)
    method_gap = max(abs(table[SolveMethod.FIXED_POINT][lbl]
                         - table[SolveMethod.NEWTON][lbl])
                     for lbl in ("state_average", "tracking"))
    ok = in_bracket and above_one and method_gap <= 0.01
    fp = table[SolveMethod.FIXED_POINT]
    report("criterion 4 (PoA table)", ok,
           f"state-average {fp['state_average']:.4f}, tracking {fp['tracking']:.4f}, "
           f"method gap {method_gap:.2e} (tol 0.01), bracket [1.00, 1.20]")


def test_criterion_5_lqr_reduction():
    zeros = np.zeros((2, 2))
    p = make_demo_problem(Gamma=zeros, S=zeros, S_T=zeros, Qbar=zeros, Qbar_T=zeros)
    sols = {v: solve_mean_field(p, v) for v in Variant}
    chi_max = max(float(np.max(np.abs(s.pair.chi))) for s in sols.values())
    gap = pair_l2(p.grid, sols[Variant.MFG].pair, sols[Variant.MFC].pair)
    ok = chi_max <= 1e-10 and gap <= 1e-10
    report("criterion 5 (LQR reduction)", ok,
           f"max |chi| = {chi_max:.2e} (tol 1e-10), variant gap {gap:.2e} (tol 1e-10)")


def test_criterion_6_optimality_property():
    p = make_demo_problem(subintervals=100)
    rng = np.random.default_rng(314159)
    worst = 0.0
    for variant in Variant:
        eta_ref = None
        if variant is Variant.MFG:
            eta_ref = solve_mean_field(p, variant).pair.eta
        u_star, _ = optimal_mean_control(p, variant, eta_ref=eta_ref)
        j_star = deterministic_mean_cost(p, variant, u_star, eta_ref=eta_ref)
        for _ in range(20):
            direction = rng.standard_normal(u_star.shape)
            direction /= np.linalg.norm(direction)
            for eps in (1e-3, 1e-2):
                j = deterministic_mean_cost(p, variant, u_star + eps * direction,
                                            eta_ref=eta_ref)
                worst = min(worst, j - j_star)
    ok = worst >= -1e-10
    report("criterion 6 (control optimality)", ok,
           f"worst cost decrease over 20 directions x eps {{1e-3, 1e-2}} x both "
           f"variants: {worst:.2e} (tol -1e-10)")


def test_criterion_7_mean_field_consistency():
    p = make_demo_problem(subintervals=100)
    sol = solve_mean_field(p, Variant.MFG)
    eta_norm = trajectory_l2_norm(p.grid, sol.pair.eta)
    t0 = time.perf_counter()

    e = simulate_ensemble(p, sol, N=1000, seed=777)
    base_err = mean_consistency_error(e, sol.pair.eta)
    base_ok = base_err <= 0.05 * eta_norm

    sizes = (250, 1000, 4000)
    medians = {}
    for size in sizes:
        errs = [mean_consistency_error(simulate_ensemble(p, sol, size, seed), sol.pair.eta)
                for seed in range(1000, 1020)]
        medians[size] = float(np.median(errs))
    elapsed = time.perf_counter() - t0
    factor = medians[1000] / medians[4000]
    slope = float(np.polyfit(np.log(sizes), np.log([medians[s] for s in sizes]), 1)[0])
    ok = base_ok and factor >= 1.5 and -0.65 <= slope <= -0.35 and elapsed < 30.0
    report("criterion 7 (mean-field consistency)", ok,
           f"error {base_err / eta_norm * 100:.3f}% of |eta| (tol 5%), "
           f"N x4 error factor {factor:.2f} (>= 1.5), exponent {slope:.3f} "
           f"(in [-0.65, -0.35]), runtime {elapsed:.1f} s (< 30)")


def test_criterion_8_simulate_determinism(tmp_path):
    import shutil
    from test_cli import DEMO_CONFIG

    text = DEMO_CONFIG.read_text().replace("N = 1000", "N = 128")
    cfg = tmp_path / "demo.ini"
    cfg.write_text(text)
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli_main(["simulate", "--config", str(cfg), "--out", str(out),
                         "--variant", "mfg", "--seed", "123"])
        assert code == 0
        outs.append(out)
    names = sorted(f.name for f in outs[0].iterdir())
    identical = names == sorted(f.name for f in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    report("criterion 8 (simulate determinism)", identical,
           f"{len(names)} output files byte-identical across repeated runs")


def test_criterion_9_grid_convergence_orders():
    # value coefficient: classical RK4, expect order ~4; pair: explicit Euler,
    # expect order ~1
    phis = {}
    pairs = {}
    for vt in (50, 100, 200):
        p = make_demo_problem(subintervals=vt)
        phi = solve_riccati(p)
        phis[vt] = phi[0]
        pairs[vt] = (p, solve_dense(assemble(p, phi, Variant.MFG)))
    d1 = np.linalg.norm(phis[50] - phis[100])
    d2 = np.linalg.norm(phis[100] - phis[200])
    phi_order = float(np.log2(d1 / d2))

    def shared_node_gap(coarse_vt, fine_vt):
        (pc, pair_c), (_, pair_f) = pairs[coarse_vt], pairs[fine_vt]
        step = fine_vt // coarse_vt
        return trajectory_l2_norm(pc.grid,
                                  pair_c.eta - pair_f.eta[::step],
                                  pair_c.chi - pair_f.chi[::step])

    e1 = shared_node_gap(50, 100)
    e2 = shared_node_gap(100, 200)
    pair_order = float(np.log2(e1 / e2))
    ok = phi_order >= 3.5 and pair_order >= 0.9
    report("criterion 9 (grid convergence)", ok,
           f"phi(0) order {phi_order:.2f} (>= 3.5), (eta, chi) order {pair_order:.2f} (>= 0.9)")
