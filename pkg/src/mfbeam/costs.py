"""Payoff evaluation: value function, analytic payoffs, empirical costs, PoA.

The competitive payoff is the expected value function under the initial law,

    J_mfg = 0.5 tr(phi_0 sigma0) + 0.5 x0' phi_0 x0 + x0' chi_0 + zeta_0,

and the cooperative payoff adds the corrections that separate the social
optimum from a per-agent value evaluation:

    J_mfc = J_mfg-form(phi, chi, zeta of the cooperative pair)
            + eta_T' (I - S_T) Qbar_T S_T eta_T
            - int_0^T [ (phi eta + chi)' Gamma eta - eta' (I - S) Qbar S eta ] dt.

Both are cross-checked in the test suite against an independent
rollout-plus-covariance evaluator and against Monte-Carlo ensemble costs.
The price of anarchy is their ratio; the tracking-error variant of the table
conjugates every state weight through the output map and re-solves.

The deterministic-mean machinery (cost quadrature, exact discrete optimizer by
dynamic programming) supports the variational optimality check: perturbing the
optimizer of the discretized mean problem can only increase its cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InsufficientAgents, NonPositiveDenominator
from .fbsolver import MeanFieldSolution, Variant
from .model import MfProblem


def value_function(x: np.ndarray, v: int, phi: np.ndarray, chi: np.ndarray,
                   zeta: np.ndarray) -> float:
    """Quadratic value 0.5 x' phi_v x + x' chi_v + zeta_v at grid node v."""
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ phi[v] @ x + x @ chi[v] + zeta[v])


def mfg_payoff(sol: MeanFieldSolution, p: MfProblem) -> float:
    """Minimal expected competitive payoff: E[value at t=0] under N(x0, sigma0)."""
    phi0 = sol.riccati.phi[0]
    x0 = p.x0_mean
    return float(0.5 * np.trace(phi0 @ p.sigma0) + 0.5 * x0 @ phi0 @ x0
                 + x0 @ sol.pair.chi[0] + sol.riccati.zeta[0])


def mfc_payoff(sol: MeanFieldSolution, p: MfProblem) -> float:
    """Minimal expected social payoff evaluated on the cooperative solution."""
    base = mfg_payoff(sol, p)
    return base + _mfc_terminal_correction(sol, p) - _mfc_correction_integral(sol, p)


def _mfc_terminal_correction(sol: MeanFieldSolution, p: MfProblem) -> float:
    eta_T = sol.pair.eta[-1]
    I = np.eye(p.n)
    return float(eta_T @ (I - p.S_T) @ p.Qbar_T @ p.S_T @ eta_T)


def _mfc_correction_integral(sol: MeanFieldSolution, p: MfProblem) -> float:
    eta, chi, phi = sol.pair.eta, sol.pair.chi, sol.riccati.phi
    I = np.eye(p.n)
    M = (I - p.S) @ p.Qbar @ p.S
    integrand = (np.einsum("vi,vi->v", np.einsum("vij,vj->vi", phi, eta) + chi,
                           eta @ p.Gamma.T)
                 - np.einsum("vi,vi->v", eta, eta @ M.T))
    return float(p.grid.trapezoid_weights() @ integrand)


@dataclass
class PayoffReport:
    """Competitive and cooperative payoffs with their ratio and named pieces."""

    j_mfg: float
    j_mfc: float
    poa: float
    breakdown: dict = field(default_factory=dict)


def payoff_report(p: MfProblem, mfg_sol: MeanFieldSolution,
                  mfc_sol: MeanFieldSolution) -> PayoffReport:
    """Assemble the payoff pair, its ratio and the term-by-term breakdown."""
    j_mfg = mfg_payoff(mfg_sol, p)
    j_mfc = mfc_payoff(mfc_sol, p)
    x0 = p.x0_mean
    breakdown = {
        "quadratic_initial": float(0.5 * np.trace(mfg_sol.riccati.phi[0] @ p.sigma0)
                                   + 0.5 * x0 @ mfg_sol.riccati.phi[0] @ x0),
        "mfg_chi_initial": float(x0 @ mfg_sol.pair.chi[0]),
        "mfg_zeta_initial": float(mfg_sol.riccati.zeta[0]),
        "mfc_chi_initial": float(x0 @ mfc_sol.pair.chi[0]),
        "mfc_zeta_initial": float(mfc_sol.riccati.zeta[0]),
        "mfc_correction_integral": -_mfc_correction_integral(mfc_sol, p),
        "mfc_terminal_correction": _mfc_terminal_correction(mfc_sol, p),
    }
    return PayoffReport(j_mfg=j_mfg, j_mfc=j_mfc,
                        poa=price_of_anarchy(j_mfg, j_mfc), breakdown=breakdown)


def price_of_anarchy(j_mfg: float, j_mfc: float) -> float:
    """Ratio of the competitive cost to the cooperative optimum; >= 1 in theory."""
    if not j_mfc > 0:
        raise NonPositiveDenominator(f"cooperative payoff must be positive, got {j_mfc}")
    return float(j_mfg) / float(j_mfc)


def conjugate_weights_by_output(p: MfProblem) -> MfProblem:
    """Re-weight the problem on the tracking error: M -> C'(C M C')C.

    Applied to Q, Qbar, Q_T and Qbar_T; dynamics, control weight and mean maps
    are unchanged. Solving the re-weighted problem gives the tracking-error
    column of the price-of-anarchy table.
    """
    C = p.C

    def conj(M):
        return C.T @ (C @ M @ C.T) @ C

    return p.with_weights(Q=conj(p.Q), Qbar=conj(p.Qbar),
                          Q_T=conj(p.Q_T), Qbar_T=conj(p.Qbar_T))


# ---------------------------------------------------------------------------
# Empirical (finite-N) cost of a simulated ensemble
# ---------------------------------------------------------------------------

@dataclass
class CostEstimate:
    """Sample mean of realized costs with its standard error."""

    mean: float
    stderr: float
    n_samples: int
    values: np.ndarray


def _per_agent_costs(ensemble, p: MfProblem) -> np.ndarray:
    """Realized cost of every agent in one ensemble (trapezoid in time)."""
    X = ensemble.paths
    U = ensemble.control_paths
    N = X.shape[0]
    if N < 2:
        raise InsufficientAgents("the exclusive average needs at least 2 agents")
    w = p.grid.trapezoid_weights()
    totals = X.sum(axis=0)  # (nodes, n)
    avg_ex = (totals[None, :, :] - X) / (N - 1)
    dev = X - avg_ex @ p.S.T
    run = 0.5 * (np.einsum("kvi,ij,kvj->kv", X, p.Q, X)
                 + np.einsum("kvi,ij,kvj->kv", U, p.R, U)
                 + np.einsum("kvi,ij,kvj->kv", dev, p.Qbar, dev))
    J = run @ w
    xT = X[:, -1, :]
    devT = xT - avg_ex[:, -1, :] @ p.S_T.T
    J += 0.5 * (np.einsum("ki,ij,kj->k", xT, p.Q_T, xT)
                + np.einsum("ki,ij,kj->k", devT, p.Qbar_T, devT))
    return J


def empirical_cost(ensembles, p: MfProblem,
                   mode: Union[int, str] = "social") -> CostEstimate:
    """Evaluate the realized cost functional on simulated ensembles.

    ``mode`` is either an agent index (that agent's individual cost, exclusive
    average over the others) or "social" (average over agents). Each ensemble
    contributes one realization; the estimate is their sample mean with the
    standard error across realizations (nan for a single ensemble).
    """
    if hasattr(ensembles, "paths"):
        ensembles = [ensembles]
    values = []
    for e in ensembles:
        per_agent = _per_agent_costs(e, p)
        if mode == "social":
            values.append(float(per_agent.mean()))
        else:
            values.append(float(per_agent[int(mode)]))
    values = np.asarray(values)
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else float("nan")
    return CostEstimate(mean=float(values.mean()), stderr=stderr,
                        n_samples=len(values), values=values)


# ---------------------------------------------------------------------------
# Deterministic mean system: cost quadrature and its exact discrete optimizer
# ---------------------------------------------------------------------------

def deterministic_mean_cost(p: MfProblem, variant: Variant, controls: np.ndarray,
                            eta_ref: Optional[np.ndarray] = None) -> float:
    """Cost of an open-loop control on the noise-free mean system.

    Cooperative: the state is the population mean itself, so the coupling and
    the deviation reference are the rolled-out state. Competitive: the agent
    best-responds to the frozen reference trajectory ``eta_ref``.
    Euler rollout and trapezoid quadrature on the problem grid; the control at
    the final node enters the quadrature only.
    """
    VT = p.grid.subintervals
    dt = p.grid.dt
    u = np.asarray(controls, dtype=float)
    if u.shape != (VT + 1, p.m):
        raise ValueError(f"controls must have shape {(VT + 1, p.m)}, got {u.shape}")
    if variant is Variant.MFG:
        if eta_ref is None:
            raise ValueError("the competitive mean cost needs eta_ref")
        ref = np.asarray(eta_ref, dtype=float)
    x = np.empty((VT + 1, p.n))
    x[0] = p.x0_mean
    for v in range(VT):
        coupling = x[v] if variant is Variant.MFC else ref[v]
        x[v + 1] = x[v] + dt * (p.A @ x[v] + p.B @ u[v] + p.Gamma @ coupling)
    refs = x if variant is Variant.MFC else ref
    dev = x - refs @ p.S.T
    run = 0.5 * (np.einsum("vi,ij,vj->v", x, p.Q, x)
                 + np.einsum("vi,ij,vj->v", u, p.R, u)
                 + np.einsum("vi,ij,vj->v", dev, p.Qbar, dev))
    J = float(p.grid.trapezoid_weights() @ run)
    devT = x[VT] - p.S_T @ refs[VT]
    J += float(0.5 * (x[VT] @ p.Q_T @ x[VT] + devT @ p.Qbar_T @ devT))
    return J


def optimal_mean_control(p: MfProblem, variant: Variant,
                         eta_ref: Optional[np.ndarray] = None):
    """Exact minimizer of deterministic_mean_cost by discrete dynamic programming.

    Solves the discretized problem itself (Euler dynamics, trapezoid weights),
    so the returned control is optimal to machine precision for that cost --
    the object the control-perturbation optimality check perturbs. Returns
    (controls, states) on the grid; the final-node control is zero since it
    no longer influences the state.
    """
    VT = p.grid.subintervals
    dt = p.grid.dt
    n, m = p.n, p.m
    w = p.grid.trapezoid_weights()
    I = np.eye(n)
    Bd = dt * p.B
    if variant is Variant.MFC:
        Ad = I + dt * (p.A + p.Gamma)
        Qe = p.Q + (I - p.S).T @ p.Qbar @ (I - p.S)
        QeT = p.Q_T + (I - p.S_T).T @ p.Qbar_T @ (I - p.S_T)
        P = QeT + w[VT] * Qe
        gains = np.empty((VT, m, n))
        for v in range(VT - 1, -1, -1):
            H = w[v] * p.R + Bd.T @ P @ Bd
            K = np.linalg.solve(H, Bd.T @ P @ Ad)
            P = w[v] * Qe + Ad.T @ P @ (Ad - Bd @ K)
            P = 0.5 * (P + P.T)
            gains[v] = K
        x = np.empty((VT + 1, n))
        u = np.zeros((VT + 1, m))
        x[0] = p.x0_mean
        for v in range(VT):
            u[v] = -gains[v] @ x[v]
            x[v + 1] = Ad @ x[v] + Bd @ u[v]
        return u, x

    if eta_ref is None:
        raise ValueError("the competitive best response needs eta_ref")
    ref = np.asarray(eta_ref, dtype=float)
    Ad = I + dt * p.A
    Qx = p.Q + p.Qbar
    P = p.Q_T + p.Qbar_T + w[VT] * Qx
    q = -(p.Qbar_T @ p.S_T @ ref[VT]) - w[VT] * (p.Qbar @ p.S @ ref[VT])
    gains = np.empty((VT, m, n))
    offsets = np.empty((VT, m))
    for v in range(VT - 1, -1, -1):
        c = dt * p.Gamma @ ref[v]
        H = w[v] * p.R + Bd.T @ P @ Bd
        K = np.linalg.solve(H, Bd.T @ P @ Ad)
        k = np.linalg.solve(H, Bd.T @ (P @ c + q))
        q = -w[v] * (p.Qbar @ p.S @ ref[v]) + (Ad - Bd @ K).T @ (P @ c + q)
        P = w[v] * Qx + Ad.T @ P @ (Ad - Bd @ K)
        P = 0.5 * (P + P.T)
        gains[v] = K
        offsets[v] = k
    x = np.empty((VT + 1, n))
    u = np.zeros((VT + 1, m))
    x[0] = p.x0_mean
    for v in range(VT):
        u[v] = -gains[v] @ x[v] - offsets[v]
        x[v + 1] = Ad @ x[v] + Bd @ u[v] + dt * p.Gamma @ ref[v]
    return u, x
