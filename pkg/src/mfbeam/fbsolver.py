"""Coupled forward mean / backward costate solver.

The mean eta runs forward from the initial mean while the costate chi runs
backward from a terminal tie to eta, so the pair is a two-point boundary
problem. Explicit-Euler stencils pack the whole trajectory into one affine
fixed-point system

    [eta; chi] = Sigma [eta; chi] + Pi

whose unique fixed point (when I - Sigma is nonsingular) is the discrete
solution. Three solvers are provided: a damped fixed-point iteration that
alternates an exact forward sweep for eta with an exact backward sweep for
chi (so the boundary rows hold exactly at every iterate), a Newton iteration
on the affine residual F(x) = x - Sigma x - Pi (one step is exact up to
linear-solve error), and the dense direct solve used as an oracle.

Competitive (Nash) and cooperative (social-optimum) variants differ only in
the costate coupling coefficients; the cooperative costate drift carries the
extra Gamma' term that internalizes the population externality, without which
the cooperative pair fails every independent social-cost check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import NoConvergence, SingularSystem
from .model import MfProblem, TimeGrid
from .riccati import RiccatiSolution, solve_riccati, solve_zeta


class Variant(enum.Enum):
    """Competitive equilibrium (MFG) or cooperative social optimum (MFC)."""

    MFG = "mfg"
    MFC = "mfc"


class SolveMethod(enum.Enum):
    FIXED_POINT = "fixed-point"
    NEWTON = "newton"


@dataclass
class DiscreteSystem:
    """Affine system [eta; chi] = Sigma [eta; chi] + Pi on the grid.

    Layout: the unknown stacks eta_0..eta_VT then chi_0..chi_VT, each block of
    size n. The eta_0 rows are identity-free (Pi carries the initial mean) and
    the chi_VT rows tie the terminal costate to eta_VT.
    """

    Sigma: np.ndarray
    Pi: np.ndarray
    grid: TimeGrid
    variant: Variant
    n: int

    def eta_slice(self, v: int) -> slice:
        return slice(v * self.n, (v + 1) * self.n)

    def chi_slice(self, v: int) -> slice:
        off = self.n * self.grid.n_nodes
        return slice(off + v * self.n, off + (v + 1) * self.n)

    def unpack(self, x: np.ndarray):
        half = self.n * self.grid.n_nodes
        eta = x[:half].reshape(self.grid.n_nodes, self.n)
        chi = x[half:].reshape(self.grid.n_nodes, self.n)
        return eta, chi

    def pack(self, eta: np.ndarray, chi: np.ndarray) -> np.ndarray:
        return np.concatenate([eta.ravel(), chi.ravel()])

    def residual_norm(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.Sigma @ x - self.Pi))


@dataclass
class MeanFieldPair:
    """Solved (eta, chi) trajectories with the solver's convergence record."""

    eta: np.ndarray
    chi: np.ndarray
    residual: float
    convergence: np.ndarray
    iterations: int
    method: SolveMethod
    radius_estimate: Optional[float] = None


class MeanFieldSolution(NamedTuple):
    """Complete solution tuple: value coefficients plus the mean-field pair."""

    riccati: RiccatiSolution
    pair: MeanFieldPair


def chi_coupling(variant: Variant, p: MfProblem, phi_v: np.ndarray):
    """Coefficients (M_chi, M_eta) of -dchi/dt = M_chi chi + M_eta eta at one node.

    Competitive: M_chi = A' - phi B R^-1 B',         M_eta = phi Gamma - Qbar S.
    Cooperative: M_chi = A' + Gamma' - phi B R^-1 B',
                 M_eta = -Qbar S - S' Qbar + Gamma' phi + phi Gamma + S' Qbar S.
    """
    BRB = p.B @ np.linalg.solve(p.R, p.B.T)
    M_chi = p.A.T - phi_v @ BRB
    if variant is Variant.MFG:
        M_eta = phi_v @ p.Gamma - p.Qbar @ p.S
    else:
        M_chi = M_chi + p.Gamma.T
        M_eta = (-p.Qbar @ p.S - p.S.T @ p.Qbar
                 + p.Gamma.T @ phi_v + phi_v @ p.Gamma
                 + p.S.T @ p.Qbar @ p.S)
    return M_chi, M_eta


def assemble(p: MfProblem, phi: np.ndarray, variant: Variant,
             terminal_coupling: Optional[np.ndarray] = None) -> DiscreteSystem:
    """Pack the explicit-Euler forward/backward stencils into (Sigma, Pi).

    Forward rows: eta_{v+1} = eta_v + dt [(A + Gamma - B R^-1 B' phi_v) eta_v
    - B R^-1 B' chi_v]. Backward rows: chi_{v-1} = chi_v + dt [M_chi(v) chi_v
    + M_eta(v) eta_v]. Boundary rows: eta_0 = x0_mean, chi_VT =
    -terminal_coupling eta_VT (default Qbar_T S_T).
    """
    VT = p.grid.subintervals
    dt = p.grid.dt
    n = p.n
    dim = 2 * n * (VT + 1)
    BRB = p.B @ np.linalg.solve(p.R, p.B.T)
    tie = p.Qbar_T @ p.S_T if terminal_coupling is None else np.asarray(terminal_coupling, dtype=float)

    sys = DiscreteSystem(Sigma=np.zeros((dim, dim)), Pi=np.zeros(dim),
                         grid=p.grid, variant=variant, n=n)
    I_n = np.eye(n)
    sys.Pi[sys.eta_slice(0)] = p.x0_mean
    for v in range(VT):
        sys.Sigma[sys.eta_slice(v + 1), sys.eta_slice(v)] = \
            I_n + dt * (p.A + p.Gamma - BRB @ phi[v])
        sys.Sigma[sys.eta_slice(v + 1), sys.chi_slice(v)] = -dt * BRB
    sys.Sigma[sys.chi_slice(VT), sys.eta_slice(VT)] = -tie
    for v in range(VT, 0, -1):
        M_chi, M_eta = chi_coupling(variant, p, phi[v])
        sys.Sigma[sys.chi_slice(v - 1), sys.chi_slice(v)] = I_n + dt * M_chi
        sys.Sigma[sys.chi_slice(v - 1), sys.eta_slice(v)] = dt * M_eta
    return sys


def _sweep(sys: DiscreteSystem, eta: np.ndarray, chi: np.ndarray):
    """One alternating pass: exact forward eta solve, then exact backward chi solve."""
    VT = sys.grid.subintervals
    Sg, Pi = sys.Sigma, sys.Pi
    new_eta = np.empty_like(eta)
    new_chi = np.empty_like(chi)
    new_eta[0] = Pi[sys.eta_slice(0)]
    for v in range(VT):
        row = sys.eta_slice(v + 1)
        new_eta[v + 1] = (Sg[row, sys.eta_slice(v)] @ new_eta[v]
                          + Sg[row, sys.chi_slice(v)] @ chi[v]
                          + Pi[row])
    row = sys.chi_slice(VT)
    new_chi[VT] = Sg[row, sys.eta_slice(VT)] @ new_eta[VT] + Pi[row]
    for v in range(VT, 0, -1):
        row = sys.chi_slice(v - 1)
        new_chi[v - 1] = (Sg[row, sys.chi_slice(v)] @ new_chi[v]
                          + Sg[row, sys.eta_slice(v)] @ new_eta[v]
                          + Pi[row])
    return new_eta, new_chi


def solve_fixed_point(sys: DiscreteSystem, damping: float = 0.5,
                      tol: float = 1e-8, max_iter: int = 500) -> MeanFieldPair:
    """Damped fixed-point iteration, starting from the iterate x0 = Pi.

    Each iteration applies one alternating forward/backward sweep G and damps:
    x <- (1 - damping) x + damping G(x). The sweeps solve each one-directional
    chain exactly, so eta_0 and the terminal chi tie hold at every iterate.
    Stops when the Euclidean norm of consecutive iterate differences drops to
    tol; the recorded per-iteration differences are the convergence curve.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    eta, chi = sys.unpack(sys.Pi.copy())
    diffs = []
    for _ in range(max_iter):
        swept_eta, swept_chi = _sweep(sys, eta, chi)
        next_eta = (1.0 - damping) * eta + damping * swept_eta
        next_chi = (1.0 - damping) * chi + damping * swept_chi
        d = float(np.sqrt(np.linalg.norm(next_eta - eta) ** 2
                          + np.linalg.norm(next_chi - chi) ** 2))
        diffs.append(d)
        eta, chi = next_eta, next_chi
        if d <= tol:
            pair = _finish_pair(sys, eta, chi, diffs, SolveMethod.FIXED_POINT)
            return pair
        if d == 0.0:
            # exact stagnation above tol: the damped map made no progress
            raise SingularSystem("fixed-point iteration stagnated with zero update "
                                 f"at residual {sys.residual_norm(sys.pack(eta, chi)):.3e}")
    pair = _finish_pair(sys, eta, chi, diffs, SolveMethod.FIXED_POINT)
    raise NoConvergence(f"fixed-point did not reach tol={tol} in {max_iter} iterations "
                        f"(last diff {diffs[-1]:.3e})", pair=pair)


def _finish_pair(sys, eta, chi, diffs, method) -> MeanFieldPair:
    diffs = np.asarray(diffs)
    radius = None
    if method is SolveMethod.FIXED_POINT and len(diffs) >= 6:
        tail = diffs[max(3, len(diffs) - 20):]
        ratios = tail[1:] / tail[:-1]
        ratios = ratios[np.isfinite(ratios) & (ratios > 0)]
        if len(ratios):
            radius = float(np.median(ratios))
    return MeanFieldPair(eta=eta, chi=chi,
                         residual=sys.residual_norm(sys.pack(eta, chi)),
                         convergence=diffs, iterations=len(diffs), method=method,
                         radius_estimate=radius)


def solve_newton(sys: DiscreteSystem, tol: float = 1e-8,
                 max_iter: int = 500) -> MeanFieldPair:
    """Newton iteration on F(x) = x - Sigma x - Pi with constant Jacobian I - Sigma.

    F is affine, so the first step lands on the solution up to linear-solve
    error; further steps only polish. Raises SingularSystem (with a condition
    estimate) when I - Sigma cannot be factored.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.eye(len(sys.Pi)) - sys.Sigma
    x = sys.Pi.copy()
    diffs = []
    for _ in range(max_iter):
        F = A @ x - sys.Pi
        try:
            step = np.linalg.solve(A, F)
        except np.linalg.LinAlgError:
            cond = float(np.linalg.cond(A))
            raise SingularSystem(f"I - Sigma is singular to working precision "
                                 f"(condition estimate {cond:.3e})",
                                 condition_estimate=cond) from None
        x = x - step
        d = float(np.linalg.norm(step))
        diffs.append(d)
        if d <= tol:
            eta, chi = sys.unpack(x)
            return _finish_pair(sys, eta, chi, diffs, SolveMethod.NEWTON)
    eta, chi = sys.unpack(x)
    pair = _finish_pair(sys, eta, chi, diffs, SolveMethod.NEWTON)
    raise NoConvergence(f"Newton did not reach tol={tol} in {max_iter} iterations",
                        pair=pair)


def solve_dense(sys: DiscreteSystem) -> MeanFieldPair:
    """Direct dense solve of (I - Sigma) x = Pi; the oracle both iterations chase."""
    A = np.eye(len(sys.Pi)) - sys.Sigma
    try:
        x = np.linalg.solve(A, sys.Pi)
    except np.linalg.LinAlgError:
        cond = float(np.linalg.cond(A))
        raise SingularSystem(f"I - Sigma is singular to working precision "
                             f"(condition estimate {cond:.3e})",
                             condition_estimate=cond) from None
    eta, chi = sys.unpack(x)
    return _finish_pair(sys, eta, chi, [0.0], SolveMethod.NEWTON)


def solve_mean_field(p: MfProblem, variant: Variant,
                     method: SolveMethod = SolveMethod.NEWTON,
                     damping: float = 0.5, tol: float = 1e-8,
                     max_iter: int = 500,
                     terminal_coupling: Optional[np.ndarray] = None) -> MeanFieldSolution:
    """Full pipeline: Riccati, stencil assembly, pair solve, value offset."""
    phi = solve_riccati(p)
    sys = assemble(p, phi, variant, terminal_coupling=terminal_coupling)
    if method is SolveMethod.FIXED_POINT:
        pair = solve_fixed_point(sys, damping=damping, tol=tol, max_iter=max_iter)
    else:
        pair = solve_newton(sys, tol=tol, max_iter=max_iter)
    zeta = solve_zeta(p, phi, pair.eta, pair.chi)
    return MeanFieldSolution(riccati=RiccatiSolution(phi=phi, zeta=zeta), pair=pair)


def feedback_control(phi_v: np.ndarray, chi_v: np.ndarray, p: MfProblem,
                     x: np.ndarray) -> np.ndarray:
    """Optimal feedback u = -R^-1 B' (phi_v x + chi_v)."""
    return -np.linalg.solve(p.R, p.B.T @ (phi_v @ np.asarray(x, dtype=float) + chi_v))
