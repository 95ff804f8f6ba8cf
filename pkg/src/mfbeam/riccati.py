"""Backward integration of the matrix Riccati equation and the scalar value offset.

The quadratic value coefficient phi solves, backward from phi(T) = Q_T + Qbar_T,

    -dphi/dt = A' phi + phi A - phi B R^-1 B' phi + Q + Qbar,

independently of the mean-field pair. The scalar offset zeta collects the
noise, coupling and mean-tracking contributions to the value function,
backward from zeta(T) = 0.5 eta_T' S_T' Qbar_T S_T eta_T:

    zeta(t) = zeta(T) + int_t^T [ tr(rho phi) - 0.5 chi' B R^-1 B' chi
                                  + chi' Gamma eta + 0.5 eta' S' Qbar S eta ] ds.

Both use classical fourth-order Runge-Kutta with the problem's fixed step;
phi is symmetrized after every step so Cholesky-based consumers stay happy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUp
from .model import MfProblem

BLOWUP_LIMIT = 1e12


@dataclass
class RiccatiSolution:
    """Grid-indexed value coefficients: phi[v] is n x n, zeta[v] scalar."""

    phi: np.ndarray
    zeta: np.ndarray


def _check_finite(M: np.ndarray, v: int, what: str) -> None:
    if not np.all(np.isfinite(M)) or np.max(np.abs(M)) > BLOWUP_LIMIT:
        raise BlowUp(f"{what} escaped at grid index {v}", grid_index=v)


def solve_riccati(p: MfProblem) -> np.ndarray:
    """Integrate the matrix Riccati equation backward; returns (V_T+1, n, n) array."""
    VT = p.grid.subintervals
    dt = p.grid.dt
    n = p.n
    BRB = p.B @ np.linalg.solve(p.R, p.B.T)
    QQ = p.Q + p.Qbar

    def rhs(ph):
        # value of -dphi/dt at the given phi
        return p.A.T @ ph + ph @ p.A - ph @ BRB @ ph + QQ

    phi = np.empty((VT + 1, n, n))
    phi[VT] = p.Q_T + p.Qbar_T
    for v in range(VT, 0, -1):
        ph = phi[v]
        k1 = rhs(ph)
        k2 = rhs(ph + 0.5 * dt * k1)
        k3 = rhs(ph + 0.5 * dt * k2)
        k4 = rhs(ph + dt * k3)
        nxt = ph + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        phi[v - 1] = 0.5 * (nxt + nxt.T)
        _check_finite(phi[v - 1], v - 1, "Riccati trajectory")
    return phi


def solve_zeta(p: MfProblem, phi: np.ndarray, eta: np.ndarray,
               chi: np.ndarray) -> np.ndarray:
    """Integrate the value-offset ODE backward along given (phi, eta, chi).

    The integrand is evaluated at half-steps by linear interpolation of the
    grid trajectories; with a state-independent right-hand side the RK4 step
    reduces to Simpson's rule.
    """
    VT = p.grid.subintervals
    dt = p.grid.dt
    BRB = p.B @ np.linalg.solve(p.R, p.B.T)
    SQS = p.S.T @ p.Qbar @ p.S

    def integrand(ph, e, c):
        return (float(np.trace(p.rho @ ph))
                - 0.5 * float(c @ BRB @ c)
                + float(c @ p.Gamma @ e)
                + 0.5 * float(e @ SQS @ e))

    zeta = np.empty(VT + 1)
    eT = eta[VT]
    zeta[VT] = 0.5 * float(eT @ (p.S_T.T @ p.Qbar_T @ p.S_T) @ eT)
    for v in range(VT, 0, -1):
        f_hi = integrand(phi[v], eta[v], chi[v])
        f_mid = integrand(0.5 * (phi[v] + phi[v - 1]),
                          0.5 * (eta[v] + eta[v - 1]),
                          0.5 * (chi[v] + chi[v - 1]))
        f_lo = integrand(phi[v - 1], eta[v - 1], chi[v - 1])
        zeta[v - 1] = zeta[v] + dt * (f_hi + 4.0 * f_mid + f_lo) / 6.0
        if not np.isfinite(zeta[v - 1]) or abs(zeta[v - 1]) > BLOWUP_LIMIT:
            raise BlowUp(f"value offset escaped at grid index {v - 1}", grid_index=v - 1)
    return zeta
