"""Euler-Maruyama Monte-Carlo simulation of the N-agent closed loop.

Every agent runs the solved feedback law while being coupled to the others
through the exclusive average (1/(N-1)) sum_{i != k} x^i -- the finite-N
object the mean-field trajectory approximates, which is exactly what the
ensemble is for: measuring how far the empirical mean sits from the solved
mean path, at the O(1/sqrt(N)) rate.

Randomness is reproducible under any execution order: agent k draws its
initial state and its whole Wiener-increment block from a dedicated Philox
stream keyed by (seed, k), so re-running with the same (seed, N) is
bit-identical and permuting agent streams permutes the output paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, GridMismatch, InsufficientAgents
from .fbsolver import MeanFieldSolution
from .model import MfProblem, OpticalLink, TimeGrid, trajectory_l2_norm

BLOWUP_LIMIT = 1e12


@dataclass
class Ensemble:
    """Simulated agent paths with their applied controls and seed provenance."""

    paths: np.ndarray          # (N, n_nodes, n)
    control_paths: np.ndarray  # (N, n_nodes, m)
    seed: int
    grid: TimeGrid

    @property
    def n_agents(self) -> int:
        return self.paths.shape[0]


def _initial_scale(sigma0: np.ndarray) -> np.ndarray:
    """Factor L with L L' = sigma0, valid for singular covariances."""
    vals, vecs = np.linalg.eigh(sigma0)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


def _agent_streams(seed: int, N: int):
    return [np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=seed, spawn_key=(k,)))) for k in range(N)]


def integrate_paths(p: MfProblem, phi: np.ndarray, chi: np.ndarray,
                    initial_states: np.ndarray, increments: np.ndarray):
    """Euler-Maruyama rollout of all agents from given randomness.

    ``increments`` holds standard-normal draws of shape (N, V_T, q); the
    deterministic core of simulate_ensemble, exposed so exchangeability and
    noise-free behavior can be exercised directly.
    """
    N = initial_states.shape[0]
    if N < 2:
        raise InsufficientAgents("need at least 2 agents for the exclusive average")
    VT = p.grid.subintervals
    dt = p.grid.dt
    sqdt = np.sqrt(dt)
    gain = np.linalg.solve(p.R, p.B.T)  # (m, n)

    X = np.empty((N, VT + 1, p.n))
    U = np.empty((N, VT + 1, p.m))
    X[:, 0, :] = initial_states
    for v in range(VT):
        x = X[:, v, :]
        u = -(x @ phi[v].T + chi[v]) @ gain.T
        U[:, v, :] = u
        totals = x.sum(axis=0)
        avg_ex = (totals[None, :] - x) / (N - 1)
        drift = x @ p.A.T + u @ p.B.T + avg_ex @ p.Gamma.T
        X[:, v + 1, :] = x + dt * drift + sqdt * increments[:, v, :] @ p.D.T
        if not np.all(np.isfinite(X[:, v + 1, :])) or np.max(np.abs(X[:, v + 1, :])) > BLOWUP_LIMIT:
            raise BlowUp(f"ensemble state escaped at grid index {v + 1}", grid_index=v + 1)
    U[:, VT, :] = -(X[:, VT, :] @ phi[VT].T + chi[VT]) @ gain.T
    return X, U


def simulate_ensemble(p: MfProblem, sol: MeanFieldSolution, N: int,
                      seed: int) -> Ensemble:
    """Simulate N agents under the solved feedback law.

    Initial states are independent draws from N(x0_mean, sigma0); Wiener
    increments are sqrt(dt)-scaled standard normals, one independent stream
    per agent split from the master seed.
    """
    if N < 2:
        raise InsufficientAgents(f"need at least 2 agents, got {N}")
    VT = p.grid.subintervals
    q = p.D.shape[1]
    L = _initial_scale(p.sigma0)
    streams = _agent_streams(seed, N)
    initial = np.empty((N, p.n))
    increments = np.empty((N, VT, q))
    for k, gen in enumerate(streams):
        initial[k] = p.x0_mean + L @ gen.standard_normal(p.n)
        increments[k] = gen.standard_normal((VT, q))
    X, U = integrate_paths(p, sol.riccati.phi, sol.pair.chi, initial, increments)
    return Ensemble(paths=X, control_paths=U, seed=seed, grid=p.grid)


def empirical_mean(e: Ensemble) -> np.ndarray:
    """Per-node arithmetic mean over agents (inclusive average), (n_nodes, n)."""
    return e.paths.mean(axis=0)


def mean_consistency_error(e: Ensemble, eta: np.ndarray) -> float:
    """L2 distance between the ensemble's empirical mean and the solved mean path."""
    eta = np.asarray(eta, dtype=float)
    mean = empirical_mean(e)
    if eta.shape != mean.shape:
        raise GridMismatch(f"mean path shape {eta.shape} does not match "
                           f"ensemble grid shape {mean.shape}")
    return trajectory_l2_norm(e.grid, mean - eta)


@dataclass
class TrackingSeries:
    """Per-agent tracking-error output and link-quality series."""

    theta: np.ndarray        # (N, n_nodes, channels)
    attenuation: np.ndarray  # (N, n_nodes), partner-induced power attenuation
    intensity: np.ndarray    # (N, n_nodes), on-axis received intensity (W/m^2)


def tracking_timeseries(e: Ensemble, p: MfProblem, link: OpticalLink) -> TrackingSeries:
    """Tracking errors theta = C x plus attenuation and on-axis intensity.

    Attenuation of what agent k receives is driven by the tracking error of
    its designated partner; agents are paired on a ring (k with k+1, the last
    with the first). Intensity is evaluated at the detector center, where the
    spot sits offset by focal_length * theta_self.
    """
    theta = e.paths @ p.C.T
    N = theta.shape[0]
    partner = (np.arange(N) + 1) % N
    norm2_partner = (theta[partner] ** 2).sum(axis=2)
    attenuation = np.exp(-2.0 * norm2_partner / link.divergence ** 2)
    s2 = link.spot_sigma ** 2
    own_offset2 = (link.focal_length ** 2) * (theta ** 2).sum(axis=2)
    spot = np.exp(-0.5 * own_offset2 / s2) / (2.0 * np.pi * s2)
    intensity = link.power * attenuation * spot
    return TrackingSeries(theta=theta, attenuation=attenuation, intensity=intensity)
