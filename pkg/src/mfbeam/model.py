"""Problem definition: optical link geometry, subsystem blocks, augmented dynamics.

An agent is an optical transceiver head on a vibrating platform. Its pointing
assembly (controlled, coupled to the population through a mean term) and the
line of sight to its partner (uncontrolled) are linear SDE blocks; stacking
them gives the augmented state

    dx = [A x + B u + Gamma x_avg] dt + D dW,     theta = C x,

where ``theta`` is the beam tracking error (transceiver axis angles minus
line-of-sight angles) and ``x_avg`` is the exclusive average over the other
agents. Received optical intensity decays with the partner's tracking error
through exp(-2 |theta_opp|^2 / divergence^2) and is spread over the detector
plane by a unit-integral Gaussian spot.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AsymmetricWeight, BadGrid, DimensionMismatch, NotPositiveDefinite

SYMMETRY_REPAIR_TOL = 1e-10
RHO_CONSISTENCY_TOL = 1e-12
PSD_EIG_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into ``subintervals`` steps."""

    horizon: float
    subintervals: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise BadGrid(f"horizon must be positive, got {self.horizon}")
        if int(self.subintervals) != self.subintervals or self.subintervals < 2:
            raise BadGrid(f"need at least 2 subintervals, got {self.subintervals}")

    @property
    def dt(self) -> float:
        return self.horizon / self.subintervals

    @property
    def n_nodes(self) -> int:
        return self.subintervals + 1

    def points(self) -> np.ndarray:
        """Grid nodes t_v = v * dt, v = 0..subintervals."""
        return np.linspace(0.0, self.horizon, self.n_nodes)

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights for the trapezoid rule on the grid."""
        w = np.full(self.n_nodes, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def trajectory_l2_norm(grid: TimeGrid, *components: np.ndarray) -> float:
    """L2 norm over [0, T] (trapezoid in time, Euclidean in state).

    Each component is a (n_nodes, k) or (n_nodes,) array; squared norms add.
    """
    w = grid.trapezoid_weights()
    total = 0.0
    for arr in components:
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.shape[0] != grid.n_nodes:
            raise DimensionMismatch(
                f"trajectory has {a.shape[0]} nodes, grid has {grid.n_nodes}")
        total += float(w @ (a ** 2).sum(axis=1))
    return float(np.sqrt(total))


@dataclass(frozen=True)
class PointingSystem:
    """Pointing-assembly block: dx = [A x + Gamma x_avg + B u] dt + D dW, alpha = C x."""

    A: np.ndarray
    Gamma: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "Gamma", "B", "C", "D"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = _as_square(self.A, "pointing A")
        for name, rows in (("Gamma", n), ("B", n), ("C", None), ("D", n)):
            M = getattr(self, name)
            if not np.all(np.isfinite(M)):
                raise DimensionMismatch(f"pointing {name} has non-finite entries")
            if rows is not None and M.shape[0] != rows:
                raise DimensionMismatch(
                    f"pointing {name} has {M.shape[0]} rows, expected {rows}")
        if self.Gamma.shape != (n, n):
            raise DimensionMismatch("pointing Gamma must be square, same size as A")
        if self.C.shape[1] != n:
            raise DimensionMismatch("pointing C column count must match state size")

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class LosSystem:
    """Line-of-sight block: dx = A x dt + D dW, beta = C x (uncontrolled)."""

    A: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "C", "D"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = _as_square(self.A, "LoS A")
        if self.D.shape[0] != n:
            raise DimensionMismatch("LoS D row count must match state size")
        if self.C.shape[1] != n:
            raise DimensionMismatch("LoS C column count must match state size")
        for M in (self.A, self.C, self.D):
            if not np.all(np.isfinite(M)):
                raise DimensionMismatch("LoS block has non-finite entries")

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class OpticalLink:
    """Beam geometry for intensity evaluation.

    divergence: beam divergence angle (rad); focal_length: receiver lens (m);
    power: received optical power with a perfectly pointed partner (W);
    spot_sigma: standard deviation of the unit-integral Gaussian spot (m).
    """

    divergence: float
    focal_length: float
    power: float
    spot_sigma: float

    def __post_init__(self):
        if not self.divergence > 0:
            raise DimensionMismatch("divergence must be positive")
        if not self.focal_length > 0:
            raise DimensionMismatch("focal_length must be positive")
        if self.power < 0:
            raise DimensionMismatch("power must be nonnegative")
        if not self.spot_sigma > 0:
            raise DimensionMismatch("spot_sigma must be positive")


@dataclass
class MfProblem:
    """Full linear-quadratic mean-field problem datum.

    Dynamics dx = [A x + B u + Gamma x_avg] dt + D dW with output theta = C x;
    running weights Q (own state), Qbar (deviation from S times the mean),
    R (control, positive definite); terminal weights Q_T, Qbar_T with mean map
    S_T; initial law N(x0_mean, sigma0); rho = 0.5 D'D is the noise intensity
    entering the value offset.
    """

    A: np.ndarray
    B: np.ndarray
    Gamma: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    Qbar: np.ndarray
    R: np.ndarray
    S: np.ndarray
    Q_T: np.ndarray
    Qbar_T: np.ndarray
    S_T: np.ndarray
    x0_mean: np.ndarray
    sigma0: np.ndarray
    grid: TimeGrid
    rho: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("A", "B", "Gamma", "C", "D", "Q", "Qbar", "R", "S",
                     "Q_T", "Qbar_T", "S_T", "x0_mean", "sigma0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.C = np.atleast_2d(self.C)
        self.x0_mean = np.atleast_1d(self.x0_mean)
        if self.rho is None:
            if self.D.shape[0] != self.D.shape[1]:
                raise DimensionMismatch(
                    "rho = 0.5 D'D needs square D; pass rho explicitly otherwise")
            self.rho = 0.5 * self.D.T @ self.D
        else:
            self.rho = np.asarray(self.rho, dtype=float)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def with_weights(self, **updates) -> "MfProblem":
        """Copy of the problem with some weight matrices replaced."""
        return replace(self, **updates)


def _as_square(M, name) -> int:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    return M.shape[0]


def _symmetrize_checked(M: np.ndarray, name: str) -> np.ndarray:
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > SYMMETRY_REPAIR_TOL:
        raise AsymmetricWeight(f"{name} asymmetry {asym:.3e} exceeds {SYMMETRY_REPAIR_TOL}")
    return 0.5 * (M + M.T)


def _check_psd(M: np.ndarray, name: str) -> None:
    if M.size == 0:
        return
    smallest = float(np.linalg.eigvalsh(M).min())
    if smallest < -PSD_EIG_TOL:
        raise NotPositiveDefinite(f"{name} has eigenvalue {smallest:.3e} < 0")


def validate_problem(p: MfProblem) -> MfProblem:
    """Check shapes and definiteness; return the problem with weights symmetrized.

    Symmetric weights are repaired by (M + M')/2 only when the asymmetry is at
    most 1e-10; larger asymmetry raises AsymmetricWeight. R must pass a
    Cholesky factorization; the PSD weights must have eigenvalues >= -1e-9.
    """
    n = _as_square(p.A, "A")
    if p.B.ndim != 2 or p.B.shape[0] != n:
        raise DimensionMismatch(f"B must be {n}xm, got {p.B.shape}")
    m = p.B.shape[1]
    for name, M, shape in (
            ("Gamma", p.Gamma, (n, n)), ("D", p.D, None), ("Q", p.Q, (n, n)),
            ("Qbar", p.Qbar, (n, n)), ("R", p.R, (m, m)), ("S", p.S, (n, n)),
            ("Q_T", p.Q_T, (n, n)), ("Qbar_T", p.Qbar_T, (n, n)),
            ("S_T", p.S_T, (n, n)), ("sigma0", p.sigma0, (n, n)), ("rho", p.rho, (n, n))):
        if shape is not None and M.shape != shape:
            raise DimensionMismatch(f"{name} must have shape {shape}, got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise DimensionMismatch(f"{name} has non-finite entries")
    if p.D.shape[0] != n:
        raise DimensionMismatch(f"D must have {n} rows, got {p.D.shape}")
    if p.C.ndim != 2 or p.C.shape[1] != n or not 1 <= p.C.shape[0] <= 2:
        raise DimensionMismatch(
            f"C must map the state to 1 or 2 angular channels, got {p.C.shape}")
    if p.x0_mean.shape != (n,):
        raise DimensionMismatch(f"x0_mean must be length {n}, got {p.x0_mean.shape}")

    for name in ("Q", "Qbar", "R", "Q_T", "Qbar_T", "sigma0", "rho"):
        setattr(p, name, _symmetrize_checked(getattr(p, name), name))

    try:
        np.linalg.cholesky(p.R)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("R is not positive definite") from None
    for name in ("Q", "Qbar", "Q_T", "Qbar_T", "sigma0"):
        _check_psd(getattr(p, name), name)

    if p.D.shape[0] == p.D.shape[1]:
        drift = float(np.max(np.abs(p.rho - 0.5 * p.D.T @ p.D)))
        if drift > RHO_CONSISTENCY_TOL:
            raise DimensionMismatch(
                f"rho deviates from 0.5 D'D by {drift:.3e} (> {RHO_CONSISTENCY_TOL})")
    p.grid.points()  # re-raises BadGrid through construction invariants
    return p


def tracking_error(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Beam tracking error theta = alpha - beta (azimuth, elevation), radians."""
    return np.asarray(alpha, dtype=float) - np.asarray(beta, dtype=float)


def attenuation_factor(theta_opp: np.ndarray, link: OpticalLink) -> float:
    """Power attenuation exp(-2 |theta_opp|^2 / divergence^2), in (0, 1]."""
    norm2 = float(np.dot(theta_opp, theta_opp))
    return float(np.exp(-2.0 * norm2 / link.divergence ** 2))


def spot_profile(offset: np.ndarray, link: OpticalLink) -> float:
    """Unit-integral isotropic Gaussian spot evaluated at a detector-plane offset (m)."""
    r2 = float(np.dot(offset, offset))
    s2 = link.spot_sigma ** 2
    return float(np.exp(-0.5 * r2 / s2) / (2.0 * np.pi * s2))


def received_intensity(theta_self: np.ndarray, theta_opp: np.ndarray,
                       position: np.ndarray, link: OpticalLink) -> float:
    """Optical intensity (W/m^2) at a detector-plane position.

    The spot center sits at focal_length * theta_self; the partner's tracking
    error attenuates the total power.
    """
    offset = np.asarray(position, dtype=float) - link.focal_length * np.asarray(theta_self, dtype=float)
    return link.power * attenuation_factor(theta_opp, link) * spot_profile(offset, link)


def augment(pointing: PointingSystem, los: LosSystem, *,
            Q, Qbar, R, S, Q_T, Qbar_T, S_T,
            pointing_x0, los_x0, pointing_sigma0=None, los_sigma0=None,
            grid: TimeGrid) -> MfProblem:
    """Stack the pointing and line-of-sight blocks into one MfProblem.

    A = blockdiag(pointing.A, los.A); B = [pointing.B; 0]; the mean coupling
    and control act only on the pointing block; C = [pointing.C, -los.C] so
    that C x = alpha - beta reproduces the tracking error.
    """
    nb, nt = pointing.n, los.n
    n = nb + nt
    if np.asarray(pointing.C).shape[0] != np.asarray(los.C).shape[0]:
        raise DimensionMismatch("pointing and LoS output channel counts differ")
    A = np.block([[pointing.A, np.zeros((nb, nt))],
                  [np.zeros((nt, nb)), los.A]])
    B = np.vstack([pointing.B, np.zeros((nt, pointing.B.shape[1]))])
    Gamma = np.block([[pointing.Gamma, np.zeros((nb, nt))],
                      [np.zeros((nt, nb)), np.zeros((nt, nt))]])
    qb, qt = pointing.D.shape[1], los.D.shape[1]
    D = np.block([[pointing.D, np.zeros((nb, qt))],
                  [np.zeros((nt, qb)), los.D]])
    C = np.hstack([pointing.C, -los.C])
    x0 = np.concatenate([np.asarray(pointing_x0, dtype=float).ravel(),
                         np.asarray(los_x0, dtype=float).ravel()])
    if x0.shape != (n,):
        raise DimensionMismatch(f"initial means must stack to length {n}")
    sb = np.zeros((nb, nb)) if pointing_sigma0 is None else np.asarray(pointing_sigma0, dtype=float)
    st = np.zeros((nt, nt)) if los_sigma0 is None else np.asarray(los_sigma0, dtype=float)
    sigma0 = np.block([[sb, np.zeros((nb, nt))], [np.zeros((nt, nb)), st]])
    p = MfProblem(A=A, B=B, Gamma=Gamma, C=C, D=D, Q=Q, Qbar=Qbar, R=R, S=S,
                  Q_T=Q_T, Qbar_T=Qbar_T, S_T=S_T, x0_mean=x0, sigma0=sigma0,
                  grid=grid)
    return validate_problem(p)
