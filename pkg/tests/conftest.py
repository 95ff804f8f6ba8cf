import numpy as np
import pytest

from mfbeam import MfProblem, OpticalLink, TimeGrid, validate_problem


def make_demo_problem(subintervals=100, **overrides) -> MfProblem:
    """The two-state demo: controlled transceiver channel vs uncontrolled LoS.

    B carries a zero second column so the 2x2 control weight applies while the
    control only drives the first state.
    """
    fields = dict(
        A=np.diag([1.5, 1.0]),
        B=np.array([[1.0, 0.0], [0.0, 0.0]]),
        Gamma=np.eye(2),
        C=np.array([[1.0, -1.0]]),
        D=np.sqrt(0.5) * np.eye(2),
        Q=np.diag([90.0, 30.0]),
        Qbar=np.diag([10.0, 5.0]),
        R=np.diag([130.0, 110.0]),
        S=np.eye(2),
        Q_T=np.eye(2),
        Qbar_T=np.diag([4.5, 2.5]),
        S_T=np.eye(2),
        x0_mean=np.array([40.0, 20.0]),
        sigma0=np.zeros((2, 2)),
        grid=TimeGrid(horizon=1.0, subintervals=subintervals),
    )
    fields.update(overrides)
    return validate_problem(MfProblem(**fields))


@pytest.fixture
def demo_problem() -> MfProblem:
    return make_demo_problem()


@pytest.fixture
def demo_link() -> OpticalLink:
    return OpticalLink(divergence=20.0, focal_length=0.05, power=1.0, spot_sigma=1.0)
