import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from netagree.graph import Digraph, laplacians
from netagree.sim import (
    IntegrationConfig,
    SimulationDiverged,
    Trajectory,
    detect_agreement,
    disagreement_norms,
    disagreement_series,
    integrate,
)
from netagree.systems import builtin_agent, builtin_controller
from netagree.interconnect import assemble

from conftest import DENSE_EDGES, HETERO_X0, TREE_EDGES, hetero_network, linear_network


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": 0.0},
            {"dt": -1e-3},
            {"dt": float("nan")},
            {"t_end": float("inf")},
            {"dt": 0.1, "t_end": 0.05},
            {"record_stride": 0},
            {"record_stride": 1.5},
            {"dt": 0.1, "t_end": 1.0, "record_stride": 3},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            IntegrationConfig(**kwargs)

    def test_rejects_non_multiple_horizon(self):
        with pytest.raises(ValueError, match="multiple"):
            IntegrationConfig(dt=0.3, t_end=1.0)

    def test_steps(self):
        assert IntegrationConfig(dt=1e-3, t_end=20.0).steps == 20000


def _pair():
    return linear_network(Digraph(2, ((1, 2), (2, 1))))


def test_pair_against_closed_form():
    traj = integrate(_pair(), [1.0, -1.0], IntegrationConfig(dt=1e-3, t_end=5.0))
    # x1 - x2 decays at rate 2, mean stays 0
    expected = np.exp(-2 * traj.times)
    np.testing.assert_allclose(traj.states[:, 0], expected, atol=1e-10)
    np.testing.assert_allclose(traj.states[:, 1], -expected, atol=1e-10)
    t, d = disagreement_series(traj)
    assert d[-1] < 0.01
    assert np.all(np.diff(d) <= 1e-9)


def test_recorded_times_and_frames():
    net = _pair()
    traj = integrate(net, [1.0, 0.0], IntegrationConfig(dt=0.01, t_end=1.0, record_stride=10))
    assert len(traj) == 11
    np.testing.assert_allclose(np.diff(traj.times), 0.1, atol=1e-15)
    again = Trajectory.from_states(net, traj.times, traj.states)
    np.testing.assert_allclose(again.u, traj.u, atol=1e-12)
    f = traj.frame(4)
    np.testing.assert_allclose(f.u, f.w - f.z, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3))
def test_consensus_start_stays_constant(c):
    net = linear_network(Digraph(5, DENSE_EDGES), gain=2.0)
    traj = integrate(net, np.full(5, c), IntegrationConfig(dt=0.01, t_end=1.0))
    np.testing.assert_array_equal(traj.states, c)


def test_deterministic():
    net = hetero_network(DENSE_EDGES)
    cfg = IntegrationConfig(dt=1e-2, t_end=2.0)
    a = integrate(net, HETERO_X0, cfg)
    b = integrate(net, HETERO_X0, cfg)
    np.testing.assert_array_equal(a.states, b.states)


def test_directed_cycle_matches_expm():
    g = Digraph(3, ((1, 2), (2, 3), (3, 1)))
    x0 = np.array([1.0, 2.0, 3.0])
    traj = integrate(linear_network(g), x0, IntegrationConfig(dt=1e-3, t_end=4.0, record_stride=1000))
    _, _, L_o = laplacians(g)
    for k, t in enumerate(traj.times):
        np.testing.assert_allclose(traj.states[k], expm(-L_o * t) @ x0, atol=1e-10)
    np.testing.assert_allclose(traj.states.mean(axis=1), 2.0, atol=1e-12)


def test_blowup_reported_with_time():
    runaway = builtin_agent(
        "general", state_dim=1, derivative_fn=lambda x, u: x * x, output_fn=lambda x: x[0]
    )
    net = assemble([runaway, builtin_agent("integrator")], [builtin_controller("static_gain")], Digraph(2, ((2, 1),)))
    with pytest.raises(SimulationDiverged) as info:
        integrate(net, [1.0, 0.0], IntegrationConfig(dt=1e-3, t_end=2.0))
    # x' = x^2 from 1 escapes at t = 1
    assert 0.9 < info.value.time < 1.01


def test_nonfinite_initial_state():
    with pytest.raises(SimulationDiverged):
        integrate(_pair(), [np.nan, 0.0])


def test_initial_state_shape():
    with pytest.raises(ValueError):
        integrate(_pair(), [1.0, 2.0, 3.0])


class TestAgreement:
    def _constant(self, value, n=5, samples=50):
        times = np.linspace(0, 5, samples)
        y = np.full((samples, n), value)
        z = np.zeros((samples, n))
        return Trajectory(times=times, states=y, u=z, y=y, zeta=z, mu=z, w=z, z=z)

    def test_constant(self):
        assert detect_agreement(self._constant(0.7)) == pytest.approx(0.7)

    def test_window_too_long(self):
        with pytest.raises(ValueError, match="window"):
            detect_agreement(self._constant(0.7), window=10.0)

    def test_drift_rejected(self):
        traj = self._constant(0.0)
        y = traj.y + traj.times[:, None] * 1e-3
        drifting = Trajectory(**{**traj.__dict__, "y": y})
        assert detect_agreement(drifting) is None

    def test_norm_values(self):
        assert disagreement_norms([1.0, -1.0]) == pytest.approx(np.sqrt(2))
        assert disagreement_norms([2.0, 2.0, 2.0]) == 0.0

    def test_tree_case_study(self):
        traj = integrate(hetero_network(TREE_EDGES), HETERO_X0, IntegrationConfig())
        # vertex 1 has no out-edges, so its output pins the common value
        assert detect_agreement(traj) == pytest.approx(0.23, abs=5e-3)


def test_step_halving_order():
    net = _pair()
    x0 = [1.0, -1.0]
    ref = np.array([np.exp(-2.0), -np.exp(-2.0)])
    errs = [np.abs(integrate(net, x0, IntegrationConfig(dt=dt, t_end=1.0)).states[-1] - ref).max() for dt in (0.1, 0.05)]
    assert errs[0] / errs[1] > 12
