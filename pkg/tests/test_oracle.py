import math

import numpy as np
import pytest

from conftest import constant_data, point_delay
from hypdelay.measure import HistorySegment, StieltjesMeasure
from hypdelay.oracle import OracleConfig, ScalarModes, scalar_root_closed_form, upwind_simulate
from hypdelay.simulate import ConfigError, SimConfig, decay_rate, simulate
from hypdelay.transport import GridFunction, TransportSystem

TIMES = (1.0, 5.0, 10.0)


class TestClosedForm:
    def test_stable(self):
        assert scalar_root_closed_form(-0.2, 1, 1.1, 0.5) == pytest.approx(-0.0697932, abs=1e-7)

    def test_unstable(self):
        assert scalar_root_closed_form(-0.2, 1, 1.3, 0.5) == pytest.approx(0.0415762, abs=1e-7)

    @pytest.mark.parametrize("tau,r", [(1.0, 0.5), (0.3, 2.0), (7.0, 0.01)])
    def test_neutral(self, tau, r):
        assert scalar_root_closed_form(0.0, tau, 1.0, r) == 0.0

    def test_gamma_positive(self):
        with pytest.raises(ValueError):
            scalar_root_closed_form(0.0, 1.0, 0.0, 1.0)


class TestConfig:
    def test_cfl_above_one(self):
        with pytest.raises(ConfigError):
            OracleConfig(cells=64, cfl=1.1, t_end=1.0)

    def test_too_few_cells(self):
        with pytest.raises(ConfigError):
            OracleConfig(cells=8, cfl=0.5, t_end=1.0)


class TestScalarModes:
    def test_modes_solve_loop(self, decaying_channel):
        modes = ScalarModes(decaying_channel, 1.1, 0.5)
        t = np.linspace(0, 5, 41)
        # boundary condition z(t, 0) = γ z(t - r, ℓ)
        np.testing.assert_allclose(modes.state(t, 0.0), 1.1 * modes.trace(t - 0.5), rtol=1e-13)
        assert np.all(modes.initial_state(65).values > 0)


def test_zero_measure_mass_leaves(decaying_channel):
    sys = TransportSystem.uniform(1.0, [1.0], [0.0])
    f, phi = constant_data(sys, 0.5, nodes=257)
    traj = upwind_simulate(sys, StieltjesMeasure.zero(0.5, 1), f, phi, OracleConfig(256, 0.9, 3.0))
    dx = 1 / 256
    late = traj.times >= 1.0 + 10 * math.sqrt(dx)
    assert traj.norm_state[late].max() <= 1e-6
    # exact transport would be extinct at t=1; smearing is O(sqrt(dx)) wide
    assert traj.norm_state[np.searchsorted(traj.times, 1.0)] > 0


def test_positivity(decaying_channel):
    rng = np.random.default_rng(4)
    f = GridFunction(1.0, rng.uniform(0, 1, (129, 1)))
    phi = HistorySegment(0.5, rng.uniform(0, 1, (33, 1)))
    traj = upwind_simulate(decaying_channel, point_delay(1.1), f, phi, OracleConfig(128, 0.9, 6.0, snapshot_times=(2.0,)))
    assert traj.trace.min() >= 0 and traj.snapshots[2.0].values.min() >= 0


def _discrepancies(sys, modes, cells, exponent="relative"):
    nodes = cells + 1
    f, phi = modes.initial_state(nodes), modes.initial_history(1 / 256)
    ours = simulate(sys, modes.measure(), f, phi, SimConfig(1 / 256, 10.0, grid_nodes=nodes, snapshot_times=TIMES), exponent)
    fd = upwind_simulate(sys, modes.measure(), f, phi, OracleConfig(cells, 0.9, 10.0, snapshot_times=TIMES))
    return [
        float(np.abs(ours.snapshots[t].values - fd.snapshots[t].values).max() / np.abs(ours.snapshots[t].values).max())
        for t in TIMES
    ]


def test_refinement_order(decaying_channel):
    modes = ScalarModes(decaying_channel, 1.1, 0.5)
    errs = [max(_discrepancies(decaying_channel, modes, m)) for m in (256, 512, 1024)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.7 <= q <= 2.3 for q in ratios), ratios


def test_cross_validation(decaying_channel):
    modes = ScalarModes(decaying_channel, 1.1, 0.5)
    assert max(_discrepancies(decaying_channel, modes, 2048)) <= 0.02


@pytest.mark.slow
def test_decay_rate_at_fine_grid(decaying_channel):
    f, phi = constant_data(decaying_channel, 0.5, nodes=2049)
    traj = upwind_simulate(decaying_channel, point_delay(1.1), f, phi, OracleConfig(2048, 0.9, 40.0))
    assert decay_rate(traj, (10.0, 40.0)) == pytest.approx(-0.069793, rel=0.10)
