"""Tests for evolution module."""

import csv
import math
import tempfile
from pathlib import Path
from typing import Any
from unittest.mock import patch

import numpy as np
import pytest
from pydantic import ValidationError

from kerr_stability import evolution
from kerr_stability.evolution import EvolutionConfig
from kerr_stability.evolution import Trajectory
from kerr_stability.evolution import certify_bounds
from kerr_stability.evolution import conserved_series_check
from kerr_stability.evolution import evolve
from kerr_stability.evolution import growth_rate_estimate
from kerr_stability.evolution import gronwall_bound
from kerr_stability.evolution import uniqueness_gap
from kerr_stability.evolution import v_transform_residual
from kerr_stability.evolution import write_trajectory_csv
from kerr_stability.exceptions import DimensionMismatchError
from kerr_stability.exceptions import EvolutionError
from kerr_stability.kerr_geometry import KerrParams
from kerr_stability.kerr_geometry import ModeSpec
from kerr_stability.pencil import QuadraticState
from kerr_stability.pencil import commuting_solution
from kerr_stability.pencil import current
from kerr_stability.pencil import example_stable
from kerr_stability.pencil import example_unstable
from kerr_stability.pencil import pencil_eigenvalues
from kerr_stability.rkg_discretization import Grid
from kerr_stability.rkg_discretization import assemble

# u'' + u = 0
OSCILLATOR = (np.array([[1.0]]), np.array([[0.0]]))


def _run(pair: tuple[Any, Any], state: QuadraticState, **options: Any) -> Trajectory:
    return evolve(pair[0], pair[1], None, state, EvolutionConfig(**options))


@pytest.fixture
def cosine_data() -> QuadraticState:
    return QuadraticState(u=[1.0], du=[0.0])


@pytest.fixture
def stable_data() -> QuadraticState:
    """Data of the stable example with E_u = -1."""
    return QuadraticState(u=[0.0, 1.0], du=[0.0, 0.0])


@pytest.fixture
def unstable_data() -> QuadraticState:
    return QuadraticState(u=[1.0, 0.5], du=[0.3, -0.2])


def test_config_validation() -> None:
    """Test step size, horizon and recording constraints."""
    cfg = EvolutionConfig(dt=1e-3, T=1.0)
    assert cfg.record_every == 1
    assert cfg.s_list == []
    assert cfg.steps == 1000

    with pytest.raises(ValidationError):
        EvolutionConfig(dt=0.0, T=1.0)
    with pytest.raises(ValidationError):
        EvolutionConfig(dt=1e-3, T=-1.0)
    with pytest.raises(ValidationError, match="exceeds final time"):
        EvolutionConfig(dt=2.0, T=1.0)
    with pytest.raises(ValidationError):
        EvolutionConfig(dt=1e-3, T=1.0, record_every=0)
    with pytest.raises(ValidationError, match="finite"):
        EvolutionConfig(dt=1e-3, T=1.0, s_list=[0.5, math.inf])
    with pytest.raises(ValidationError):
        EvolutionConfig(dt=1e-3, T=1.0, method="rk4")


def test_harmonic_oscillator_tracks_cosine(cosine_data: QuadraticState) -> None:
    """Test that u'' + u = 0 from (1, 0) follows cos(t)."""
    traj = _run(OSCILLATOR, cosine_data, dt=1e-3, T=10.0)

    assert len(traj) == 10001
    assert traj.times[-1] == pytest.approx(10.0)
    assert np.max(np.abs(traj.u[:, 0] - np.cos(traj.times))) <= 1e-5
    assert np.max(np.abs(traj.du[:, 0] + np.sin(traj.times))) <= 1e-5


def test_recording_keeps_final_snapshot(cosine_data: QuadraticState) -> None:
    """Test that the last step is recorded even off the recording stride."""
    traj = _run(OSCILLATOR, cosine_data, dt=1e-3, T=1.0, record_every=300)

    np.testing.assert_allclose(traj.times, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert traj.record_every == 300
    assert traj.final_state.t == pytest.approx(1.0)


def test_initial_time_offsets_record() -> None:
    """Test that recorded times start from the initial state's time."""
    state = QuadraticState(u=[1.0], du=[0.0], t=5.0)
    traj = _run(OSCILLATOR, state, dt=0.1, T=1.0)

    assert traj.times[0] == 5.0
    assert traj.times[-1] == pytest.approx(6.0)


def test_stable_example_negative_energy_bounded(stable_data: QuadraticState) -> None:
    """Test that negative-energy data of the stable example stay bounded."""
    traj = _run(example_stable(), stable_data, dt=1e-3, T=200.0, record_every=10)

    assert traj.energies[0] == pytest.approx(-1.0)
    assert np.max(traj.norms) / traj.norms[0] <= 50.0
    assert growth_rate_estimate(traj, 0.5) == 0.0
    assert growth_rate_estimate(traj, 1.0) == 0.0


def test_stable_example_conservation(stable_data: QuadraticState) -> None:
    """Test roundoff-level drift of E_u and E_{s,u} over T = 100."""
    traj = _run(
        example_stable(), stable_data, dt=1e-3, T=100.0, record_every=10, s_list=[0.7, 1.5]
    )

    drift = conserved_series_check(traj)
    assert drift.max_rel_drift_E <= 1e-8
    assert drift.max_rel_drift_Es <= 1e-8
    assert drift.max_drift_j == 0.0
    assert set(traj.shifted_energies) == {0.7, 1.5}


def test_unstable_example_conservation(unstable_data: QuadraticState) -> None:
    """Test that energies stay conserved while the norm grows."""
    traj = _run(
        example_unstable(), unstable_data, dt=1e-3, T=15.0, record_every=10, s_list=[0.5]
    )

    drift = conserved_series_check(traj)
    assert drift.max_rel_drift_E <= 1e-8
    assert drift.max_rel_drift_Es <= 1e-8
    assert traj.norms[-1] > 2.0 * traj.norms[0]


def test_unstable_growth_matches_pencil(unstable_data: QuadraticState) -> None:
    """Test that the fitted growth rate matches the pencil's within 5%."""
    atil, b = example_unstable()
    traj = _run((atil, b), unstable_data, dt=1e-3, T=60.0, record_every=10)
    spectrum = pencil_eigenvalues(atil, b)

    assert spectrum.growth_rate > 0.1
    rate = growth_rate_estimate(traj, 0.5)
    assert rate == pytest.approx(spectrum.growth_rate, rel=0.05)


def test_growth_rate_of_constant_norm() -> None:
    """Test that u = exp(it) is reported as non-growing."""
    traj = _run(OSCILLATOR, QuadraticState(u=[1.0], du=[1j]), dt=1e-2, T=20.0)

    np.testing.assert_allclose(traj.norms, 1.0, atol=1e-12)
    assert growth_rate_estimate(traj) == 0.0


def test_growth_rate_errors(cosine_data: QuadraticState) -> None:
    """Test the window and degenerate-fit errors."""
    traj = _run(OSCILLATOR, cosine_data, dt=0.1, T=1.0)
    with pytest.raises(ValueError, match="window_fraction"):
        growth_rate_estimate(traj, 0.0)
    with pytest.raises(ValueError, match="window_fraction"):
        growth_rate_estimate(traj, 1.5)

    zero = _run(OSCILLATOR, QuadraticState(u=[0.0], du=[0.0]), dt=0.1, T=1.0)
    with pytest.raises(ValueError, match="Degenerate"):
        growth_rate_estimate(zero)


def test_currents_conserved_between_solutions(unstable_data: QuadraticState) -> None:
    """Test that j_{u,v} between two distinct solutions is constant."""
    atil, b = example_stable()
    partner = QuadraticState(u=[0.2, -1.0], du=[0.5, 0.1j])
    cfg = EvolutionConfig(dt=1e-3, T=20.0, record_every=5)
    traj = evolve(atil, b, None, unstable_data, cfg, partner=partner)

    assert traj.currents is not None
    assert traj.currents[0] == pytest.approx(current(b, unstable_data, partner))
    assert conserved_series_check(traj).max_drift_j <= 1e-8


def test_self_current_without_first_order_term() -> None:
    """Test that the current of a solution with itself does not drift for B = 0."""
    state = QuadraticState(u=[1.0, 0.5], du=[0.0, 1.0])
    atil = np.array([[2.0, 0.5], [0.5, 1.0]])
    cfg = EvolutionConfig(dt=1e-2, T=10.0)
    traj = evolve(atil, np.zeros((2, 2)), None, state, cfg, partner=state)

    assert conserved_series_check(traj).max_drift_j <= 1e-12


def test_dimension_mismatch(stable_data: QuadraticState) -> None:
    """Test that operators, weights and partners must match the state length."""
    atil, b = example_stable()
    cfg = EvolutionConfig(dt=0.1, T=1.0)

    with pytest.raises(DimensionMismatchError):
        evolve(atil, np.eye(3), None, stable_data, cfg)
    with pytest.raises(DimensionMismatchError):
        evolve(atil, b, np.ones(3), stable_data, cfg)
    with pytest.raises(DimensionMismatchError):
        evolve(atil, b, np.array([1.0, -1.0]), stable_data, cfg)
    with pytest.raises(DimensionMismatchError):
        evolve(atil, b, None, stable_data, cfg, partner=QuadraticState(u=[1.0], du=[0.0]))


def test_factorization_failure(cosine_data: QuadraticState) -> None:
    """Test that a nonfinite operator is reported as an evolution failure."""
    with pytest.raises(EvolutionError, match="factor"):
        _run((np.array([[np.nan]]), np.array([[0.0]])), cosine_data, dt=0.1, T=1.0)


def test_nonfinite_state_aborts_with_last_snapshot(cosine_data: QuadraticState) -> None:
    """Test that a nonfinite step aborts and keeps the last finite state."""

    def broken_step(self: object, y: np.ndarray) -> np.ndarray:
        return np.full_like(y, np.nan)

    with patch.object(evolution._Stepper, "__call__", broken_step):
        with pytest.raises(EvolutionError) as exc_info:
            _run(OSCILLATOR, cosine_data, dt=0.1, T=1.0)

    assert exc_info.value.last_time == 0.0
    np.testing.assert_array_equal(exc_info.value.last_state.u, [1.0])


def test_gronwall_bound_cases() -> None:
    """Test the three cases of the energy bound."""
    assert gronwall_bound(0.0, 4.0, 1.0, 2.0) == pytest.approx(5.0)
    for t in (0.0, 0.5, 3.0):
        assert gronwall_bound(1.0, 0.0, 1.0, t) == pytest.approx(math.exp(-t))
    for t in (0.0, 1.0, 10.0):
        assert gronwall_bound(-1.0, 0.0, 0.0, t) == 0.0

    assert gronwall_bound(-4.0, -1.0, 1.0, 1.0) == pytest.approx(2.0 * math.exp(2.0))
    assert gronwall_bound(4.0, 8.0, 0.0, 1.0) == pytest.approx(2.0 * (1.0 - math.exp(-2.0)))


def test_gronwall_bound_rejects_invalid_input() -> None:
    """Test that negative spans and negative energies with gamma >= 0 are rejected."""
    with pytest.raises(ValueError, match="nonnegative"):
        gronwall_bound(1.0, 1.0, 1.0, -0.5)
    with pytest.raises(ValueError, match="Energy"):
        gronwall_bound(0.0, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="Energy"):
        gronwall_bound(1.0, -0.1, 1.0, 1.0)


def test_certify_bounds_oscillator(cosine_data: QuadraticState) -> None:
    """Test the decaying-plus-floor bound on a constant-energy oscillation."""
    traj = _run(OSCILLATOR, cosine_data, dt=1e-3, T=10.0, record_every=20)
    assert certify_bounds(traj, 1.0)
    assert certify_bounds(traj, 0.0)


def test_certify_bounds_examples(
    stable_data: QuadraticState, unstable_data: QuadraticState
) -> None:
    """Test the exponential bound with gamma = min eig(Atil) = -1 on both examples."""
    stable = _run(example_stable(), stable_data, dt=1e-3, T=50.0, record_every=50)
    assert certify_bounds(stable, -1.0)

    unstable = _run(example_unstable(), unstable_data, dt=1e-3, T=20.0, record_every=20)
    assert certify_bounds(unstable, -1.0)


def test_certify_bounds_with_shifted_energy(stable_data: QuadraticState) -> None:
    """Test that a certified shift bounds the norm through E_{s,u}."""
    atil, b = example_stable()
    s = 1.5
    gamma = float(np.linalg.eigvalsh(atil.entries + s * b.entries - s * s * np.eye(2))[0])
    assert gamma > 0.0

    traj = _run((atil, b), stable_data, dt=1e-3, T=200.0, record_every=100, s_list=[s])
    assert certify_bounds(traj, gamma, s=s)

    with pytest.raises(ValueError, match="not recorded"):
        certify_bounds(traj, gamma, s=0.5)


def test_certify_bounds_detects_violation(unstable_data: QuadraticState) -> None:
    """Test that a bound with a too optimistic gamma fails on a growing solution."""
    traj = _run(example_unstable(), unstable_data, dt=1e-2, T=40.0, record_every=10)
    assert traj.energies[0] > 0.0
    assert not certify_bounds(traj, 0.0)


def test_v_transform_residual_examples(
    stable_data: QuadraticState, unstable_data: QuadraticState
) -> None:
    """Test the residual of v'' + A(t)v = 0 on both examples at dt = 1e-3."""
    atil, b = example_stable()
    stable = _run((atil, b), stable_data, dt=1e-3, T=20.0)
    assert v_transform_residual(atil, b, stable) <= 1e-4 * np.max(stable.norms)

    atil, b = example_unstable()
    unstable = _run((atil, b), unstable_data, dt=1e-3, T=20.0)
    assert v_transform_residual(atil, b, unstable) <= 1e-4 * np.max(unstable.norms)


def test_v_transform_residual_without_first_order_term(cosine_data: QuadraticState) -> None:
    """Test that B = 0 reduces to the second-difference residual of u'' + u = 0."""
    traj = _run(OSCILLATOR, cosine_data, dt=1e-3, T=1.0)
    assert v_transform_residual(*OSCILLATOR, traj) <= 1e-6


def test_v_transform_residual_requirements(cosine_data: QuadraticState) -> None:
    """Test that strided records and short records are rejected."""
    strided = _run(OSCILLATOR, cosine_data, dt=0.1, T=1.0, record_every=2)
    with pytest.raises(ValueError, match="every step"):
        v_transform_residual(*OSCILLATOR, strided)

    short = _run(OSCILLATOR, cosine_data, dt=0.5, T=0.5)
    with pytest.raises(ValueError, match="At least 3"):
        v_transform_residual(*OSCILLATOR, short)


def test_uniqueness_gap(cosine_data: QuadraticState, unstable_data: QuadraticState) -> None:
    """Test that evolutions with dt = 1e-3 and 5e-4 agree at T = 1."""
    assert uniqueness_gap(*OSCILLATOR, cosine_data, 1.0, 1e-3, 5e-4) < 1e-5

    atil, b = example_unstable()
    assert uniqueness_gap(atil, b, unstable_data, 1.0, 1e-3, 5e-4) < 1e-5


def test_commuting_pair_matches_closed_form() -> None:
    """Test the integrator against the closed-form solution of a commuting pair."""
    atil = np.diag([2.0, 3.0])
    b = np.diag([1.0, -1.0])
    state = QuadraticState(u=[1.0, 0.5j], du=[0.2, -0.3])
    traj = _run((atil, b), state, dt=1e-3, T=2.0, record_every=100)

    exact = commuting_solution(atil, b, state, 2.0)
    np.testing.assert_allclose(traj.u[-1], exact.u, atol=1e-5)
    np.testing.assert_allclose(traj.du[-1], exact.du, atol=1e-5)


def test_discretized_system_with_weight() -> None:
    """Test a weighted sparse evolution against its dense counterpart."""
    params = KerrParams(M=1.0, a=0.5)
    grid = Grid.for_params(params, Nr=6, Ntheta=4)
    sys = assemble(params, ModeSpec(m=1, mu=0.1), grid)
    rng = np.random.default_rng(7)
    state = QuadraticState(u=rng.standard_normal(sys.n), du=np.zeros(sys.n))
    cfg = EvolutionConfig(dt=1e-2, T=1.0, s_list=[0.2])

    traj = evolve(sys.A_h, sys.B_h, sys.W, state, cfg)
    drift = conserved_series_check(traj)
    assert drift.max_rel_drift_E <= 1e-6
    assert drift.max_rel_drift_Es <= 1e-6
    weighted_norm = math.sqrt(np.sum(sys.W * np.abs(state.u) ** 2))
    assert traj.norms[0] == pytest.approx(weighted_norm)

    dense = evolve(sys.A_h.toarray(), sys.B_h.toarray(), sys.W, state, cfg)
    scale = np.max(np.abs(dense.u))
    np.testing.assert_allclose(traj.u, dense.u, rtol=1e-8, atol=1e-10 * scale)


@pytest.mark.slow
def test_discretized_system_long_run_conserves_energy() -> None:
    """Test energy conservation over T = 100 on a 40 x 30 grid."""
    params = KerrParams(M=1.0, a=0.5)
    sys = assemble(params, ModeSpec(m=1, mu=0.5), Grid.for_params(params, Nr=40, Ntheta=30))
    assert sys.n == 1200
    rng = np.random.default_rng(11)
    state = QuadraticState(u=rng.standard_normal(sys.n), du=np.zeros(sys.n))
    cfg = EvolutionConfig(dt=1e-2, T=100.0, record_every=100, s_list=[0.2])

    traj = evolve(sys.A_h, sys.B_h, sys.W, state, cfg)
    drift = conserved_series_check(traj)
    assert traj.times[-1] == pytest.approx(100.0)
    assert drift.max_rel_drift_E <= 1e-6
    assert drift.max_rel_drift_Es <= 1e-6


def test_write_trajectory_csv(unstable_data: QuadraticState) -> None:
    """Test the CSV header and one row per recorded snapshot."""
    atil, b = example_unstable()
    cfg = EvolutionConfig(dt=1e-2, T=1.0, record_every=10, s_list=[0.7])
    partner = QuadraticState(u=[0.0, 1.0], du=[0.0, 0.0])
    traj = evolve(atil, b, None, unstable_data, cfg, partner=partner)

    with tempfile.TemporaryDirectory() as temp_dir:
        path = Path(temp_dir) / "trajectory.csv"
        write_trajectory_csv(traj, path)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))

    assert rows[0] == ["t", "norm", "E_u", "E_s_u[s=0.7]", "j_re", "j_im"]
    assert len(rows) == len(traj) + 1
    assert float(rows[-1][0]) == pytest.approx(1.0)
    assert float(rows[1][2]) == traj.energies[0]
