"""Tests for pencil module."""

import math

import numpy as np
import pytest
from scipy import linalg

from kerr_stability.exceptions import DimensionMismatchError
from kerr_stability.exceptions import NotHermitianError
from kerr_stability.pencil import HermitianOperator
from kerr_stability.pencil import QuadraticState
from kerr_stability.pencil import Stability
from kerr_stability.pencil import as_hermitian
from kerr_stability.pencil import best_shift
from kerr_stability.pencil import char_poly_coefficients
from kerr_stability.pencil import char_poly_value
from kerr_stability.pencil import commutator_norm
from kerr_stability.pencil import commutator_tolerance
from kerr_stability.pencil import commuting_solution
from kerr_stability.pencil import commuting_stability
from kerr_stability.pencil import companion_matrix
from kerr_stability.pencil import conjugated_family
from kerr_stability.pencil import current
from kerr_stability.pencil import energy
from kerr_stability.pencil import example_stable
from kerr_stability.pencil import example_unstable
from kerr_stability.pencil import is_hermitian
from kerr_stability.pencil import pencil_eigenvalues
from kerr_stability.pencil import root_residuals
from kerr_stability.pencil import shifted_energy
from kerr_stability.pencil import stability_search


def _random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.standard_normal((n, n))
    return 0.5 * (x + x.T)


def test_hermitian_operator_validation() -> None:
    """Test that operators must be square, finite and Hermitian."""
    with pytest.raises(DimensionMismatchError):
        HermitianOperator(np.zeros((2, 3)))
    with pytest.raises(NotHermitianError):
        HermitianOperator(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotHermitianError):
        HermitianOperator(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    op = HermitianOperator(np.array([[2.0, 1j], [-1j, 2.0]]))
    assert op.n == 2
    assert not op.is_real


def test_hermitian_operator_is_read_only() -> None:
    """Test that stored entries cannot be modified in place."""
    op = HermitianOperator(np.eye(2))
    assert op.is_real
    with pytest.raises(ValueError):
        op.entries[0, 0] = 5.0


def test_is_hermitian_relative_tolerance() -> None:
    """Test the relative Hermiticity tolerance."""
    x = np.array([[1e6, 1.0], [1.0 + 1e-7, 1.0]])
    assert is_hermitian(x)
    assert not is_hermitian(np.array([[1.0, 1.0], [1.1, 1.0]]))
    assert not is_hermitian(np.ones((2, 3)))


def test_as_hermitian_wraps_and_passes_through() -> None:
    """Test that arrays are validated and existing operators are reused."""
    op = as_hermitian([[2.0, 1j], [-1j, 3.0]])
    assert op.n == 2
    assert not op.is_real
    assert as_hermitian(op) is op
    assert as_hermitian([[1, 0], [0, 2]]).is_real

    with pytest.raises(NotHermitianError):
        as_hermitian([[1.0, 2.0], [0.0, 1.0]])


def test_scalar_pencil() -> None:
    """Test lambda^2 = 1 for Atil = 1, B = 0."""
    spectrum = pencil_eigenvalues(np.array([[1.0]]), np.array([[0.0]]))
    assert np.allclose(spectrum.eigenvalues, [-1.0, 1.0])
    assert spectrum.classification is Stability.STABLE
    assert spectrum.growth_rate == 0.0


def test_companion_matrix_layout() -> None:
    """Test the block layout of the companion matrix."""
    atil, b = example_stable()
    comp = companion_matrix(atil, b)
    assert comp.shape == (4, 4)
    assert np.array_equal(comp[:2, 2:], np.eye(2))
    assert np.array_equal(comp[2:, :2], atil.entries)
    assert np.array_equal(comp[2:, 2:], -b.entries)


def test_example_stable_roots() -> None:
    """Test that the negative-energy example has four real roots in the stated intervals."""
    atil, b = example_stable()
    spectrum = pencil_eigenvalues(atil, b)
    assert spectrum.classification is Stability.STABLE
    real = spectrum.real_eigenvalues
    assert real.size == 4
    intervals = [(-5.0, -4.0), (-4.0, -1.0), (-1.0, 0.0), (0.0, 1.0)]
    for root, (lo, hi) in zip(real, intervals, strict=True):
        assert lo < root < hi


def test_example_unstable_roots() -> None:
    """Test two real roots and a growing conjugate pair."""
    atil, b = example_unstable()
    spectrum = pencil_eigenvalues(atil, b)
    assert spectrum.classification is Stability.UNSTABLE

    real = spectrum.real_eigenvalues
    assert real.size == 2
    assert -4.0 < real[0] < -3.0
    assert 0.0 < real[1] < 1.0

    pair = spectrum.nonreal_eigenvalues
    assert pair.size == 2
    assert np.all(np.abs(pair.imag) > 1e-3)
    assert abs(pair[0] - np.conj(pair[1])) <= 1e-8
    assert spectrum.growth_rate == pytest.approx(float(np.max(-pair.imag)))
    assert spectrum.growth_rate > 0.1


def test_eigenvalues_sorted_and_closed_under_conjugation() -> None:
    """Test the (Re, Im) ordering and conjugate pairing for real symmetric input."""
    rng = np.random.default_rng(10)
    atil, b = _random_symmetric(rng, 4), _random_symmetric(rng, 4)
    eig = pencil_eigenvalues(atil, b).eigenvalues
    assert eig.size == 8
    keys = list(zip(eig.real, eig.imag, strict=True))
    assert keys == sorted(keys)
    for lam in eig:
        assert np.min(np.abs(eig - np.conj(lam))) <= 1e-8


def test_root_residuals_small() -> None:
    """Test that every companion root annihilates the characteristic polynomial."""
    rng = np.random.default_rng(11)
    for atil, b in (example_stable(), example_unstable()):
        spectrum = pencil_eigenvalues(atil, b)
        assert np.all(root_residuals(atil, b, spectrum.eigenvalues) <= 1e-6)

    atil, b = _random_symmetric(rng, 5), _random_symmetric(rng, 5)
    spectrum = pencil_eigenvalues(atil, b)
    assert np.all(root_residuals(atil, b, spectrum.eigenvalues) <= 1e-6)


def test_dimension_mismatch() -> None:
    """Test that operators of different sizes are rejected."""
    with pytest.raises(DimensionMismatchError):
        pencil_eigenvalues(np.eye(2), np.eye(3))
    with pytest.raises(DimensionMismatchError):
        char_poly_value(np.eye(2), np.eye(3), 0.5)


def test_char_poly_values() -> None:
    """Test p(0) = -1 for both examples and the sign at the stated witness."""
    assert char_poly_value(*example_stable(), 0.0) == pytest.approx(-1.0)
    assert char_poly_value(*example_unstable(), 0.0) == pytest.approx(-1.0)

    witness = (-69.0 + math.sqrt(1329.0)) / 40.0
    value = char_poly_value(*example_unstable(), witness)
    assert abs(value.imag) < 1e-14
    assert value.real < 0.0


def test_char_poly_coefficients_examples() -> None:
    """Test the quartic coefficients of both examples."""
    assert np.allclose(char_poly_coefficients(*example_stable()), [1, 6, 8, 0, -1], atol=1e-12)
    assert np.allclose(
        char_poly_coefficients(*example_unstable()), [1, 4.6, 4.29, 0, -1], atol=1e-12
    )


def test_char_poly_coefficients_paths_agree() -> None:
    """Test the exact expansion against the companion characteristic polynomial."""
    rng = np.random.default_rng(12)
    atil, b = _random_symmetric(rng, 3), _random_symmetric(rng, 3)
    exact = char_poly_coefficients(atil, b)
    comp = companion_matrix(HermitianOperator(atil), HermitianOperator(b))
    assert np.allclose(exact, -np.poly(comp), atol=1e-10)


def test_char_poly_coefficients_large_pencil() -> None:
    """Test that larger pencils fall back to the companion polynomial."""
    rng = np.random.default_rng(13)
    atil, b = _random_symmetric(rng, 7), _random_symmetric(rng, 7)
    coeffs = char_poly_coefficients(atil, b)
    assert coeffs.size == 15
    assert coeffs[0] == pytest.approx(-1.0)


def test_examples_positivity() -> None:
    """Test the positivity statements about B and Atil + B^2/4."""
    atil, b = example_stable()
    assert np.allclose(linalg.eigvalsh(b.entries), [2.0, 4.0])
    shifted = atil.entries + b.entries @ b.entries / 4.0
    expected = [(5.0 - math.sqrt(13.0)) / 2.0, (5.0 + math.sqrt(13.0)) / 2.0]
    assert np.allclose(linalg.eigvalsh(shifted), expected)
    assert commutator_norm(atil, b) > 0.0

    atil, b = example_unstable()
    assert np.allclose(linalg.eigvalsh(b.entries), [1.3, 3.3])
    shifted = atil.entries + b.entries @ b.entries / 4.0
    assert np.allclose(shifted, [[2.5725, 1.15], [1.15, 0.5725]])
    assert np.linalg.det(shifted) == pytest.approx(0.15025625)
    assert linalg.eigvalsh(shifted)[0] > 0.0
    assert not commuting_stability(atil, b)
    assert commutator_norm(atil, b) > commutator_tolerance(atil, b)
    assert commutator_tolerance(np.eye(2), np.eye(2)) == pytest.approx(2e-12)


def test_energy_values() -> None:
    """Test the energy of the reference states."""
    atil, _ = example_stable()
    assert energy(atil, QuadraticState(u=[0.0, 1.0], du=[0.0, 0.0])) == pytest.approx(-1.0)
    assert energy(atil, QuadraticState(u=[0.0, 0.0], du=[0.0, 0.0])) == 0.0
    assert energy(np.eye(2), QuadraticState(u=[1.0, 0.0], du=[0.0, 1.0])) == pytest.approx(2.0)


def test_energy_weighted() -> None:
    """Test that a diagonal weight enters both terms."""
    state = QuadraticState(u=[1.0, 1.0], du=[1.0, 0.0])
    weight = np.array([2.0, 3.0])
    # 2 * 1 + (2 * 1 + 3 * 1)
    assert energy(np.eye(2), state, weight) == pytest.approx(7.0)


def test_energy_dimension_mismatch() -> None:
    """Test that a state of the wrong length is rejected."""
    with pytest.raises(DimensionMismatchError):
        energy(np.eye(3), QuadraticState(u=[1.0, 0.0], du=[0.0, 0.0]))


def test_shifted_energy_values() -> None:
    """Test the shifted energy against direct arithmetic."""
    atil, b = example_stable()
    state = QuadraticState(u=[1.0, 0.0], du=[0.0, 0.0])
    assert shifted_energy(atil, b, 1.0, state) == pytest.approx(4.0)

    other = QuadraticState(u=[0.3, -0.7], du=[0.1, 0.2])
    assert shifted_energy(atil, b, 0.0, other) == pytest.approx(energy(atil, other))

    zero = QuadraticState(u=[0.0, 0.0], du=[0.0, 0.0])
    assert shifted_energy(atil, b, 2.5, zero) == 0.0


def test_current_values() -> None:
    """Test the current between reference states."""
    zero_b = np.zeros((2, 2))
    state = QuadraticState(u=[1.0, 0.5], du=[0.0, 0.0])
    assert current(zero_b, state, state) == 0.0

    u = QuadraticState(u=[1.0, 0.0], du=[0.0, 0.0])
    v = QuadraticState(u=[0.0, 0.0], du=[1.0, 0.0])
    assert current(zero_b, u, v) == pytest.approx(1.0)

    _, b = example_stable()
    assert current(b, u, u) == pytest.approx(3j)


def test_quadratic_state_validation() -> None:
    """Test state shape and finiteness checks."""
    with pytest.raises(DimensionMismatchError):
        QuadraticState(u=[1.0, 0.0], du=[0.0])
    with pytest.raises(ValueError):
        QuadraticState(u=[np.nan], du=[0.0])


def test_stability_search_trivial() -> None:
    """Test certificates for trivially positive shifted operators."""
    cert = stability_search(np.eye(2), np.zeros((2, 2)), [0.0])
    assert cert.certificate
    assert cert.min_eig_at_best == pytest.approx(1.0)

    cert = stability_search(np.zeros((2, 2)), 2.0 * np.eye(2), [1.0])
    assert cert.certificate
    assert cert.best_s == 1.0
    assert cert.min_eig_at_best == pytest.approx(1.0)


def test_stability_search_unstable_example() -> None:
    """Test that no shift certifies the example with a growing mode."""
    cert = stability_search(*example_unstable(), np.linspace(-5.0, 5.0, 401))
    assert not cert.certificate
    assert cert.min_eig_at_best < 0.0
    assert cert.min_eigs.shape == (401,)


def test_stability_search_tie_prefers_small_shift() -> None:
    """Test that ties are broken by the smallest |s|."""
    cert = stability_search(np.eye(1), np.zeros((1, 1)), [-2.0, 0.5, -0.5, 2.0])
    assert abs(cert.best_s) == 0.5
    cert = stability_search(np.eye(1), np.zeros((1, 1)), [1.0, 0.0, -1.0])
    assert cert.best_s == 0.0


def test_best_shift_tie_prefers_small_shift() -> None:
    """Test the shared tie-break on precomputed smallest eigenvalues."""
    cert = best_shift([-1.0, 0.25, -0.25, 1.0], [0.3, 0.3, 0.3, 0.3])
    assert abs(cert.best_s) == 0.25
    assert cert.min_eig_at_best == 0.3
    assert cert.certificate

    cert = best_shift([2.0, 1.0, 0.0], [-0.5, -0.1, -0.1 - 1e-15])
    assert cert.best_s == 0.0
    assert not cert.certificate

    cert = best_shift([2.0, 1.0, 0.0], [-0.5, -0.1, -0.2])
    assert cert.best_s == 1.0


def test_best_shift_length_mismatch() -> None:
    """Test that shifts and eigenvalues must pair up."""
    with pytest.raises(DimensionMismatchError):
        best_shift([0.0, 1.0], [0.5])


def test_stability_search_threads_match_serial() -> None:
    """Test that a parallel scan returns the serial result."""
    grid = np.linspace(-3.0, 3.0, 61)
    serial = stability_search(*example_stable(), grid)
    parallel = stability_search(*example_stable(), grid, threads=4)
    assert serial.best_s == parallel.best_s
    assert np.array_equal(serial.min_eigs, parallel.min_eigs)


def test_stability_search_empty_grid() -> None:
    """Test that an empty shift grid is rejected."""
    with pytest.raises(ValueError):
        stability_search(np.eye(2), np.eye(2), [])


def test_certificate_implies_stable() -> None:
    """Test that certified random pencils are classified Stable."""
    rng = np.random.default_rng(14)
    grid = np.linspace(-4.0, 4.0, 81)
    certified = 0
    for _ in range(30):
        atil = _random_symmetric(rng, 3) + 3.0 * np.eye(3)
        b = _random_symmetric(rng, 3)
        cert = stability_search(atil, b, grid)
        if cert.certificate:
            certified += 1
            assert pencil_eigenvalues(atil, b).classification is Stability.STABLE
    assert certified > 0


def test_stable_example_has_certificate() -> None:
    """Test that a positive shift certifies the negative-energy example."""
    cert = stability_search(*example_stable(), [1.5])
    assert cert.certificate


def test_conjugated_family_at_zero() -> None:
    """Test that A(0) is Atil + B^2/4 exactly."""
    atil, b = example_unstable()
    a0 = conjugated_family(atil, b, 0.0)
    assert np.array_equal(a0.entries, atil.entries + b.entries @ b.entries / 4.0)


def test_conjugated_family_spectrum_invariant() -> None:
    """Test that the spectrum of A(t) does not depend on t."""
    atil, b = example_unstable()
    reference = linalg.eigvalsh(atil.entries + b.entries @ b.entries / 4.0)
    assert np.all(reference > 0.0)
    rng = np.random.default_rng(15)
    for t in [1.7, *rng.uniform(-10.0, 10.0, 10)]:
        family = conjugated_family(atil, b, float(t))
        values = linalg.eigvalsh(family.entries)
        assert np.allclose(values, reference, rtol=1e-10, atol=0.0)


def test_conjugated_family_scalar_b() -> None:
    """Test that a scalar B leaves Atil + beta^2/4 unchanged."""
    atil = np.array([[1.0, 0.5], [0.5, -2.0]])
    b = 1.5 * np.eye(2)
    family = conjugated_family(atil, b, 3.2)
    assert np.allclose(family.entries, atil + (1.5**2 / 4.0) * np.eye(2), atol=1e-12)


def test_commuting_stability() -> None:
    """Test the commuting-case criterion."""
    assert commuting_stability(np.diag([2.0, 3.0]), np.diag([1.0, 0.5]))
    assert not commuting_stability(np.diag([-2.0, 3.0]), np.diag([1.0, 0.5]))
    assert not commuting_stability(*example_stable())


def test_commuting_solution_matches_matrix_exponential() -> None:
    """Test the closed form against exp(tM) of the first-order system."""
    atil = np.diag([2.0, -0.1])
    b = np.diag([1.0, 1.0])
    state = QuadraticState(u=[1.0, 0.5j], du=[0.2, -0.3])
    t = 2.3

    closed = commuting_solution(atil, b, state, t)

    system = np.block([[np.zeros((2, 2)), np.eye(2)], [-atil, -1j * b]])
    y = linalg.expm(system * t) @ np.concatenate([state.u, state.du])
    assert np.allclose(closed.u, y[:2], atol=1e-10)
    assert np.allclose(closed.du, y[2:], atol=1e-10)
    assert closed.t == t


def test_commuting_solution_requires_commuting_pair() -> None:
    """Test that the closed form refuses non-commuting operators."""
    atil, b = example_stable()
    with pytest.raises(ValueError):
        commuting_solution(atil, b, QuadraticState(u=[1.0, 0.0], du=[0.0, 0.0]), 1.0)
