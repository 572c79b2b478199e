"""Quadratic operator pencils lambda -> Atil - lambda B - lambda^2 in finite dimensions.

Mode convention: a solution of u'' + iBu' + Atil u = 0 of the form
u(t) = exp(i lambda t) psi requires (Atil - lambda B - lambda^2) psi = 0, so a
root with Im(lambda) < 0 grows like exp(-Im(lambda) t). Instability is flagged
on nonreal roots. Note that the literature sometimes phrases the same
witness as "an eigenvalue with real part < 0"; both parts are reported.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy import linalg

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11: backport matching enum.StrEnum str()/format()

    class StrEnum(str, Enum):  # type: ignore[no-redef]
        __str__ = str.__str__
        __format__ = str.__format__

from .exceptions import DimensionMismatchError
from .exceptions import EigenSolverError
from .exceptions import NotHermitianError
from .sweeps import run_sweep

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
TOL_IMAG = 1e-8
# Smallest eigenvalues within this relative distance of the best count as ties.
TIE_RTOL = 1e-12

ComplexArray = NDArray[np.complex128]


def is_hermitian(matrix: ArrayLike, rtol: float = HERMITIAN_RTOL) -> bool:
    """Check ``matrix`` against its conjugate transpose, relative to its largest entry."""
    x = np.asarray(matrix)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    return bool(np.max(np.abs(x - x.conj().T), initial=0.0) <= rtol * scale)


@dataclass(frozen=True)
class HermitianOperator:
    """An n x n Hermitian matrix.

    Real symmetric input keeps its real dtype so that companion
    eigen-solves run in real arithmetic and return exact conjugate pairs.
    """

    entries: NDArray[Any]

    def __post_init__(self) -> None:
        x = np.asarray(self.entries)
        if not np.iscomplexobj(x):
            x = x.astype(np.float64)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise DimensionMismatchError(f"Operator must be square, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NotHermitianError("Operator entries must be finite")
        if not is_hermitian(x):
            raise NotHermitianError("Operator is not Hermitian")
        x.setflags(write=False)
        object.__setattr__(self, "entries", x)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.entries)


def as_hermitian(op: "HermitianOperator | ArrayLike") -> HermitianOperator:
    """Wrap ``op`` as a HermitianOperator, validating it on the way."""
    if isinstance(op, HermitianOperator):
        return op
    return HermitianOperator(np.asarray(op))


class Stability(StrEnum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class PencilSpectrum:
    """All 2n roots of det(Atil - lambda B - lambda^2) with the stability verdict."""

    eigenvalues: ComplexArray
    classification: Stability
    growth_rate: float
    tol_imag: float

    @property
    def real_eigenvalues(self) -> NDArray[np.float64]:
        mask = np.abs(self.eigenvalues.imag) <= self.tol_imag
        return np.sort(self.eigenvalues[mask].real)

    @property
    def nonreal_eigenvalues(self) -> ComplexArray:
        mask = np.abs(self.eigenvalues.imag) > self.tol_imag
        return self.eigenvalues[mask]


@dataclass
class QuadraticState:
    """State (u, u') of the second-order equation at time t."""

    u: ComplexArray
    du: ComplexArray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.complex128)
        self.du = np.asarray(self.du, dtype=np.complex128)
        if self.u.shape != self.du.shape or self.u.ndim != 1:
            raise DimensionMismatchError(
                f"u and du must be vectors of equal length, got {self.u.shape} and {self.du.shape}"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.du))):
            raise ValueError("State entries must be finite")


class StabilityCertificate(NamedTuple):
    best_s: float
    min_eig_at_best: float
    certificate: bool
    min_eigs: NDArray[np.float64]


def _check_pair(atil: HermitianOperator, b: HermitianOperator) -> None:
    if atil.n != b.n:
        raise DimensionMismatchError(
            f"Dimension mismatch: Atil is {atil.n}x{atil.n}, B is {b.n}x{b.n}"
        )


def _check_vector(op: HermitianOperator, *vectors: ComplexArray) -> None:
    for v in vectors:
        if v.shape != (op.n,):
            raise DimensionMismatchError(
                f"Vector of shape {v.shape} does not match operator dimension {op.n}"
            )


def companion_matrix(Atil: HermitianOperator, B: HermitianOperator) -> NDArray[Any]:
    """Block matrix [[0, I], [Atil, -B]] acting on (psi, lambda psi)."""
    _check_pair(Atil, B)
    n = Atil.n
    dtype = np.complex128 if not (Atil.is_real and B.is_real) else np.float64
    comp = np.zeros((2 * n, 2 * n), dtype=dtype)
    comp[:n, n:] = np.eye(n)
    comp[n:, :n] = Atil.entries
    comp[n:, n:] = -B.entries
    return comp


def pencil_eigenvalues(
    Atil: "HermitianOperator | ArrayLike",
    B: "HermitianOperator | ArrayLike",
    tol_imag: float = TOL_IMAG,
) -> PencilSpectrum:
    """Compute the 2n pencil roots by companion linearization and classify stability.

    Args:
        Atil: Hermitian operator Atil = A + C
        B: Hermitian first-order coefficient
        tol_imag: Relative threshold separating real from nonreal roots

    Returns:
        PencilSpectrum with roots sorted by (Re, Im)
    """
    atil, b = as_hermitian(Atil), as_hermitian(B)
    comp = companion_matrix(atil, b)
    eigenvalues = linalg.eigvals(comp).astype(np.complex128)
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigenvalues = eigenvalues[order]

    radius = float(np.max(np.abs(eigenvalues), initial=0.0))
    threshold = tol_imag * max(1.0, radius)
    max_imag = float(np.max(np.abs(eigenvalues.imag), initial=0.0))
    classification = Stability.STABLE if max_imag <= threshold else Stability.UNSTABLE
    growth_rate = max(0.0, float(np.max(-eigenvalues.imag, initial=0.0)))

    if atil.n <= 6:
        residual = float(np.max(root_residuals(atil, b, eigenvalues)))
        if residual > 1e-6:
            logger.warning(f"Pencil root residual {residual:.3g} exceeds 1e-6 relative")

    logger.debug(
        f"Pencil of size {atil.n}: {classification.value}, growth rate {growth_rate:.6g}"
    )
    return PencilSpectrum(eigenvalues, classification, growth_rate, threshold)


def char_poly_value(
    Atil: "HermitianOperator | ArrayLike", B: "HermitianOperator | ArrayLike", lam: complex
) -> complex:
    """det(Atil - lam B - lam^2 I) evaluated directly."""
    atil, b = as_hermitian(Atil), as_hermitian(B)
    _check_pair(atil, b)
    mat = atil.entries - lam * b.entries - lam * lam * np.eye(atil.n)
    return complex(np.linalg.det(mat))


def _poly_det(entries: list[list[NDArray[Any]]]) -> NDArray[Any]:
    # Laplace expansion along the first row; entries are ascending coefficient arrays
    n = len(entries)
    if n == 1:
        return entries[0][0]
    total: NDArray[Any] = np.zeros(1)
    for j in range(n):
        minor = [row[:j] + row[j + 1 :] for row in entries[1:]]
        term = P.polymul(entries[0][j], _poly_det(minor))
        total = P.polyadd(total, term) if j % 2 == 0 else P.polysub(total, term)
    return total


def char_poly_coefficients(
    Atil: "HermitianOperator | ArrayLike", B: "HermitianOperator | ArrayLike"
) -> NDArray[Any]:
    """Coefficients of det(Atil - lambda B - lambda^2 I), highest degree first.

    Small pencils (n <= 6) are expanded exactly over polynomial entries, so
    integer inputs give integer coefficients. Larger ones fall back to the
    characteristic polynomial of the companion matrix.
    """
    atil, b = as_hermitian(Atil), as_hermitian(B)
    _check_pair(atil, b)
    n = atil.n
    if n > 6:
        coeffs = np.poly(companion_matrix(atil, b))
        return (-1) ** n * coeffs

    entries = [
        [
            np.array(
                [atil.entries[i, j], -b.entries[i, j], -1.0 if i == j else 0.0]
            )
            for j in range(n)
        ]
        for i in range(n)
    ]
    ascending = _poly_det(entries)
    padded = np.zeros(2 * n + 1, dtype=ascending.dtype)
    padded[: min(len(ascending), 2 * n + 1)] = ascending[: 2 * n + 1]
    return padded[::-1]


def example_stable() -> tuple[HermitianOperator, HermitianOperator]:
    """Non-commuting pair with negative energy data but four real pencil roots."""
    return (
        HermitianOperator(np.array([[1.0, 0.0], [0.0, -1.0]])),
        HermitianOperator(np.array([[3.0, 1.0], [1.0, 3.0]])),
    )


def example_unstable() -> tuple[HermitianOperator, HermitianOperator]:
    """Non-commuting pair with Atil + B^2/4 strictly positive and a growing mode."""
    return (
        HermitianOperator(np.array([[1.0, 0.0], [0.0, -1.0]])),
        HermitianOperator(np.array([[2.3, 1.0], [1.0, 2.3]])),
    )


def _weighted_inner(x: ComplexArray, y: ComplexArray, weight: NDArray[Any] | None) -> complex:
    if weight is None:
        return complex(np.vdot(x, y))
    return complex(np.vdot(x, weight * y))


def energy(
    Atil: "HermitianOperator | ArrayLike",
    state: QuadraticState,
    weight: NDArray[Any] | None = None,
) -> float:
    """Conserved energy ||u'||^2 + <u, Atil u>.

    With a diagonal ``weight`` the inner product is <x, y> = x^* W y and
    ``Atil`` may be any matrix that is self-adjoint in it.
    """
    atil = np.asarray(Atil.entries if isinstance(Atil, HermitianOperator) else Atil)
    if atil.shape != (state.u.size, state.u.size):
        raise DimensionMismatchError(
            f"State of length {state.u.size} does not match operator shape {atil.shape}"
        )
    kinetic = _weighted_inner(state.du, state.du, weight).real
    potential = _weighted_inner(state.u, atil @ state.u, weight).real
    return kinetic + potential


def shifted_energy(
    Atil: "HermitianOperator | ArrayLike",
    B: "HermitianOperator | ArrayLike",
    s: float,
    state: QuadraticState,
    weight: NDArray[Any] | None = None,
) -> float:
    """Energy of the gauge-shifted solution exp(ist)u.

    ||u' + isu||^2 + <u, (Atil + sB - s^2)u>.
    """
    atil = np.asarray(Atil.entries if isinstance(Atil, HermitianOperator) else Atil)
    b = np.asarray(B.entries if isinstance(B, HermitianOperator) else B)
    n = state.u.size
    if atil.shape != (n, n) or b.shape != (n, n):
        raise DimensionMismatchError(
            f"State of length {n} does not match operator shapes {atil.shape}, {b.shape}"
        )
    shifted_velocity = state.du + 1j * s * state.u
    op_u = atil @ state.u + s * (b @ state.u) - s * s * state.u
    kinetic = _weighted_inner(shifted_velocity, shifted_velocity, weight).real
    return kinetic + _weighted_inner(state.u, op_u, weight).real


def current(
    B: "HermitianOperator | ArrayLike",
    state_u: QuadraticState,
    state_v: QuadraticState,
    weight: NDArray[Any] | None = None,
) -> complex:
    """Conserved current <u|v'> - <u'|v> + i<u|Bv> between two solutions."""
    b = np.asarray(B.entries if isinstance(B, HermitianOperator) else B)
    n = state_u.u.size
    if state_v.u.size != n or b.shape != (n, n):
        raise DimensionMismatchError("States and B must share one dimension")
    return (
        _weighted_inner(state_u.u, state_v.du, weight)
        - _weighted_inner(state_u.du, state_v.u, weight)
        + 1j * _weighted_inner(state_u.u, b @ state_v.u, weight)
    )


def shifted_operator(Atil: HermitianOperator, B: HermitianOperator, s: float) -> NDArray[Any]:
    """Matrix of Atil + sB - s^2 I."""
    return Atil.entries + s * B.entries - s * s * np.eye(Atil.n)


def stability_search(
    Atil: "HermitianOperator | ArrayLike",
    B: "HermitianOperator | ArrayLike",
    s_grid: ArrayLike,
    threads: int = 1,
) -> StabilityCertificate:
    """Scan shifts s for positivity of Atil + sB - s^2.

    A nonnegative smallest eigenvalue at some s certifies that no solution
    grows exponentially. The best s maximises the smallest eigenvalue; ties
    go to the smallest |s|. With threads > 1 the shifts are scanned in
    parallel; results keep the order of ``s_grid``.

    Raises:
        EigenSolverError: If the eigen-solve fails for some shift
    """
    atil, b = as_hermitian(Atil), as_hermitian(B)
    _check_pair(atil, b)
    grid = np.atleast_1d(np.asarray(s_grid, dtype=np.float64))
    if grid.size == 0:
        raise ValueError("s_grid must not be empty")

    def smallest(s: float) -> float:
        return float(linalg.eigvalsh(shifted_operator(atil, b, s), subset_by_index=[0, 0])[0])

    outcomes = run_sweep(smallest, [float(s) for s in grid], threads=threads, label="shift")
    failed = [outcome for outcome in outcomes if not outcome.ok]
    if failed:
        raise EigenSolverError(
            f"Eigen-solve failed for s={failed[0].item}: {failed[0].error}",
            {"n": atil.n, "failures": len(failed)},
        )
    min_eigs = np.array([outcome.result for outcome in outcomes], dtype=np.float64)
    return best_shift(grid, min_eigs)


def best_shift(s_grid: ArrayLike, min_eigs: ArrayLike) -> StabilityCertificate:
    """Pick the shift maximising the smallest eigenvalue; ties go to the smallest |s|."""
    grid = np.atleast_1d(np.asarray(s_grid, dtype=np.float64))
    values = np.atleast_1d(np.asarray(min_eigs, dtype=np.float64))
    if grid.size == 0 or grid.shape != values.shape:
        raise DimensionMismatchError(
            f"s_grid and min_eigs must be nonempty and equally long, got {grid.shape} and {values.shape}"
        )
    best = float(np.max(values))
    ties = np.flatnonzero(values >= best - TIE_RTOL * max(1.0, abs(best)))
    index = int(ties[np.argmin(np.abs(grid[ties]))])
    certificate = best >= 0.0
    logger.debug(
        f"Shift scan over {grid.size} values: best s={grid[index]:.6g}, "
        f"min eigenvalue {values[index]:.6g}, certificate={certificate}"
    )
    return StabilityCertificate(float(grid[index]), float(values[index]), certificate, values)


def _unitary_phase(B: HermitianOperator, t: float) -> NDArray[np.complex128]:
    """exp(i t B / 2) through the eigendecomposition of B."""
    beta, vecs = linalg.eigh(B.entries)
    return (vecs * np.exp(0.5j * t * beta)) @ vecs.conj().T


def conjugated_family(
    Atil: "HermitianOperator | ArrayLike", B: "HermitianOperator | ArrayLike", t: float
) -> HermitianOperator:
    """A(t) = exp(itB/2) (Atil + B^2/4) exp(-itB/2), unitarily equivalent to A(0)."""
    atil, b = as_hermitian(Atil), as_hermitian(B)
    _check_pair(atil, b)
    base = atil.entries + b.entries @ b.entries / 4.0
    if t == 0.0:
        return HermitianOperator(base)
    u = _unitary_phase(b, t)
    conj = u @ base @ u.conj().T
    return HermitianOperator(0.5 * (conj + conj.conj().T))


def commutator_norm(
    Atil: "HermitianOperator | ArrayLike", B: "HermitianOperator | ArrayLike"
) -> float:
    """Frobenius norm of Atil B - B Atil."""
    atil, b = as_hermitian(Atil), as_hermitian(B)
    _check_pair(atil, b)
    return float(np.linalg.norm(atil.entries @ b.entries - b.entries @ atil.entries))


def commutator_tolerance(
    Atil: "HermitianOperator | ArrayLike", B: "HermitianOperator | ArrayLike"
) -> float:
    """Commutator norm below which Atil and B are treated as commuting."""
    atil, b = as_hermitian(Atil), as_hermitian(B)
    scale = max(1.0, float(np.linalg.norm(atil.entries)) * float(np.linalg.norm(b.entries)))
    return HERMITIAN_RTOL * scale


def commuting_stability(
    Atil: "HermitianOperator | ArrayLike", B: "HermitianOperator | ArrayLike"
) -> bool:
    """Sufficient stability criterion when Atil and B commute and Atil + B^2/4 is positive."""
    atil, b = as_hermitian(Atil), as_hermitian(B)
    if commutator_norm(atil, b) > commutator_tolerance(atil, b):
        return False
    base = atil.entries + b.entries @ b.entries / 4.0
    return bool(linalg.eigvalsh(base)[0] >= 0.0)


def commuting_solution(
    Atil: "HermitianOperator | ArrayLike",
    B: "HermitianOperator | ArrayLike",
    state0: QuadraticState,
    t: float,
) -> QuadraticState:
    """Closed-form solution at time ``t`` for commuting Atil and B.

    With cA = Atil + B^2/4, v(t) = exp(itB/2)u(t) solves v'' + cA v = 0 and is
    given by cos(t cA^{1/2}) v0 + cA^{-1/2} sin(t cA^{1/2}) v0'.

    Raises:
        ValueError: If the operators do not commute or cA is not positive
    """
    atil, b = as_hermitian(Atil), as_hermitian(B)
    _check_vector(atil, state0.u, state0.du)
    if not commuting_stability(atil, b):
        raise ValueError("Closed form requires commuting Atil, B with Atil + B^2/4 >= 0")

    w, q = linalg.eigh(atil.entries + b.entries @ b.entries / 4.0)
    omega = np.sqrt(np.clip(w, 0.0, None))
    dt = t - state0.t
    cos_t = np.cos(omega * dt)
    # sin(omega dt)/omega, extended continuously at omega = 0
    sinc_t = dt * np.sinc(omega * dt / np.pi)

    v0 = state0.u
    dv0 = state0.du + 0.5j * (b.entries @ state0.u)
    c0, c1 = q.conj().T @ v0, q.conj().T @ dv0
    v = q @ (cos_t * c0 + sinc_t * c1)
    dv = q @ (-omega * np.sin(omega * dt) * c0 + cos_t * c1)

    # u = exp(-i t B/2) v, phases measured from the initial time
    back = _unitary_phase(b, -dt)
    u = back @ v
    du = back @ (dv - 0.5j * (b.entries @ v))
    return QuadraticState(u=u, du=du, t=t)


def root_residuals(
    Atil: "HermitianOperator | ArrayLike",
    B: "HermitianOperator | ArrayLike",
    eigenvalues: ArrayLike,
) -> NDArray[np.float64]:
    """|det(Atil - lam B - lam^2)| relative to sum |c_k| |lam|^k for each root lam.

    The denominator is the magnitude of the characteristic polynomial's
    summands at lam, floored at 1.
    """
    atil, b = as_hermitian(Atil), as_hermitian(B)
    coeffs = np.abs(char_poly_coefficients(atil, b))
    roots = np.atleast_1d(np.asarray(eigenvalues, dtype=np.complex128))
    residuals = np.empty(roots.size)
    for k, lam in enumerate(roots):
        scale = max(1.0, float(np.polyval(coeffs, abs(lam))))
        residuals[k] = abs(char_poly_value(atil, b, complex(lam))) / scale
    return residuals
