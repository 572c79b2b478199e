"""Time integration of u'' + iBu' + Atil u = 0 with conserved-quantity tracking.

The first-order system y' = My, y = (u, u'), M = [[0, I], [-Atil, -iB]] is
stepped with the implicit midpoint rule. M is constant, so the step matrix
is factored once per run. Norms, energies and currents are taken in the
inner product <x, y> = x^* W y with a diagonal weight W, or the Euclidean
one when no weight is given.
"""

import csv
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import field_validator
from pydantic import model_validator
from scipy import linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .exceptions import DimensionMismatchError
from .exceptions import EvolutionError
from .pencil import HermitianOperator
from .pencil import QuadraticState

logger = logging.getLogger(__name__)

GROWTH_THRESHOLD = 1e-3
# Systems up to this size (2n) are advanced with a precomputed dense propagator.
PROPAGATOR_LIMIT = 64
BOUND_SLACK = 1e-9

Operator = NDArray[Any] | sparse.spmatrix | HermitianOperator


class EvolutionConfig(BaseModel):
    """Time step, horizon and recording options of one run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(..., gt=0, description="Time step")
    T: float = Field(..., gt=0, description="Final time")
    record_every: int = Field(default=1, ge=1, description="Record every k-th step")
    s_list: list[float] = Field(
        default_factory=list, description="Shifts s for which E_{s,u} is tracked"
    )

    @field_validator("s_list")
    @classmethod
    def validate_shifts(cls, v: list[float]) -> list[float]:
        if not all(math.isfinite(s) for s in v):
            raise ValueError("Shifts must be finite")
        return v

    @model_validator(mode="after")
    def _check_step(self) -> "EvolutionConfig":
        if self.dt > self.T:
            raise ValueError(f"Time step dt={self.dt} exceeds final time T={self.T}")
        return self

    @property
    def steps(self) -> int:
        return max(1, round(self.T / self.dt))


@dataclass
class Trajectory:
    """Recorded snapshots of one run and the series derived from them."""

    times: NDArray[np.float64]
    u: NDArray[np.complex128]
    du: NDArray[np.complex128]
    norms: NDArray[np.float64]
    energies: NDArray[np.float64]
    shifted_energies: dict[float, NDArray[np.float64]] = field(default_factory=dict)
    currents: NDArray[np.complex128] | None = None
    weight: NDArray[np.float64] | None = None
    dt: float = 0.0
    record_every: int = 1

    def __post_init__(self) -> None:
        count = self.times.shape[0]
        series = [self.u, self.du, self.norms, self.energies, *self.shifted_energies.values()]
        if self.currents is not None:
            series.append(self.currents)
        if any(len(x) != count for x in series):
            raise DimensionMismatchError("Trajectory series lengths differ")

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def final_state(self) -> QuadraticState:
        return QuadraticState(u=self.u[-1], du=self.du[-1], t=float(self.times[-1]))


class ConservationDrift(NamedTuple):
    max_rel_drift_E: float
    max_rel_drift_Es: float
    max_drift_j: float


def _as_operator(op: Operator) -> NDArray[Any] | sparse.csr_matrix:
    if isinstance(op, HermitianOperator):
        return op.entries
    if sparse.issparse(op):
        return sparse.csr_matrix(op)
    return np.asarray(op)


def _apply(op: NDArray[Any] | sparse.csr_matrix, vectors: NDArray[Any]) -> NDArray[Any]:
    """Apply ``op`` to each row of ``vectors``."""
    return np.asarray((op @ vectors.T).T)


def _inner_rows(
    x: NDArray[np.complex128], y: NDArray[np.complex128], weight: NDArray[np.float64] | None
) -> NDArray[np.complex128]:
    """Row-wise <x_k, y_k> in the weighted inner product."""
    if weight is None:
        return np.einsum("ij,ij->i", x.conj(), y)
    return np.einsum("ij,j,ij->i", x.conj(), weight, y)


class _Stepper:
    """Implicit midpoint step y_{n+1} = (I - dt/2 M)^{-1} (I + dt/2 M) y_n."""

    def __init__(
        self, atil: NDArray[Any] | sparse.csr_matrix, b: NDArray[Any] | sparse.csr_matrix, dt: float
    ):
        n = atil.shape[0]
        self.size = 2 * n
        if sparse.issparse(atil) or sparse.issparse(b):
            ident = sparse.identity(n, dtype=np.complex128, format="csr")
            gen = sparse.bmat(
                [[None, ident], [-sparse.csr_matrix(atil), -1j * sparse.csr_matrix(b)]],
                format="csc",
            )
            full = sparse.identity(2 * n, dtype=np.complex128, format="csc")
            self._rhs = sparse.csr_matrix(full + 0.5 * dt * gen)
            self._lu = splinalg.splu(sparse.csc_matrix(full - 0.5 * dt * gen))
            self._mode = "sparse"
            return

        gen = np.zeros((2 * n, 2 * n), dtype=np.complex128)
        gen[:n, n:] = np.eye(n)
        gen[n:, :n] = -atil
        gen[n:, n:] = -1j * b
        full = np.eye(2 * n, dtype=np.complex128)
        lu = linalg.lu_factor(full - 0.5 * dt * gen)
        rhs = full + 0.5 * dt * gen
        if 2 * n <= PROPAGATOR_LIMIT:
            self._propagator = linalg.lu_solve(lu, rhs)
            self._mode = "propagator"
        else:
            self._lu_dense = lu
            self._rhs_dense = rhs
            self._mode = "dense"

    def __call__(self, y: NDArray[np.complex128]) -> NDArray[np.complex128]:
        if self._mode == "propagator":
            return self._propagator @ y
        if self._mode == "dense":
            return linalg.lu_solve(self._lu_dense, self._rhs_dense @ y)
        return np.asarray(self._lu.solve(self._rhs @ y))


def evolve(
    Atil: Operator,
    B: Operator,
    weight: NDArray[np.float64] | None,
    initial: QuadraticState,
    cfg: EvolutionConfig,
    partner: QuadraticState | None = None,
) -> Trajectory:
    """Integrate u'' + iBu' + Atil u = 0 with the implicit midpoint rule.

    Args:
        Atil: Operator self-adjoint in the weighted inner product, dense or sparse
        B: First-order coefficient, Hermitian (diagonal real for discretized systems)
        weight: Diagonal weights of the inner product, or None for Euclidean
        initial: Initial data (u, u') at time initial.t
        cfg: Step size, horizon and recording options
        partner: Optional second initial datum evolved alongside; the current
            j_{u,v} between both solutions is then recorded

    Returns:
        Trajectory with norms, energies, shifted energies and currents

    Raises:
        DimensionMismatchError: If operators, weight and data disagree in size
        EvolutionError: If the linear solve fails or the state becomes nonfinite
    """
    atil = _as_operator(Atil)
    b = _as_operator(B)
    n = initial.u.size
    if atil.shape != (n, n) or b.shape != (n, n):
        raise DimensionMismatchError(
            f"Operators of shape {atil.shape}, {b.shape} do not match state length {n}"
        )
    if weight is not None:
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (n,) or np.any(weight <= 0.0):
            raise DimensionMismatchError("Weight must be a positive vector of the state length")
    if partner is not None and partner.u.size != n:
        raise DimensionMismatchError("Partner state does not match the state length")

    try:
        stepper = _Stepper(atil, b, cfg.dt)
    except (linalg.LinAlgError, RuntimeError, ValueError) as e:
        raise EvolutionError(f"Failed to factor the step matrix: {e}", initial.t, initial) from e

    columns = 1 if partner is None else 2
    y = np.empty((2 * n, columns), dtype=np.complex128)
    y[:n, 0], y[n:, 0] = initial.u, initial.du
    if partner is not None:
        y[:n, 1], y[n:, 1] = partner.u, partner.du

    steps = cfg.steps
    if not math.isclose(steps * cfg.dt, cfg.T, rel_tol=1e-9):
        logger.warning(f"T={cfg.T} is not a multiple of dt={cfg.dt}; running {steps} steps")

    record = [k for k in range(steps + 1) if k % cfg.record_every == 0]
    if record[-1] != steps:
        record.append(steps)
    snapshots = np.empty((len(record), 2 * n, columns), dtype=np.complex128)
    times = initial.t + cfg.dt * np.asarray(record, dtype=np.float64)

    logger.info(f"Evolving system of size {n} for {steps} steps (dt={cfg.dt}, T={cfg.T})")
    slot = 0
    for k in range(steps + 1):
        if k > 0:
            y_next = stepper(y)
            if not np.all(np.isfinite(y_next)):
                last = QuadraticState(u=y[:n, 0], du=y[n:, 0], t=initial.t + (k - 1) * cfg.dt)
                logger.warning(f"Nonfinite state at step {k}, aborting")
                raise EvolutionError(
                    f"State became nonfinite at t={initial.t + k * cfg.dt:.6g}",
                    last.t,
                    last,
                )
            y = y_next
        if slot < len(record) and record[slot] == k:
            snapshots[slot] = y
            slot += 1

    u = snapshots[:, :n, 0]
    du = snapshots[:, n:, 0]
    au = _apply(atil, u)
    bu = _apply(b, u)

    norms = np.sqrt(np.maximum(_inner_rows(u, u, weight).real, 0.0))
    energies = _inner_rows(du, du, weight).real + _inner_rows(u, au, weight).real

    shifted: dict[float, NDArray[np.float64]] = {}
    for s in cfg.s_list:
        velocity = du + 1j * s * u
        op_u = au + s * bu - s * s * u
        shifted[s] = _inner_rows(velocity, velocity, weight).real + _inner_rows(u, op_u, weight).real

    currents = None
    if partner is not None:
        v = snapshots[:, :n, 1]
        dv = snapshots[:, n:, 1]
        currents = (
            _inner_rows(u, dv, weight)
            - _inner_rows(du, v, weight)
            + 1j * _inner_rows(u, _apply(b, v), weight)
        )

    logger.debug(f"Recorded {len(record)} snapshots, final norm {norms[-1]:.6g}")
    return Trajectory(
        times=times,
        u=u,
        du=du,
        norms=norms,
        energies=energies,
        shifted_energies=shifted,
        currents=currents,
        weight=weight,
        dt=cfg.dt,
        record_every=cfg.record_every,
    )


def _relative_drift(series: NDArray[Any]) -> float:
    initial = series[0]
    drift = float(np.max(np.abs(series - initial)))
    scale = abs(initial)
    return drift / scale if scale > 0.0 else drift


def conserved_series_check(traj: Trajectory) -> ConservationDrift:
    """Maximal drifts of E_u and E_{s,u} relative to their initial values, and of j_{u,v}.

    Relative drifts fall back to absolute ones when the initial value is 0.
    Quantities that were not recorded report 0.
    """
    drift_e = _relative_drift(traj.energies)
    drift_es = max((_relative_drift(v) for v in traj.shifted_energies.values()), default=0.0)
    drift_j = 0.0
    if traj.currents is not None:
        drift_j = float(np.max(np.abs(traj.currents - traj.currents[0])))
    return ConservationDrift(drift_e, drift_es, drift_j)


def gronwall_bound(gamma: float, E: float, norm_t1: float, dt_span: float) -> float:
    """Bound on ||u(t_2)|| from ||u(t_1)||, the energy E and a lower bound gamma of Atil.

    Args:
        gamma: Lower bound of Atil
        E: Conserved energy of the solution
        norm_t1: ||u(t_1)||
        dt_span: t_2 - t_1 >= 0

    Raises:
        ValueError: If dt_span < 0, or gamma >= 0 with negative energy
    """
    if dt_span < 0.0:
        raise ValueError(f"Time span must be nonnegative, got {dt_span}")
    if gamma < 0.0:
        root = math.sqrt(-gamma)
        return (norm_t1 + math.sqrt(abs(E)) * dt_span) * math.exp(root * dt_span)
    if E < 0.0:
        raise ValueError(f"Energy E={E} must be nonnegative when gamma={gamma} >= 0")
    if gamma == 0.0:
        return norm_t1 + math.sqrt(E) * dt_span
    root = math.sqrt(gamma)
    decay = math.exp(-root * dt_span)
    return math.sqrt(2.0 * E / gamma) * (1.0 - decay) + norm_t1 * decay


def _bound_rows(
    gamma: float, energy: NDArray[np.float64], norm_t1: NDArray[np.float64], span: NDArray[np.float64]
) -> NDArray[np.float64]:
    # vectorized gronwall_bound over pairs; energy and norm_t1 broadcast against span
    if gamma < 0.0:
        return (norm_t1 + np.sqrt(np.abs(energy)) * span) * np.exp(math.sqrt(-gamma) * span)
    if gamma == 0.0:
        return norm_t1 + np.sqrt(energy) * span
    decay = np.exp(-math.sqrt(gamma) * span)
    return np.sqrt(2.0 * energy / gamma) * (1.0 - decay) + norm_t1 * decay


def certify_bounds(
    traj: Trajectory, gamma: float, s: float | None = None, chunk: int = 256
) -> bool:
    """Check the energy bound on ||u(t_2)|| for every recorded pair t_1 <= t_2.

    With ``s`` the shifted energy E_{s,u} replaces E_u and ``gamma`` must be
    a lower bound of Atil + sB - s^2; ``s`` must be one of the tracked shifts.

    Raises:
        ValueError: If ``s`` was not tracked, or gamma >= 0 with negative energy
    """
    if s is None:
        energy = traj.energies
    elif s in traj.shifted_energies:
        energy = traj.shifted_energies[s]
    else:
        raise ValueError(f"Shifted energy for s={s} was not recorded")

    if gamma >= 0.0 and np.any(energy < 0.0):
        # roundoff may push an exactly zero energy slightly negative
        if np.min(energy) < -1e-12 * max(1.0, float(np.max(np.abs(energy)))):
            raise ValueError(f"Negative energy is incompatible with gamma={gamma}")
        energy = np.maximum(energy, 0.0)

    times, norms = traj.times, traj.norms
    count = len(times)
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        span = times[None, :] - times[start:stop, None]
        bounds = _bound_rows(
            gamma, energy[start:stop, None], norms[start:stop, None], np.maximum(span, 0.0)
        )
        violated = (span >= 0.0) & (norms[None, :] > bounds * (1.0 + BOUND_SLACK))
        if np.any(violated):
            i, j = np.argwhere(violated)[0]
            logger.warning(
                f"Energy bound violated between t={times[start + i]:.6g} and t={times[j]:.6g}"
            )
            return False
    return True


def _phase_operator(b: NDArray[Any] | sparse.csr_matrix) -> tuple[NDArray[Any], NDArray[Any] | None]:
    """Eigenvalues and eigenvectors of B; eigenvectors are None for diagonal B."""
    if sparse.issparse(b):
        off = b - sparse.diags(b.diagonal())
        if off.count_nonzero():
            b = b.toarray()
        else:
            return np.real(b.diagonal()), None
    dense = np.asarray(b)
    if np.count_nonzero(dense - np.diag(np.diag(dense))) == 0:
        return np.real(np.diag(dense)), None
    beta, vecs = linalg.eigh(dense)
    return beta, vecs


def v_transform_residual(Atil: Operator, B: Operator, traj: Trajectory) -> float:
    """Residual of v'' + A(t)v = 0 for v(t) = exp(itB/2)u(t) along a trajectory.

    v'' is approximated by centered second differences on consecutive
    snapshots, and A(t)v = exp(itB/2)(Atil + B^2/4)u, which is the
    conjugated operator exp(itB/2)(Atil + B^2/4)exp(-itB/2) applied to v.

    Returns:
        The largest residual norm over interior snapshots

    Raises:
        ValueError: If the trajectory has fewer than 3 snapshots or was not
            recorded at every step
    """
    if len(traj) < 3:
        raise ValueError("At least 3 snapshots are required")
    if traj.record_every != 1:
        raise ValueError("v-transform residual needs snapshots at every step")

    atil = _as_operator(Atil)
    b = _as_operator(B)
    beta, vecs = _phase_operator(b)

    def phase(t: NDArray[np.float64], x: NDArray[np.complex128]) -> NDArray[np.complex128]:
        factors = np.exp(0.5j * t[:, None] * beta[None, :])
        if vecs is None:
            return factors * x
        return ((factors * (x @ vecs.conj())) @ vecs.T).astype(np.complex128)

    times, u = traj.times, traj.u
    v = phase(times, u)
    bu = _apply(b, u)
    base = _apply(atil, u) + 0.25 * _apply(b, bu)
    av = phase(times, base)

    dt = times[1] - times[0]
    second = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (dt * dt)
    residual = second + av[1:-1]
    norms = np.sqrt(np.maximum(_inner_rows(residual, residual, traj.weight).real, 0.0))
    value = float(np.max(norms))
    logger.debug(f"v-transform residual {value:.3g} over {len(traj) - 2} interior snapshots")
    return value


def growth_rate_estimate(traj: Trajectory, window_fraction: float = 0.5) -> float:
    """Least-squares slope of log ||u(t)|| over the trailing part of the record.

    Slopes with magnitude below 1e-3 are reported as 0.

    Raises:
        ValueError: If the window is empty or every norm in it is below 1e-300
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"window_fraction must lie in (0, 1], got {window_fraction}")
    start = int(len(traj) * (1.0 - window_fraction))
    times = traj.times[start:]
    norms = traj.norms[start:]
    usable = norms > 1e-300
    if np.count_nonzero(usable) < 2:
        raise ValueError("Degenerate growth fit: norms vanish over the fitting window")

    slope = float(np.polyfit(times[usable], np.log(norms[usable]), 1)[0])
    logger.debug(f"Fitted log-norm slope {slope:.6g} over {np.count_nonzero(usable)} samples")
    return 0.0 if abs(slope) < GROWTH_THRESHOLD else slope


def uniqueness_gap(
    Atil: Operator,
    B: Operator,
    initial: QuadraticState,
    T: float,
    dt_coarse: float,
    dt_fine: float,
    weight: NDArray[np.float64] | None = None,
) -> float:
    """Distance at time T between evolutions of the same data with two step sizes."""
    coarse = evolve(Atil, B, weight, initial, EvolutionConfig(dt=dt_coarse, T=T, record_every=10**9))
    fine = evolve(Atil, B, weight, initial, EvolutionConfig(dt=dt_fine, T=T, record_every=10**9))
    diff = (coarse.u[-1] - fine.u[-1])[None, :]
    return float(np.sqrt(_inner_rows(diff, diff, weight).real[0]))


def write_trajectory_csv(traj: Trajectory, path: Path | str) -> None:
    """Write the recorded series as CSV with floats at 17 significant digits."""
    header = ["t", "norm", "E_u"]
    header += [f"E_s_u[s={s!r}]" for s in traj.shifted_energies]
    if traj.currents is not None:
        header += ["j_re", "j_im"]

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for k in range(len(traj)):
            row = [traj.times[k], traj.norms[k], traj.energies[k]]
            row += [series[k] for series in traj.shifted_energies.values()]
            if traj.currents is not None:
                row += [traj.currents[k].real, traj.currents[k].imag]
            writer.writerow([format(float(x), ".17g") for x in row])
    logger.info(f"Wrote trajectory with {len(traj)} rows to {path}")
