"""Finite-difference discretization of the reduced Klein-Gordon operator on a truncated (r, theta) grid.

The quadratic form of the spatial operator in the space weighted by
Sigma_bar sin(theta) is

    Q(f) = int int sin(theta) (Delta |f_r|^2 + |f_theta|^2 + V |f|^2) dr dtheta,
    V = -m^2 a^2 / Delta + m^2 / sin^2(theta) + mu^2 Sigma,

which is discretized node by node into a symmetric matrix K. The weight
matrix W is diagonal, so A_h = W^{-1} K is symmetric in the W-weighted inner
product and every eigenvalue question reduces to the symmetric matrix
W^{-1/2} K W^{-1/2}.

Nodes are vertex centered in r with zero Dirichlet ghosts at r_min and
r_max, and cell centered in theta so that the half-node values of sin(theta)
vanish at the poles.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from scipy import integrate
from scipy import linalg
from scipy import optimize
from scipy import sparse
from scipy.sparse import linalg as splinalg
from scipy.special import lpmv

from .exceptions import DomainError
from .exceptions import EigenSolverError
from .kerr_geometry import KerrParams
from .kerr_geometry import ModeSpec
from .kerr_geometry import mu_bounds
from .kerr_geometry import special_s
from .matrix_io import write_matrix
from .sweeps import run_sweep

logger = logging.getLogger(__name__)

DEFAULT_EPS_H = 1e-3
DEFAULT_R_MAX = 20.0
TOL_POS = 1e-8
# Dense eigen-solves up to this many unknowns, shift-invert Lanczos above.
DENSE_LIMIT = 4000


class Grid(BaseModel):
    """Uniform truncated grid on (r_min, r_max) x (0, pi)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    r_min: float = Field(..., description="Inner Dirichlet radius, r_plus + eps_h")
    r_max: float = Field(..., description="Outer Dirichlet radius")
    Nr: int = Field(..., ge=3, description="Interior radial nodes")
    Ntheta: int = Field(..., ge=3, description="Polar nodes")

    @model_validator(mode="after")
    def _check_interval(self) -> "Grid":
        if not (math.isfinite(self.r_min) and math.isfinite(self.r_max)):
            raise ValueError("Grid radii must be finite")
        if self.r_min >= self.r_max:
            raise ValueError(f"r_min={self.r_min} must be below r_max={self.r_max}")
        return self

    @classmethod
    def for_params(
        cls,
        p: KerrParams,
        Nr: int,
        Ntheta: int,
        eps_h: float = DEFAULT_EPS_H,
        r_max: float = DEFAULT_R_MAX,
    ) -> "Grid":
        """Grid with r_min = r_plus + eps_h M and r_max in units of M."""
        return cls(r_min=p.r_plus + eps_h * p.M, r_max=r_max * p.M, Nr=Nr, Ntheta=Ntheta)

    @property
    def n(self) -> int:
        return self.Nr * self.Ntheta

    @property
    def dr(self) -> float:
        return (self.r_max - self.r_min) / (self.Nr + 1)

    @property
    def dtheta(self) -> float:
        return math.pi / self.Ntheta

    @property
    def r_nodes(self) -> NDArray[np.float64]:
        return self.r_min + self.dr * np.arange(1, self.Nr + 1)

    @property
    def theta_nodes(self) -> NDArray[np.float64]:
        return (np.arange(self.Ntheta) + 0.5) * self.dtheta

    def validate_for(self, p: KerrParams) -> None:
        """Check that the grid lies strictly outside the horizon of ``p``."""
        if self.r_min <= p.r_plus:
            raise DomainError(
                f"Grid inner radius {self.r_min} is not outside the horizon r_plus={p.r_plus}"
            )


@dataclass(frozen=True)
class DiscretizedSystem:
    """Assembled stiffness matrix K, diagonal weights W and diagonal b on a grid.

    Unknowns are ordered radius-major: index i * Ntheta + j for node (r_i, theta_j).
    """

    params: KerrParams
    mode: ModeSpec
    grid: Grid
    K: sparse.csr_matrix
    W: NDArray[np.float64]
    b: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def A_h(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(sparse.diags(1.0 / self.W) @ self.K)

    @property
    def B_h(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(sparse.diags(self.b))

    def scaled_operator(self, s: float = 0.0) -> sparse.csr_matrix:
        """Symmetric W^{-1/2} (K + s W B_h - s^2 W) W^{-1/2}."""
        d = sparse.diags(1.0 / np.sqrt(self.W))
        shift = sparse.diags(s * self.b - s * s)
        return sparse.csr_matrix(d @ self.K @ d + shift)

    def stiffness_scale(self) -> float:
        """Infinity norm of W^{-1/2} K W^{-1/2}, the scale of positivity tolerances."""
        scaled = self.scaled_operator(0.0)
        return max(1.0, float(abs(scaled).sum(axis=1).max()))


class PositivityReport(BaseModel):
    """Outcome of a discrete positivity check of A_h + s B_h - s^2."""

    M: float
    a: float
    m: int
    s_used: float
    mu_used: float
    min_eigenvalue: float
    tolerance: float
    passed: bool
    Nr: int
    Ntheta: int
    r_min: float
    r_max: float


def _second_difference(coeff: NDArray[np.float64]) -> sparse.csr_matrix:
    """Symmetric stencil of -d/dx coeff d/dx from the len(n + 1) half-node coefficients."""
    lower, upper = coeff[:-1], coeff[1:]
    off = -coeff[1:-1]
    return sparse.csr_matrix(sparse.diags([off, lower + upper, off], [-1, 0, 1]))


def assemble(p: KerrParams, mode: ModeSpec, g: Grid) -> DiscretizedSystem:
    """Assemble the weighted-symmetric discretization of the reduced operator.

    Args:
        p: Kerr parameters
        mode: Azimuthal number and field mass
        g: Grid lying outside the horizon of ``p``

    Returns:
        DiscretizedSystem holding K, W and b

    Raises:
        DomainError: If the grid touches the horizon or a coefficient is nonfinite
    """
    g.validate_for(p)
    M, a = p.M, p.a
    m, mu = mode.m, mode.mu
    dr, dth = g.dr, g.dtheta

    r = g.r_nodes
    theta = g.theta_nodes
    r_half = g.r_min + dr * (np.arange(g.Nr + 1) + 0.5)
    theta_half = np.arange(g.Ntheta + 1) * dth

    delta_half = (r_half - p.r_plus) * (r_half - p.r_minus)
    if np.any(delta_half <= 0.0):
        raise DomainError(f"Delta is not positive on the grid for r_min={g.r_min}")
    sin_half = np.sin(theta_half)
    sin_half[0] = sin_half[-1] = 0.0

    rr, tt = np.meshgrid(r, theta, indexing="ij")
    sin_t = np.sin(tt)
    sin2 = sin_t * sin_t
    dlt = (rr - p.r_plus) * (rr - p.r_minus)
    sig = rr * rr + a * a * np.cos(tt) ** 2
    delta_sigma_bar = (rr * rr + a * a) * sig + 2.0 * M * a * a * rr * sin2
    sig_bar = delta_sigma_bar / dlt

    potential = -(m * m) * a * a / dlt + m * m / sin2 + mu * mu * sig
    if m == 0 or a == 0.0:
        b = np.zeros_like(rr)
    else:
        b = 4.0 * m * M * a * rr / delta_sigma_bar
    weight = sig_bar * sin_t * dr * dth

    for name, arr in (("potential", potential), ("weight", weight), ("b", b)):
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"Nonfinite {name} coefficient on the grid")

    radial = _second_difference(delta_half) / (dr * dr)
    angular = _second_difference(sin_half) / (dth * dth)
    K = dr * dth * (
        sparse.kron(radial, sparse.diags(np.sin(theta)))
        + sparse.kron(sparse.eye(g.Nr), angular)
        + sparse.diags((sin_t * potential).ravel())
    )

    logger.info(
        f"Assembled {g.Nr}x{g.Ntheta} system (n={g.n}) for M={M}, a={a}, m={m}, mu={mu}"
    )
    return DiscretizedSystem(
        params=p,
        mode=mode,
        grid=g,
        K=sparse.csr_matrix(K),
        W=weight.ravel(),
        b=b.ravel(),
    )


def weighted_symmetry_error(sys: DiscretizedSystem) -> float:
    """Relative asymmetry of W A_h, ||W A_h - (W A_h)^T||_max / ||W A_h||_max."""
    wa = sparse.diags(sys.W) @ sys.A_h
    diff = abs(wa - wa.T).max()
    return float(diff / max(abs(wa).max(), np.finfo(float).tiny))


def _smallest_eigenvalue(op: sparse.csr_matrix, diagnostics: dict[str, Any]) -> float:
    n = op.shape[0]
    try:
        if n <= DENSE_LIMIT:
            value = linalg.eigh(
                op.toarray(), eigvals_only=True, subset_by_index=[0, 0]
            )[0]
        else:
            diag = op.diagonal()
            radius = np.asarray(abs(op).sum(axis=1)).ravel() - np.abs(diag)
            sigma = float(np.min(diag - radius)) - 1.0
            value = splinalg.eigsh(op, k=1, sigma=sigma, which="LM", return_eigenvectors=False)[0]
    except (linalg.LinAlgError, splinalg.ArpackNoConvergence, ValueError) as e:
        raise EigenSolverError(f"Eigen-solve failed: {e}", diagnostics) from e

    if not np.isfinite(value):
        raise EigenSolverError("Eigen-solve returned a nonfinite value", diagnostics)
    return float(value)


def min_eigenvalue_shifted(sys: DiscretizedSystem, s: float) -> float:
    """Smallest eigenvalue of A_h + s B_h - s^2 in the W-weighted inner product.

    Raises:
        EigenSolverError: If the eigensolver fails or returns nonfinite values
    """
    diagnostics = {
        "n": sys.n,
        "s": s,
        "M": sys.params.M,
        "a": sys.params.a,
        "m": sys.mode.m,
        "mu": sys.mode.mu,
    }
    value = _smallest_eigenvalue(sys.scaled_operator(s), diagnostics)
    logger.debug(f"Smallest shifted eigenvalue at s={s:.6g}: {value:.6g}")
    return value


def min_eigenvalue_with_b_squared(sys: DiscretizedSystem) -> float:
    """Smallest eigenvalue of A_h + B_h^2 / 4 in the W-weighted inner product."""
    op = sys.scaled_operator(0.0) + sparse.diags(sys.b * sys.b / 4.0)
    return _smallest_eigenvalue(sparse.csr_matrix(op), {"n": sys.n, "check": "b_squared"})


def verify_mass_bound(p: KerrParams, m: int, g: Grid) -> PositivityReport:
    """Check discrete positivity of A_h + sB_h - s^2 at the improved mass bound.

    Uses mu = mu_new and s = m * special_s(p); the check passes when the
    smallest eigenvalue is at least -1e-8 times the stiffness scale.
    """
    mu = mu_bounds(p, m).mu_new
    s = m * special_s(p)
    sys = assemble(p, ModeSpec(m=m, mu=mu), g)
    value = min_eigenvalue_shifted(sys, s)
    tolerance = TOL_POS * sys.stiffness_scale()
    passed = value >= -tolerance

    log = logger.info if passed else logger.warning
    log(
        f"Mass bound a={p.a}, m={m}: min eigenvalue {value:.6g} "
        f"(tolerance {tolerance:.3g}) {'passed' if passed else 'FAILED'}"
    )
    return PositivityReport(
        M=p.M,
        a=p.a,
        m=m,
        s_used=s,
        mu_used=mu,
        min_eigenvalue=value,
        tolerance=tolerance,
        passed=passed,
        Nr=g.Nr,
        Ntheta=g.Ntheta,
        r_min=g.r_min,
        r_max=g.r_max,
    )


def discrete_mass_threshold(
    p: KerrParams, m: int, g: Grid, s: float | None = None
) -> float:
    """Smallest mu for which the discrete shifted operator is nonnegative.

    The smallest eigenvalue increases with mu, so the threshold is bracketed
    on [0, 2 mu_new] and refined with Brent's method.

    Args:
        p: Kerr parameters
        m: Azimuthal number
        g: Grid
        s: Shift, m * special_s(p) by default

    Returns:
        The threshold mass, or 0 if mu = 0 already gives a nonnegative operator
    """
    shift = m * special_s(p) if s is None else s

    def smallest(mu: float) -> float:
        return min_eigenvalue_shifted(assemble(p, ModeSpec(m=m, mu=mu), g), shift)

    if smallest(0.0) >= 0.0:
        return 0.0

    upper = max(2.0 * mu_bounds(p, m).mu_new, 1e-3)
    for _ in range(8):
        if smallest(upper) >= 0.0:
            break
        upper *= 2.0
    else:
        raise EigenSolverError(
            f"No nonnegative shifted operator found for mu <= {upper}",
            {"M": p.M, "a": p.a, "m": m, "s": shift},
        )

    threshold = float(optimize.brentq(smallest, 0.0, upper, xtol=1e-12))
    logger.info(f"Discrete mass threshold for a={p.a}, m={m}: {threshold:.10g}")
    return threshold


def scan_mass_bounds(
    params: list[KerrParams],
    ms: list[int],
    Nr: int,
    Ntheta: int,
    eps_h: float = DEFAULT_EPS_H,
    r_max: float = DEFAULT_R_MAX,
    threads: int = 1,
    progress_callback: Callable[[int, str], None] | None = None,
) -> list[PositivityReport | None]:
    """Run verify_mass_bound over every (p, m) pair, in parallel.

    Returns:
        Reports in the order of the Cartesian product params x ms; a failed
        task leaves None in its slot
    """
    pairs = [(p, m) for p in params for m in ms]

    def task(pair: tuple[KerrParams, int]) -> PositivityReport:
        p, m = pair
        return verify_mass_bound(p, m, Grid.for_params(p, Nr, Ntheta, eps_h, r_max))

    outcomes = run_sweep(
        task, pairs, threads=threads, label="mass bound check", progress_callback=progress_callback
    )
    return [outcome.result for outcome in outcomes]


def export_system(sys: DiscretizedSystem, directory: Path | str) -> dict[str, Path]:
    """Write K, W and the diagonal of B_h in the plain-text matrix format.

    W and b are written as single-column matrices holding the diagonals.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "K": out / "K.txt",
        "W": out / "W.txt",
        "B_h": out / "B_h.txt",
    }
    write_matrix(paths["K"], sys.K.toarray())
    write_matrix(paths["W"], sys.W.reshape(-1, 1))
    write_matrix(paths["B_h"], sys.b.reshape(-1, 1))
    logger.info(f"Exported system of size {sys.n} to {out}")
    return paths


def bump_profile(
    r_lo: float, r_hi: float, n: int = 401
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Smooth profile exp(-1 / (1 - y^2)) supported on (r_lo, r_hi), sampled at n points."""
    if r_hi <= r_lo:
        raise ValueError(f"Empty support ({r_lo}, {r_hi})")
    r = np.linspace(r_lo, r_hi, n)
    y = (2.0 * r - (r_lo + r_hi)) / (r_hi - r_lo)
    values = np.zeros_like(r)
    inside = np.abs(y) < 1.0
    values[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return r, values


def _legendre_and_derivative(
    m: int, l: int, x: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """P_l^m(x) and sqrt(1 - x^2) dP_l^m/dx, from the recurrence
    (x^2 - 1) P_l^m' = l x P_l^m - (l + m) P_{l-1}^m."""
    p_l = lpmv(m, l, x)
    p_prev = lpmv(m, l - 1, x) if l - 1 >= m else np.zeros_like(x)
    one_minus = 1.0 - x * x
    derivative_times = -(l * x * p_l - (l + m) * p_prev) / np.sqrt(one_minus)
    return p_l, derivative_times


def legendre_quadratic_form(
    p: KerrParams,
    mode: ModeSpec,
    s: float,
    r: NDArray[np.float64],
    f: NDArray[np.float64],
    l: int,
    n_quad: int = 64,
) -> float:
    """Weighted quadratic form of A_0 + sB - s^2 on f(r) P_l^{|m|}(cos theta).

    The angular integral uses Gauss-Legendre nodes in x = cos(theta) and the
    angular derivatives of the Legendre function analytically; the radial
    integral uses the trapezoidal rule with f' from finite differences.

    Args:
        p: Kerr parameters
        mode: Azimuthal number and field mass
        s: Shift
        r: Radial sample points, strictly outside the horizon
        f: Profile values at ``r``, vanishing at both ends
        l: Degree of the Legendre function, at least |m|
        n_quad: Number of Gauss-Legendre nodes

    Raises:
        ValueError: If l < |m|
        DomainError: If a sample radius is not outside the horizon
    """
    m = mode.m
    am = abs(m)
    if l < am:
        raise ValueError(f"Legendre degree l={l} must be at least |m|={am}")
    r = np.asarray(r, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if r.shape != f.shape or r.ndim != 1 or r.size < 3:
        raise ValueError("r and f must be matching one-dimensional samples")
    if np.any(r <= p.r_plus):
        raise DomainError("Radial samples must lie outside the horizon")
    if not np.any(f):
        return 0.0

    M, a, mu = p.M, p.a, mode.mu
    x, wx = np.polynomial.legendre.leggauss(n_quad)
    leg, leg_theta = _legendre_and_derivative(am, l, x)
    df = np.gradient(f, r)

    rr = r[:, None]
    xx = x[None, :]
    one_minus = 1.0 - xx * xx
    dlt = (rr - p.r_plus) * (rr - p.r_minus)
    sig = rr * rr + a * a * xx * xx
    sig_bar = ((rr * rr + a * a) * sig + 2.0 * M * a * a * rr * one_minus) / dlt

    f2 = (f * f)[:, None]
    leg2 = (leg * leg)[None, :]
    density = (
        dlt * (df * df)[:, None] * leg2
        + f2 * (leg_theta * leg_theta)[None, :]
        + (-(m * m) * a * a / dlt + mu * mu * sig) * f2 * leg2
        + m * m * f2 * leg2 / one_minus
        + s * 4.0 * m * M * a * rr / dlt * f2 * leg2
        - s * s * sig_bar * f2 * leg2
    )
    radial = integrate.trapezoid(density, r, axis=0)
    value = float(np.dot(wx, radial))
    logger.debug(f"Legendre quadratic form (l={l}, m={m}, s={s:.6g}): {value:.6g}")
    return value
