"""Closed-form Kerr scalars, potentials and Killing-field norms in Boyer-Lindquist coordinates.

All evaluators are pure functions of immutable inputs. They accept either
scalar floats or numpy arrays for the point coordinates and broadcast, so a
single call can evaluate ten thousand sample points at once.

The metric signature is (+, -, -, -).
"""

import logging
import math
from dataclasses import dataclass
from typing import Any
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import computed_field
from pydantic import model_validator

from .exceptions import DomainError

logger = logging.getLogger(__name__)

# Polar angles closer than this to the axis are rejected.
BOUNDARY_TOL = 1e-10
MAX_SAMPLING_PASSES = 1000

Real = float | NDArray[np.float64]


class KerrParams(BaseModel):
    """Black-hole mass and spin with the derived horizon radii."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    M: float = Field(..., gt=0, description="Mass in geometric units")
    a: float = Field(..., ge=0, description="Spin parameter, 0 <= a <= M")

    @model_validator(mode="after")
    def _check_subextremal(self) -> "KerrParams":
        if not math.isfinite(self.M) or not math.isfinite(self.a):
            raise ValueError("Kerr parameters must be finite")
        if self.a > self.M:
            raise ValueError(f"Spin a={self.a} exceeds mass M={self.M}")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def r_plus(self) -> float:
        return self.M + math.sqrt(self.M * self.M - self.a * self.a)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def r_minus(self) -> float:
        # a**2 / r_plus avoids the cancellation in M - sqrt(M**2 - a**2) for small a
        return self.a * self.a / self.r_plus


class ModeSpec(BaseModel):
    """Azimuthal mode number and field mass selecting one reduced equation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m: int = Field(..., strict=True, description="Azimuthal separation integer")
    mu: float = Field(default=0.0, ge=0, description="Field mass")


@dataclass(frozen=True)
class Point:
    """One point, or a batch of points, of the exterior domain (r_plus, inf) x (0, pi)."""

    r: Any
    theta: Any


class KerrScalars(NamedTuple):
    delta: Real
    sigma: Real
    sigma_bar_1: Real
    sigma_bar_2: Real
    sigma_bar_3: Real


class MetricComponents(NamedTuple):
    g_tt: Real
    g_tphi: Real
    g_rr: Real
    g_thth: Real
    g_phph: Real
    gi_tt: Real
    gi_tphi: Real
    gi_rr: Real
    gi_thth: Real
    gi_phph: Real
    rho: Real


class KillingNorm(NamedTuple):
    """Norm of the Killing field d_t + s d_phi.

    ``factored`` and ``bracket`` are only available at ``s = special_s(p)``.
    ``bracket`` is the square-bracket factor of the factored form without the
    ``Delta / (4 M^2 r_plus^2 Sigma)`` prefactor.
    """

    direct: Real
    factored: Real | None
    bracket: Real | None


class RegionMembership(NamedTuple):
    in_ergoregion: Any
    in_omega_e2: Any


class PotentialVs(NamedTuple):
    form1: Real
    form2: Real
    Vs1: Real
    Vs2: Real


class IdentityResidual(NamedTuple):
    """Absolute residual of an algebraic identity.

    ``scale`` is max(1, largest absolute summand on either side); the
    identities are judged against ``tol * scale``. ``lhs`` is the left-hand
    side as evaluated.
    """

    value: Real
    scale: Real
    lhs: Real


class MassBounds(NamedTuple):
    mu_old: float
    mu_new: float
    alpha: float


class InclusionCondition(NamedTuple):
    simple: bool
    sharp: bool


def _as_array(x: ArrayLike) -> NDArray[np.float64]:
    return np.asarray(x, dtype=np.float64)


def _unwrap(x: NDArray[Any]) -> Any:
    """Return a Python scalar for 0-d results so scalar callers get floats back."""
    if np.ndim(x) == 0:
        return x.item()
    return x


def check_point(p: KerrParams, q: Point) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Validate that every coordinate of ``q`` lies strictly inside the exterior domain.

    Args:
        p: Kerr parameters
        q: Point or batch of points

    Returns:
        The radii and polar angles as float arrays

    Raises:
        DomainError: If any point is on or inside the horizon, within
            BOUNDARY_TOL of a pole, or nonfinite
    """
    r = _as_array(q.r)
    theta = _as_array(q.theta)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(theta))):
        raise DomainError("Point coordinates must be finite")
    if np.any(r <= p.r_plus):
        bad = float(np.min(r))
        raise DomainError(
            f"Radius r={bad!r} is not outside the horizon r_plus={p.r_plus!r}"
        )
    if np.any(theta <= BOUNDARY_TOL) or np.any(theta >= math.pi - BOUNDARY_TOL):
        raise DomainError("Polar angle must lie in the open interval (0, pi)")
    return r, theta


def delta(p: KerrParams, r: ArrayLike) -> Any:
    """Delta = r^2 - 2Mr + a^2, evaluated as (r - r_plus)(r - r_minus)."""
    rr = _as_array(r)
    return _unwrap((rr - p.r_plus) * (rr - p.r_minus))


def sigma(p: KerrParams, r: ArrayLike, theta: ArrayLike) -> Any:
    """Sigma = r^2 + a^2 cos^2(theta)."""
    rr = _as_array(r)
    cos_t = np.cos(_as_array(theta))
    return _unwrap(rr * rr + p.a * p.a * cos_t * cos_t)


def _delta_sigma_bar(
    p: KerrParams, r: NDArray[np.float64], sin2: NDArray[np.float64], sig: NDArray[np.float64]
) -> NDArray[np.float64]:
    # Delta * Sigma_bar without dividing by Delta
    return (r * r + p.a * p.a) * sig + 2.0 * p.M * p.a * p.a * r * sin2


def scalars(p: KerrParams, q: Point) -> KerrScalars:
    """Evaluate Delta, Sigma and the three algebraic forms of Sigma_bar.

    ``sigma_bar_1`` is the canonical form used everywhere else in the package.
    """
    r, theta = check_point(p, q)
    M, a = p.M, p.a
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2
    sb1 = _delta_sigma_bar(p, r, sin2, sig) / dlt
    sb2 = (r * r + a * a) ** 2 / dlt - a * a * sin2
    sb3 = sig + 2.0 * M * r + 4.0 * M * M * r * r / dlt
    return KerrScalars(
        _unwrap(dlt), _unwrap(sig), _unwrap(sb1), _unwrap(sb2), _unwrap(sb3)
    )


def metric_components(p: KerrParams, q: Point) -> MetricComponents:
    """Covariant and contravariant Boyer-Lindquist components of the Kerr metric."""
    r, theta = check_point(p, q)
    M, a = p.M, p.a
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2

    g_tt = 1.0 - 2.0 * M * r / sig
    g_tphi = 2.0 * M * a * r * sin2 / sig
    g_rr = -sig / dlt
    g_thth = -sig
    g_phph = -_delta_sigma_bar(p, r, sin2, sig) * sin2 / sig
    rho = dlt * sin2

    return MetricComponents(
        g_tt=_unwrap(g_tt),
        g_tphi=_unwrap(g_tphi),
        g_rr=_unwrap(g_rr),
        g_thth=_unwrap(g_thth),
        g_phph=_unwrap(g_phph),
        gi_tt=_unwrap(-g_phph / rho),
        gi_tphi=_unwrap(g_tphi / rho),
        gi_rr=_unwrap(1.0 / g_rr),
        gi_thth=_unwrap(1.0 / g_thth),
        gi_phph=_unwrap(-g_tt / rho),
        rho=_unwrap(rho),
    )


def b_coefficient(p: KerrParams, m: int, q: Point) -> Any:
    """Coefficient b = 4mMar / (Delta Sigma_bar) of the first time derivative."""
    r, theta = check_point(p, q)
    if m == 0 or p.a == 0.0:
        return _unwrap(np.zeros(np.broadcast(r, theta).shape))
    sin2 = np.sin(theta) ** 2
    sig = r * r + p.a * p.a * np.cos(theta) ** 2
    return _unwrap(4.0 * m * p.M * p.a * r / _delta_sigma_bar(p, r, sin2, sig))


def special_s(p: KerrParams) -> float:
    """Angular velocity a / (2 M r_plus) of the Killing field that is time-like near the horizon."""
    return p.a / (2.0 * p.M * p.r_plus)


def killing_norm(p: KerrParams, s: float, q: Point) -> KillingNorm:
    """Norm g(d_t + s d_phi, d_t + s d_phi) directly and, at s = special_s, in factored form."""
    mc = metric_components(p, q)
    direct = _as_array(mc.g_tt) + 2.0 * s * _as_array(mc.g_tphi) + s * s * _as_array(
        mc.g_phph
    )

    if not math.isclose(s, special_s(p), rel_tol=1e-12, abs_tol=1e-15):
        return KillingNorm(_unwrap(direct), None, None)

    r, theta = check_point(p, q)
    M, a = p.M, p.a
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2
    bracket = (2.0 * M * p.r_plus - a * a * sin2) ** 2 - a * a * dlt * sin2 * (
        1.0 + 2.0 * M / (r - p.r_minus)
    ) ** 2
    factored = dlt / (4.0 * M * M * p.r_plus**2 * sig) * bracket
    return KillingNorm(_unwrap(direct), _unwrap(factored), _unwrap(bracket))


def horizon_killing_limit(p: KerrParams, s: float, theta: ArrayLike) -> Any:
    """Continuous extension of the Killing norm of d_t + s d_phi to r = r_plus.

    The limit is -sin^2(theta) (a - 2 s M r_plus)^2 / Sigma(r_plus, theta);
    it vanishes for every theta exactly when s = special_s(p).
    """
    th = _as_array(theta)
    sig = p.r_plus**2 + p.a * p.a * np.cos(th) ** 2
    return _unwrap(-np.sin(th) ** 2 * (p.a - 2.0 * s * p.M * p.r_plus) ** 2 / sig)


def region_membership(p: KerrParams, q: Point) -> RegionMembership:
    """Classify points as inside the ergoregion and inside the region where xi is time-like."""
    r, theta = check_point(p, q)
    shape = np.broadcast(r, theta).shape
    if p.a == 0.0:
        return RegionMembership(
            _unwrap(np.zeros(shape, dtype=bool)), _unwrap(np.ones(shape, dtype=bool))
        )

    M, a = p.M, p.a
    sin_t = np.sin(theta)
    dlt = (r - p.r_plus) * (r - p.r_minus)
    in_ergo = a * a * sin_t * sin_t - dlt > 0.0
    e2 = (
        2.0 * M * p.r_plus
        - a * a * sin_t * sin_t
        - a * np.sqrt(dlt) * sin_t * (1.0 + 2.0 * M / (r - p.r_minus))
    )
    return RegionMembership(_unwrap(in_ergo), _unwrap(e2 > 0.0))


def inclusion_spin_condition(p: KerrParams) -> InclusionCondition:
    """Spin conditions under which the ergoregion lies inside the time-like region of xi.

    ``simple`` is a/M <= sqrt(3)/3; ``sharp`` is the weaker sufficient bound
    a^2 <= 2 M r_plus / (1 + sqrt(1 + 4 r_plus^4 / (r_plus - r_minus)^4)).
    """
    simple = p.a / p.M <= math.sqrt(3.0) / 3.0
    gap = p.r_plus - p.r_minus
    if gap <= 0.0:
        return InclusionCondition(simple, False)
    bound = 2.0 * p.M * p.r_plus / (1.0 + math.sqrt(1.0 + 4.0 * p.r_plus**4 / gap**4))
    return InclusionCondition(simple, p.a * p.a <= bound)


def potential_Vs(p: KerrParams, mode: ModeSpec, s: float, q: Point) -> PotentialVs:  # noqa: N802
    """Shifted potential V_s in its defining form and as V_s1 + V_s2."""
    r, theta = check_point(p, q)
    M, a = p.M, p.a
    m, mu = mode.m, mode.mu
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2
    sig_bar = _delta_sigma_bar(p, r, sin2, sig) / dlt

    form1 = (
        -(m * m) * a * a / dlt
        + mu * mu * sig
        + s * 4.0 * m * M * a * r / dlt
        - s * s * sig_bar
    )
    vs1 = -((2.0 * s * M * r - m * a) ** 2) / dlt
    vs2 = (mu * mu - s * s) * sig - 2.0 * s * s * M * r
    return PotentialVs(_unwrap(form1), _unwrap(vs1 + vs2), _unwrap(vs1), _unwrap(vs2))


def potential_scale(p: KerrParams, mode: ModeSpec, s: float, q: Point) -> Any:
    """Largest absolute summand entering either form of V_s, floored at 1."""
    r, theta = check_point(p, q)
    M, a = p.M, p.a
    m, mu = mode.m, mode.mu
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2
    sig_bar = _delta_sigma_bar(p, r, sin2, sig) / dlt
    terms = np.stack(
        np.broadcast_arrays(
            m * m * a * a / dlt,
            mu * mu * sig,
            np.abs(s * 4.0 * m * M * a * r / dlt),
            s * s * sig_bar,
            (2.0 * s * M * r - m * a) ** 2 / dlt,
            np.abs(mu * mu - s * s) * sig,
            2.0 * s * s * M * r,
        )
    )
    return _unwrap(np.maximum(1.0, terms.max(axis=0)))


def positivity_identity_residual(p: KerrParams, m: int, q: Point) -> IdentityResidual:
    """Residual of the identity showing the zeroth-order part of A_0 + B^2/4 is nonnegative.

    The left side is (1/Sigma_bar)(-m^2 a^2/Delta + m^2/sin^2) + b^2/4, the
    right side m^2 Sigma^2 / (Delta Sigma_bar^2 sin^2).
    """
    r, theta = check_point(p, q)
    shape = np.broadcast(r, theta).shape
    if m == 0:
        zero = _unwrap(np.zeros(shape))
        return IdentityResidual(zero, _unwrap(np.ones(shape)), zero)

    a = p.a
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2
    dsb = _delta_sigma_bar(p, r, sin2, sig)
    sig_bar = dsb / dlt
    b = _as_array(b_coefficient(p, m, q))

    t1 = -(m * m) * a * a / dlt / sig_bar
    t2 = m * m / sin2 / sig_bar
    t3 = b * b / 4.0
    lhs = t1 + t2 + t3
    rhs = m * m * sig * sig / (dlt * sig_bar * sig_bar * sin2)
    scale = np.maximum.reduce(
        np.broadcast_arrays(np.ones(shape), np.abs(t1), np.abs(t2), np.abs(t3), np.abs(rhs))
    )
    return IdentityResidual(_unwrap(np.abs(lhs - rhs)), _unwrap(scale), _unwrap(lhs))


def connection_identity_residual(
    p: KerrParams, mode: ModeSpec, s: float, q: Point
) -> IdentityResidual:
    """Residual between two evaluations of the zeroth-order coefficient of A_0 + msB - (ms)^2.

    The first uses the reduced-equation coefficients, the second the Killing
    norm of d_t + s d_phi together with rho = Delta sin^2(theta).
    """
    r, theta = check_point(p, q)
    a = p.a
    m, mu = mode.m, mode.mu
    sin2 = np.sin(theta) ** 2
    dlt = (r - p.r_plus) * (r - p.r_minus)
    sig = r * r + a * a * np.cos(theta) ** 2
    sig_bar = _delta_sigma_bar(p, r, sin2, sig) / dlt
    b = _as_array(b_coefficient(p, m, q))
    ms = m * s

    t1 = -(m * m) * a * a / dlt / sig_bar
    t2 = m * m / sin2 / sig_bar
    t3 = mu * mu * sig / sig_bar
    t4 = ms * b
    t5 = -(ms * ms)
    lhs = t1 + t2 + t3 + t4 + t5

    mc = metric_components(p, q)
    norm = _as_array(killing_norm(p, s, q).direct)
    neg_gphph = -_as_array(mc.g_phph)
    u1 = m * m * norm / neg_gphph
    u2 = mu * mu * _as_array(mc.rho) / neg_gphph
    rhs = u1 + u2

    # the Killing norm itself is assembled from g_tt, g_tphi, g_phph; include them
    g1 = m * m * np.abs(_as_array(mc.g_tt)) / neg_gphph
    g2 = m * m * np.abs(2.0 * s * _as_array(mc.g_tphi)) / neg_gphph
    g3 = m * m * s * s * np.ones_like(neg_gphph)
    scale = np.maximum.reduce(
        np.broadcast_arrays(
            np.ones_like(lhs),
            *(np.abs(t) for t in (t1, t2, t3, t4, t5, u1, u2)),
            g1,
            g2,
            g3,
        )
    )
    return IdentityResidual(_unwrap(np.abs(lhs - rhs)), _unwrap(scale), _unwrap(lhs))


def mu_bounds(p: KerrParams, m: int) -> MassBounds:
    """Previous and improved lower mass bounds for stability, and the lower bound alpha of A_0."""
    rp = p.r_plus
    prefactor = abs(m) * p.a / (2.0 * p.M * rp)
    mu_old = prefactor * math.sqrt(1.0 + 2.0 * p.M / rp + p.a * p.a / (rp * rp))
    mu_new = prefactor * math.sqrt(1.0 + 2.0 * p.M / rp)
    alpha = -(prefactor * prefactor)
    return MassBounds(mu_old, mu_new, alpha)


def sample_points(
    p: KerrParams, n: int, rng: np.random.Generator, r_max: float | None = None
) -> Point:
    """Draw ``n`` admissible points with r uniform in (r_plus, r_max) and theta uniform in (0, pi)."""
    upper = r_max if r_max is not None else p.r_plus + 20.0 * p.M
    lo = p.r_plus + 1e-6 * p.M
    r = lo + (upper - lo) * rng.random(n)
    theta = 1e-6 + (math.pi - 2e-6) * rng.random(n)
    return Point(r=r, theta=theta)


def sample_ergoregion_points(p: KerrParams, n: int, rng: np.random.Generator) -> Point:
    """Draw ``n`` points of the ergoregion, between the horizon and the outer ergosurface.

    Candidates whose radius rounds onto the horizon, or whose membership test
    fails in floating point, are redrawn. For very small spins the ergoregion
    is only a few ulps thick near the poles, so this happens there.

    Raises:
        DomainError: If the black hole has no ergoregion (a = 0), or if
            ``MAX_SAMPLING_PASSES`` rounds of candidates yield fewer than
            ``n`` points
    """
    if p.a == 0.0:
        raise DomainError("A non-rotating black hole has no ergoregion")

    batch = max(n, 64)
    rs: list[NDArray[np.float64]] = []
    thetas: list[NDArray[np.float64]] = []
    collected = 0
    for _ in range(MAX_SAMPLING_PASSES):
        if collected >= n:
            break
        theta = 1e-3 + (math.pi - 2e-3) * rng.random(batch)
        width = p.M + np.sqrt(p.M**2 - p.a**2 * np.cos(theta) ** 2) - p.r_plus
        frac = 1e-6 + (1.0 - 2e-6) * rng.random(batch)
        r = p.r_plus + frac * width
        outside = (width > 0.0) & (r - p.r_plus > 1e-6 * width)
        r, theta = r[outside], theta[outside]
        if r.size:
            keep = np.asarray(region_membership(p, Point(r=r, theta=theta)).in_ergoregion)
            r, theta = r[keep], theta[keep]
        rs.append(r)
        thetas.append(theta)
        collected += int(r.size)

    if collected < n:
        raise DomainError(
            f"Only {collected} of {n} ergoregion points found for a={p.a} "
            f"after {MAX_SAMPLING_PASSES} passes"
        )

    logger.debug(f"Sampled {collected} ergoregion points for a={p.a}")
    return Point(r=np.concatenate(rs)[:n], theta=np.concatenate(thetas)[:n])
