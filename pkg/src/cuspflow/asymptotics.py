"""Closed-form asymptotics: energy laws, singular ansatz, variational bounds.

Everything here is quadrature or algebra on the channel profile; no finite
elements.  The energy laws give the leading behavior of the Dirichlet
energy as the gap closes; the singular ansatz realizes that behavior as an
explicit field on the strip; the lower bound evaluates a piecewise
polynomial competitor in the variational principle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .geometry import CuspProfile, StripMap, _jet_fields, profile_quad

__all__ = [
    "AsymptoticModel",
    "LowerBoundReport",
    "EnergyCurve",
    "FitResult",
    "QuadratureError",
    "sine_ratio",
    "ell_leading",
    "energy_leading",
    "cutoff_ramp",
    "ansatz_value",
    "ansatz_energy",
    "ansatz_energy_report",
    "ansatz_residuals",
    "residual_weighted_norms",
    "lower_bound",
    "fit_model",
]

_X2_NODES_REF, _X2_WEIGHTS_REF = np.polynomial.legendre.leggauss(6)
_X2_NODES = 0.5 * (_X2_NODES_REF + 1.0)   # quadrature on [0, 1]
_X2_WEIGHTS = 0.5 * _X2_WEIGHTS_REF


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature cannot certify the target accuracy."""


def sine_ratio(alpha: float, p: float) -> float:
    """The factor (p*pi/(alpha+1)) / sin(p*pi/(alpha+1)).

    Equals the normalized value of ``integral_0^inf ds/(s^(1+alpha)+1)``
    when ``p = 1``.  Defined only while the angle stays below pi.
    """
    if alpha <= 0 or p <= 0:
        raise ValueError("alpha and p must be positive")
    theta = p * math.pi / (alpha + 1.0)
    if theta >= math.pi:
        raise ValueError(
            f"sine_ratio pole: p*pi/(alpha+1) = {theta:.6g} >= pi "
            f"(alpha={alpha}, p={p})"
        )
    return theta / math.sin(theta)


def ell_leading(profile: CuspProfile) -> float:
    """Leading-order strip length as the gap closes.

    Power cusp: ``eps^(-a/(a+1)) kappa^(-1/(a+1)) sine_ratio(a, 1)``.
    Flat bottom: the band term ``|delta'|/eps`` dominates.
    """
    eps = profile.epsilon
    if eps <= 0.0:
        raise ValueError("ell_leading needs eps > 0")
    if profile.is_flat:
        return abs(profile.delta_prime) / eps
    a = profile.alpha
    return eps ** (-a / (a + 1.0)) * profile.kappa ** (-1.0 / (a + 1.0)) * sine_ratio(a, 1.0)


@dataclass(frozen=True)
class AsymptoticModel:
    """Leading-order law for the Dirichlet energy as the gap closes.

    ``kind`` is one of ``"power"`` (coefficient * eps**exponent), ``"log"``
    (coefficient * |ln eps|) or ``"bounded"`` (finite limit, possibly
    unknown).
    """

    kind: str
    coefficient: float | None = None
    exponent: float | None = None
    limit: float | None = None

    def __post_init__(self):
        if self.kind not in ("power", "log", "bounded"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.kind == "power" and (self.coefficient is None or self.exponent is None):
            raise ValueError("power law needs coefficient and exponent")
        if self.kind == "log" and self.coefficient is None:
            raise ValueError("log law needs a coefficient")

    def value(self, eps: float) -> float:
        """Model energy at gap ``eps``."""
        if eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.kind == "power":
            return self.coefficient * eps**self.exponent
        if self.kind == "log":
            return self.coefficient * abs(math.log(eps))
        if self.limit is None:
            raise ValueError("bounded law with unknown limit has no value")
        return self.limit


def energy_leading(profile: CuspProfile) -> AsymptoticModel:
    """Leading-order Dirichlet-energy law for the given channel bottom.

    Sub-critical cusps (alpha < 2) keep the energy bounded; alpha = 2 gives
    logarithmic blow-up with slope 1/(3 kappa); sharper cusps give the power
    law with the sine-ratio constant; the flat bottom gives ``|delta'|^3/3``
    over eps, independent of the cusp shape.
    """
    if profile.is_flat:
        return AsymptoticModel(
            kind="power", coefficient=abs(profile.delta_prime) ** 3 / 3.0, exponent=-1.0
        )
    a = profile.alpha
    if a < 2.0:
        return AsymptoticModel(kind="bounded")
    if a == 2.0:
        return AsymptoticModel(kind="log", coefficient=1.0 / (3.0 * profile.kappa))
    coeff = profile.kappa ** (-3.0 / (1.0 + a)) * sine_ratio(a, 3.0) / 3.0
    return AsymptoticModel(kind="power", coefficient=coeff, exponent=3.0 / (1.0 + a) - 1.0)


def cutoff_ramp(t):
    """C^2 quintic ramp: 0 below 0, 1 above 1, smooth in between."""
    t = np.asarray(t, dtype=float)
    s = np.clip(t, 0.0, 1.0)
    val = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    return val if val.ndim else float(val)


def cutoff_ramp_derivative(t):
    t = np.asarray(t, dtype=float)
    s = np.clip(t, 0.0, 1.0)
    val = 30.0 * s**2 * (1.0 - s) ** 2
    val = np.where((t <= 0.0) | (t >= 1.0), 0.0, val)
    return val if val.ndim else float(val)


def _ansatz_core(strip_map: StripMap, x1):
    """(value, d1 value, d2 value) of the ansatz before the cutoff."""
    prof = strip_map.profile
    mu = strip_map.inverse(x1)
    h, d1, d2, _ = _jet_fields(prof, np.asarray(mu))
    anti = strip_map.antiderivative(x1)
    return mu, h, d1, d2, anti


def ansatz_value(strip_map: StripMap, x):
    """Singular-ansatz value and gradient at a strip point.

    On ``x1 >= 1`` the cutoff is identically one and the gradient reduces to
    ``(-mu (1 + x2^2 H0'' H/2), x2 (H - mu H0'))``; on the ramp band
    ``0 <= x1 < 1`` the cutoff and its derivative enter.
    """
    x1, x2 = float(x[0]), float(x[1])
    if x1 < 0.0 or (np.isfinite(strip_map.ell) and x1 >= strip_map.ell):
        raise ValueError(f"point {x} is outside the strip")
    if not (0.0 <= x2 <= 1.0):
        raise ValueError(f"point {x} is outside the strip")
    mu, h, d1, d2, anti = _ansatz_core(strip_map, x1)
    base = -anti + 0.5 * x2**2 * (h - mu * d1)
    g1_base = -mu * (1.0 + 0.5 * x2**2 * d2 * h)
    g2_base = x2 * (h - mu * d1)
    chi = cutoff_ramp(x1)
    dchi = cutoff_ramp_derivative(x1)
    value = chi * base
    grad = np.array([dchi * base + chi * g1_base, chi * g2_base])
    return value, grad


def _strip_density(prof: CuspProfile, xi):
    """Cross-channel integral of A grad(u) . grad(u) at window abscissa xi.

    The ansatz gradient is polynomial in x2, so a fixed Gauss rule across
    the strip height is exact.
    """
    h, d1, d2, _ = _jet_fields(prof, np.asarray(xi, dtype=float))
    total = 0.0
    for x2, w in zip(_X2_NODES, _X2_WEIGHTS):
        a = x2 * d1
        p = -xi * (1.0 + 0.5 * x2**2 * d2 * h)
        q = x2 * (h - xi * d1)
        total = total + w * (p * p - 2.0 * a * p * q + (1.0 + a * a) * q * q)
    return total


def _band_density(strip_map: StripMap, x1):
    """Cross-channel energy density inside the cutoff band [0, 1]."""
    mu, h, d1, d2, anti = _ansatz_core(strip_map, float(x1))
    chi = cutoff_ramp(x1)
    dchi = cutoff_ramp_derivative(x1)
    total = 0.0
    for x2, w in zip(_X2_NODES, _X2_WEIGHTS):
        a = x2 * d1
        base = -anti + 0.5 * x2**2 * (h - mu * d1)
        p = dchi * base + chi * (-mu) * (1.0 + 0.5 * x2**2 * d2 * h)
        q = chi * x2 * (h - mu * d1)
        total += w * (p * p - 2.0 * a * p * q + (1.0 + a * a) * q * q)
    return total


def ansatz_energy_report(profile: CuspProfile, tol: float = 1e-10,
                         truncation: float | None = None) -> dict:
    """Ansatz Dirichlet energy split into band, strip and dominant parts.

    The strip part integrates over ``x1 in [1, ell)`` through the exact
    change of variables ``x1 = rho(xi)``; the dominant term (the transported
    square of the window abscissa) is also reported separately as the
    internal cross-check of the blow-up mechanism.
    """
    strip_map = StripMap(profile)
    prof = profile
    if prof.epsilon == 0.0:
        if truncation is None:
            raise ValueError("eps = 0 needs a truncation")
        x_end = truncation
    else:
        x_end = strip_map.ell
    if x_end <= 1.0:
        raise ValueError("strip too short for the unit cutoff band")
    xi_lo = strip_map.inverse(1.0)
    # full strip for eps > 0 (integrand stays bounded up to the tip),
    # truncated image for the eps = 0 study
    xi_hi = 0.0 if prof.epsilon > 0 else strip_map.mu0(x_end)

    strip_val = profile_quad(prof, lambda s: _strip_density(prof, s) / prof.gap(s),
                             xi_lo, xi_hi, rel_tol=tol)
    dominant = profile_quad(prof, lambda s: s * s / prof.gap(s), xi_lo, xi_hi, rel_tol=tol)
    band_val, _ = quad(lambda t: _band_density(strip_map, t), 0.0, 1.0,
                       limit=200, epsabs=0.0, epsrel=max(tol, 1e-12))
    total = strip_val + band_val
    if not math.isfinite(total):
        raise QuadratureError("ansatz energy quadrature failed")
    return {
        "total": total,
        "strip": strip_val,
        "band": band_val,
        "dominant": dominant,
        "xi_cut": xi_lo,
    }


def ansatz_energy(profile: CuspProfile, tol: float = 1e-10,
                  truncation: float | None = None) -> float:
    """Dirichlet energy of the singular ansatz over the strip."""
    return ansatz_energy_report(profile, tol=tol, truncation=truncation)["total"]


def ansatz_residuals(strip_map: StripMap, x):
    """Interior and boundary residuals (f_hat, r_hat) of the ansatz.

    ``f_hat`` is minus the divergence of the transported flux of the
    pre-cutoff ansatz at an interior strip point; ``r_hat`` is the mismatch
    of its conormal derivative against the channel datum on the top edge.
    Both are explicit brackets in the height jet at ``mu(x1)``.
    """
    x1, x2 = float(x[0]), float(x[1])
    if x1 < 0.0 or (np.isfinite(strip_map.ell) and x1 >= strip_map.ell):
        raise ValueError(f"point {x} is outside the strip")
    prof = strip_map.profile
    if prof.alpha <= 2.0 and not prof.is_flat:
        warnings.warn(
            "third bottom derivative is unbounded at the tip for alpha <= 2; "
            "residuals are one-sided values",
            RuntimeWarning,
            stacklevel=2,
        )
    mu = strip_map.inverse(x1)
    h, d1, d2, d3 = _jet_fields(prof, np.asarray(mu))
    mu = float(mu)
    f_hat = x2**2 * (
        1.5 * h * h * d2
        + 0.5 * mu * h * h * d3
        - 3.0 * mu * h * d1 * d2
        - 3.0 * h * d1 * d1
        + 3.0 * mu * d1 * d1
    )
    r_hat = 0.5 * mu * h * d1 * d2 + h * d1 * d1 - mu * d1**3
    return float(f_hat), float(r_hat)


def residual_weighted_norms(strip_map: StripMap, x_end: float | None = None) -> dict:
    """Growth-weighted L2 norms of the ansatz residuals over ``x1 >= 1``.

    Weighted by ``(1+x1)^2``; finiteness of these norms is what makes the
    ansatz capture the whole singular share of the solution.
    """
    prof = strip_map.profile
    if x_end is None:
        if not np.isfinite(strip_map.ell):
            raise ValueError("eps = 0 needs x_end")
        x_end = strip_map.ell * (1.0 - 1e-12)

    def f_sq(x1):
        f_hat, _ = _residual_brackets(strip_map, x1)
        return f_hat * f_hat * (1.0 + x1) ** 2 / 5.0  # x2^4 moment over [0,1]

    def r_sq(x1):
        _, r_hat = _residual_brackets(strip_map, x1)
        return r_hat * r_hat * (1.0 + x1) ** 2

    f_val, _ = quad(f_sq, 1.0, x_end, limit=400)
    r_val, _ = quad(r_sq, 1.0, x_end, limit=400)
    return {"f_norm_sq": f_val, "r_norm_sq": r_val}


def _residual_brackets(strip_map: StripMap, x1: float):
    """(f bracket without x2^2, r bracket) at one strip abscissa."""
    prof = strip_map.profile
    mu = strip_map.inverse(x1)
    h, d1, d2, d3 = _jet_fields(prof, np.asarray(mu))
    mu = float(mu)
    f1 = (
        1.5 * h * h * d2
        + 0.5 * mu * h * h * d3
        - 3.0 * mu * h * d1 * d2
        - 3.0 * h * d1 * d1
        + 3.0 * mu * d1 * d1
    )
    r1 = 0.5 * mu * h * d1 * d2 + h * d1 * d1 - mu * d1**3
    return float(f1), float(r1)


@dataclass(frozen=True)
class LowerBoundReport:
    """Evaluation of the variational lower bound for one profile."""

    zeta1: float
    zeta1_prime: float
    value: float
    leading_term: float
    terms: dict = field(default_factory=dict, repr=False)


def lower_bound(profile: CuspProfile) -> LowerBoundReport:
    """Closed-form Dirichlet-principle lower bound on the channel energy.

    Evaluates the boundary and gradient integrals of the piecewise
    polynomial competitor whose inner edge ``zeta1`` is placed where the gap
    has doubled, i.e. ``H_eps(zeta1) = 2 eps`` for the power cusp; the flat
    bottom uses the band edge and drops the shape terms.
    """
    eps = profile.epsilon
    if eps <= 0.0:
        raise ValueError("lower bound needs eps > 0")
    if profile.is_flat:
        kappa = 0.0
        alpha = profile.alpha
        zeta1 = profile.delta_prime
        h_z = eps
    else:
        if profile.alpha <= 2.0:
            raise ValueError("power-cusp lower bound is stated for alpha > 2")
        kappa = profile.kappa
        alpha = profile.alpha
        zeta1 = -((eps / kappa) ** (1.0 / (alpha + 1.0)))
        h_z = 2.0 * eps
    if zeta1 <= profile.delta:
        raise ValueError(
            f"window too small for this gap: zeta1 = {zeta1:.6g} <= delta = {profile.delta}"
        )
    zeta1_prime = zeta1 - eps
    z = abs(zeta1)
    sep = eps  # |zeta1' - zeta1|

    boundary_main = (
        (kappa**2 * z ** (3 + 2 * alpha) / (6 + 4 * alpha) - z**3 / 6.0) / eps
        + kappa * z ** (2 + alpha) / (2 + alpha)
        + eps * z / 2.0
    )
    boundary_offset = (
        0.5 * (z**3 - kappa**2 * z ** (3 + 2 * alpha)) / eps
        - kappa * z ** (2 + alpha)
        - eps * z / 2.0
    )
    grad_inner = (
        (kappa * z ** (4 + alpha) / (4 + alpha) + kappa**3 * z ** (4 + 3 * alpha) / (12 + 9 * alpha))
        / eps**2
        + (kappa**2 * z ** (3 + 2 * alpha) / (3 + 2 * alpha) + z**3 / 3.0) / eps
        + kappa * z ** (2 + alpha) / (2 + alpha)
        + eps * z / 3.0
    )
    grad_ramp = (11.0 / 48.0) * h_z**5 / (eps**2 * sep) + (7.0 / 48.0) * h_z**3 * sep / eps**2

    value = boundary_main + boundary_offset - 0.5 * grad_inner - 0.5 * grad_ramp
    if profile.is_flat:
        leading = abs(profile.delta_prime) ** 3 / (6.0 * eps)
    else:
        leading = (
            (alpha + 1.0)
            / (6.0 * alpha + 24.0)
            * profile.kappa ** (-3.0 / (alpha + 1.0))
            * eps ** (3.0 / (alpha + 1.0) - 1.0)
        )
    return LowerBoundReport(
        zeta1=zeta1,
        zeta1_prime=zeta1_prime,
        value=value,
        leading_term=leading,
        terms={
            "boundary_main": boundary_main,
            "boundary_offset": boundary_offset,
            "grad_inner": grad_inner,
            "grad_ramp": grad_ramp,
        },
    )


@dataclass(frozen=True)
class EnergyCurve:
    """Sampled map eps -> Dirichlet energy, eps strictly decreasing."""

    epsilons: tuple
    energies: tuple
    diagnostics: tuple = ()

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        if len(eps) == 0:
            raise ValueError("empty curve")
        if np.any(np.diff(eps) >= 0):
            raise ValueError("epsilons must be strictly decreasing")
        if np.any(np.asarray(self.energies, dtype=float) < 0):
            raise ValueError("energies must be nonnegative")
        if len(self.energies) != len(eps):
            raise ValueError("mismatched curve lengths")

    @classmethod
    def from_points(cls, points):
        points = list(points)
        eps = tuple(p[0] for p in points)
        en = tuple(p[1] for p in points)
        diag = tuple(p[2] if len(p) > 2 else {} for p in points)
        return cls(epsilons=eps, energies=en, diagnostics=diag)


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of an energy curve against one law family."""

    family: str
    coefficient: float | None
    exponent: float | None
    intercept: float | None
    residual: float
    table: tuple = ()

    def model(self) -> AsymptoticModel:
        if self.family == "power":
            return AsymptoticModel(kind="power", coefficient=self.coefficient,
                                   exponent=self.exponent)
        if self.family == "log":
            return AsymptoticModel(kind="log", coefficient=self.coefficient)
        limit = self.table[-1][1] if self.table else None
        return AsymptoticModel(kind="bounded", limit=limit)


def fit_model(curve: EnergyCurve, family: str) -> FitResult:
    """Fit the sampled energies against one of the law families.

    ``power``: least squares of log E against log eps.  ``log``: least
    squares of E against |ln eps|.  ``bounded``: successive-increment table
    certifying a Cauchy tail, with the deepest energy as the limit estimate.
    """
    if family not in ("power", "log", "bounded"):
        raise ValueError(f"unknown family {family!r}")
    eps = np.asarray(curve.epsilons, dtype=float)
    en = np.asarray(curve.energies, dtype=float)
    if len(eps) < 4:
        raise ValueError("need at least 4 sweep points")
    if family == "bounded":
        rel = np.abs(np.diff(en)) / np.maximum(en[1:], 1e-300)
        table = tuple((float(e), float(v)) for e, v in zip(eps, en))
        return FitResult(family="bounded", coefficient=None, exponent=None,
                         intercept=None, residual=float(rel[-1]),
                         table=table + (("increments", tuple(map(float, rel))),))
    if family == "power":
        xs = np.log(eps)
        ys = np.log(np.maximum(en, 1e-300))
    else:
        xs = np.abs(np.log(eps))
        ys = en
    if np.ptp(xs) == 0.0 or np.ptp(ys) == 0.0:
        raise ValueError("degenerate fit: zero variance in the sweep")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * xs + intercept)) ** 2)))
    if family == "power":
        return FitResult(family="power", coefficient=float(np.exp(intercept)),
                         exponent=float(slope), intercept=float(intercept), residual=resid)
    return FitResult(family="log", coefficient=float(slope), exponent=None,
                     intercept=float(intercept), residual=resid)
