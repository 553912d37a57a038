"""Cusp channel geometry and the strip change of variables.

The physical channel is the region between a wall at height 0 and a solid
bottom at height ``H_eps(xi1) = kappa*|xi1|**(1+alpha) + eps`` over a window
``xi1 in [delta, 0)``.  Mapping ``x1 = rho(xi1)`` with ``rho' = 1/H_eps``
stretches the narrowing channel onto a horizontal strip of length ``ell``
(infinite when ``eps = 0``), where the degenerate Laplace problem becomes a
uniformly elliptic one with coefficient matrix ``A(x)`` of unit determinant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

__all__ = [
    "CuspProfile",
    "HeightJet",
    "StripMap",
    "SymmetricMatrix2",
    "height_jet",
    "strip_length",
    "forward_map",
    "inverse_map",
    "coefficient_matrix",
    "coefficient_fields",
    "eigen_bounds",
    "neumann_data",
]

POWER = "power"
FLAT = "flat"

# Gauss-Legendre rule reused by the cumulative tabulation.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class CuspProfile:
    """Parameters of the channel bottom.

    ``bottom="power"`` is the pure power cusp.  ``bottom="flat"`` keeps the
    bottom exactly flat (gap ``eps``) on ``[delta_prime, 0)`` and continues
    with the power cusp, shifted to start at ``delta_prime``, on
    ``[delta, delta_prime)``.  The flat variant requires ``alpha > 2``.
    """

    kappa: float
    alpha: float
    epsilon: float
    delta: float = -1.0
    bottom: str = POWER
    delta_prime: float | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.delta < 0:
            raise ValueError(f"delta must be negative, got {self.delta}")
        if self.bottom not in (POWER, FLAT):
            raise ValueError(f"bottom must be '{POWER}' or '{FLAT}', got {self.bottom!r}")
        if self.bottom == FLAT:
            if self.delta_prime is None:
                raise ValueError("flat bottom requires delta_prime")
            if not (self.delta < self.delta_prime < 0):
                raise ValueError(
                    f"need delta < delta_prime < 0, got delta={self.delta}, "
                    f"delta_prime={self.delta_prime}"
                )
            if not self.alpha > 2:
                raise ValueError("flat bottom is defined for alpha > 2")
        elif self.delta_prime is not None:
            raise ValueError("delta_prime only applies to the flat bottom")

    @property
    def is_flat(self) -> bool:
        return self.bottom == FLAT

    @property
    def window_hat(self) -> float:
        """Width parameter of the shifted cusp window (flat bottom only)."""
        if not self.is_flat:
            return self.delta
        return self.delta - self.delta_prime

    def gap(self, xi1):
        """Channel height H_eps(xi1); accepts scalars or arrays."""
        xi1 = np.asarray(xi1, dtype=float)
        _check_window(self, xi1)
        if not self.is_flat:
            h = self.kappa * np.abs(xi1) ** (1.0 + self.alpha) + self.epsilon
        else:
            shifted = xi1 - self.delta_prime
            h = np.where(
                xi1 >= self.delta_prime,
                self.epsilon,
                self.kappa * np.abs(shifted) ** (1.0 + self.alpha) + self.epsilon,
            )
        return h if h.ndim else float(h)

    def peak_width(self) -> float:
        """Length scale on which 1/H_eps is concentrated near the tip."""
        if self.epsilon == 0.0:
            return 0.0
        return (self.epsilon / self.kappa) ** (1.0 / (1.0 + self.alpha))


@dataclass(frozen=True)
class HeightJet:
    """Height and bottom-shape derivatives at one abscissa.

    ``h`` is the full gap (including ``eps``); ``d1, d2, d3`` are the first
    three derivatives of the eps-independent bottom shape.
    """

    h: float
    d1: float
    d2: float
    d3: float


def _check_window(profile: CuspProfile, xi1) -> None:
    arr = np.asarray(xi1, dtype=float)
    if np.any(arr < profile.delta - 1e-14) or np.any(arr >= 0.0):
        bad = arr[(arr < profile.delta - 1e-14) | (arr >= 0.0)]
        raise ValueError(
            f"xi1 must lie in [{profile.delta}, 0); offending value {bad.flat[0]}"
        )


def _power_jet(kappa, alpha, eps, xi1):
    u = -xi1  # positive distance to the tip
    h = kappa * u ** (1.0 + alpha) + eps
    d1 = -kappa * (1.0 + alpha) * u**alpha
    d2 = kappa * (1.0 + alpha) * alpha * u ** (alpha - 1.0)
    d3 = -kappa * (1.0 + alpha) * alpha * (alpha - 1.0) * u ** (alpha - 2.0)
    return h, d1, d2, d3


def height_jet(profile: CuspProfile, xi1: float) -> HeightJet:
    """Gap height and bottom derivatives at ``xi1 in [delta, 0)``.

    For the flat bottom the junction ``xi1 = delta_prime`` takes the
    flat-side values (all derivatives zero); the cusp side is the shifted
    power jet.
    """
    _check_window(profile, xi1)
    if not profile.is_flat:
        return HeightJet(*_power_jet(profile.kappa, profile.alpha, profile.epsilon, xi1))
    if xi1 >= profile.delta_prime:
        return HeightJet(profile.epsilon, 0.0, 0.0, 0.0)
    return HeightJet(
        *_power_jet(profile.kappa, profile.alpha, profile.epsilon, xi1 - profile.delta_prime)
    )


def _jet_fields(profile: CuspProfile, xi1):
    """Vectorized (h, d1, d2, d3) over an array of window abscissae."""
    xi1 = np.asarray(xi1, dtype=float)
    if not profile.is_flat:
        return _power_jet(profile.kappa, profile.alpha, profile.epsilon, xi1)
    h = np.full(xi1.shape, profile.epsilon)
    d1 = np.zeros_like(h)
    d2 = np.zeros_like(h)
    d3 = np.zeros_like(h)
    cusp = xi1 < profile.delta_prime
    if np.any(cusp):
        hc, d1c, d2c, d3c = _power_jet(
            profile.kappa, profile.alpha, profile.epsilon, xi1[cusp] - profile.delta_prime
        )
        h[cusp], d1[cusp], d2[cusp], d3[cusp] = hc, d1c, d2c, d3c
    return h, d1, d2, d3


def _quad_breakpoints(profile: CuspProfile, a: float, b: float):
    """Interior breakpoints resolving the 1/H_eps peak for scipy.quad."""
    pts = []
    w = profile.peak_width()
    if w > 0.0:
        for s in (-64.0, -8.0, -1.0, -0.125):
            p = s * w
            if a < p < b:
                pts.append(p)
    if profile.is_flat and a < profile.delta_prime < b:
        pts.append(profile.delta_prime)
    return sorted(pts)


def profile_quad(profile: CuspProfile, fn, a: float, b: float, rel_tol: float = 1e-12) -> float:
    """Adaptive quadrature of ``fn(xi)`` over ``[a, b]`` inside the window.

    Splits at the tip peak scales and (flat case) the junction so the local
    refinement of QUADPACK starts from panels matched to the integrand.
    """
    if a == b:
        return 0.0
    pts = _quad_breakpoints(profile, a, b)
    val, _ = quad(fn, a, b, points=pts or None, limit=400, epsabs=0.0, epsrel=rel_tol)
    return val


def strip_length(profile: CuspProfile):
    """Length ``ell = integral of 1/H_eps over the window``; inf when eps=0."""
    if profile.epsilon == 0.0:
        return math.inf
    if not profile.is_flat:
        return profile_quad(profile, lambda s: 1.0 / profile.gap(s), profile.delta, -0.0)
    hat = _hat_profile(profile)
    ell_hat = strip_length(hat)
    return ell_hat + abs(profile.delta_prime) / profile.epsilon


def _hat_profile(profile: CuspProfile) -> CuspProfile:
    """Pure power cusp obtained by shifting the flat profile's cusp to 0."""
    return CuspProfile(
        kappa=profile.kappa,
        alpha=profile.alpha,
        epsilon=profile.epsilon,
        delta=profile.window_hat,
    )


def _mu0_closed(kappa, alpha, delta, x1):
    """Inverse map for eps = 0: mu0(x1) = -(alpha*kappa)^(-1/a)(x1+x1hat)^(-1/a)."""
    x1hat = (alpha * kappa) ** (-1.0) * abs(delta) ** (-alpha)
    return -((alpha * kappa) ** (-1.0 / alpha)) * (x1 + x1hat) ** (-1.0 / alpha)


def _rho0_closed(kappa, alpha, delta, xi1):
    """Forward map for eps = 0, in closed form."""
    return (np.abs(xi1) ** (-alpha) - abs(delta) ** (-alpha)) / (alpha * kappa)


class StripMap:
    """Monotone change of variables between the window and the strip.

    ``forward`` maps window abscissae ``xi1 in [delta, 0)`` to strip
    coordinates ``x1 in [0, ell)``; ``inverse`` undoes it.  For ``eps > 0``
    both directions are backed by a cached monotone tabulation (cumulative
    Gauss panels over tip-refined knots) polished by Newton steps; for
    ``eps = 0`` the closed forms are used directly.
    """

    def __init__(self, profile: CuspProfile, table_size: int = 2048):
        self.profile = profile
        self.table_size = int(table_size)
        if profile.is_flat:
            self._hat = StripMap(_hat_profile(profile), table_size)
            self.ell_hat = self._hat.ell
            self.ell = (
                math.inf
                if profile.epsilon == 0.0
                else self.ell_hat + abs(profile.delta_prime) / profile.epsilon
            )
            return
        self._hat = None
        self.ell = strip_length(profile)
        if profile.epsilon > 0.0:
            self._build_table()

    # -- tabulation ---------------------------------------------------------

    def _build_table(self):
        prof = self.profile
        w = prof.peak_width()
        lo = abs(prof.delta)
        # Knots log-spaced in |xi| from the outer edge down to far below every
        # relevant scale, so each inter-knot gap sees a smooth integrand.
        hi = min(w, lo) * 1e-18
        n = max(self.table_size, 256)
        u = np.geomspace(lo, hi, n)
        xi = -u
        xi[0] = prof.delta
        gaps_mid = 0.5 * (xi[1:] + xi[:-1])
        half = 0.5 * (xi[1:] - xi[:-1])
        nodes = gaps_mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = 1.0 / prof.gap(nodes.ravel())
        panel = (vals.reshape(nodes.shape) * _GL_WEIGHTS[None, :]).sum(axis=1) * half
        x = np.concatenate(([0.0], np.cumsum(panel)))
        # integral of xi/H over the same knots, for the ansatz antiderivative
        anti_vals = nodes.ravel() / prof.gap(nodes.ravel())
        anti_panel = (anti_vals.reshape(nodes.shape) * _GL_WEIGHTS[None, :]).sum(axis=1) * half
        self._xi_knots = xi
        self._x_knots = x
        self._anti_knots = np.concatenate(([0.0], np.cumsum(anti_panel)))

    def _partial_panel(self, f, xi_from, xi_to):
        """Vector of integrals of f over [xi_from_i, xi_to_i] (short gaps)."""
        mid = 0.5 * (xi_from + xi_to)
        half = 0.5 * (xi_to - xi_from)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = f(nodes.ravel()).reshape(nodes.shape)
        return (vals * _GL_WEIGHTS[None, :]).sum(axis=1) * half

    def _rho_table(self, xi):
        """Vectorized forward map via the cached knots (eps > 0, power)."""
        prof = self.profile
        xi = np.asarray(xi, dtype=float)
        idx = np.searchsorted(self._xi_knots, xi, side="right") - 1
        idx = np.clip(idx, 0, len(self._xi_knots) - 1)
        base_xi = self._xi_knots[idx]
        part = self._partial_panel(lambda s: 1.0 / prof.gap(s), base_xi, xi)
        return self._x_knots[idx] + part

    # -- public maps --------------------------------------------------------

    def forward(self, xi1):
        """rho(xi1): strip coordinate of a window abscissa."""
        prof = self.profile
        scalar = np.isscalar(xi1)
        xi = np.atleast_1d(np.asarray(xi1, dtype=float))
        _check_window(prof, xi)
        if prof.is_flat:
            out = np.empty_like(xi)
            on_band = xi >= prof.delta_prime
            out[on_band] = self.ell_hat + (xi[on_band] - prof.delta_prime) / prof.epsilon
            if np.any(~on_band):
                out[~on_band] = self._hat.forward(xi[~on_band] - prof.delta_prime)
            return float(out[0]) if scalar else out
        if prof.epsilon == 0.0:
            out = _rho0_closed(prof.kappa, prof.alpha, prof.delta, xi)
        else:
            out = self._rho_table(xi)
        return float(out[0]) if scalar else out

    def mu0(self, x1):
        """Closed-form inverse of the eps = 0 map (power cusp)."""
        prof = self.profile
        if prof.is_flat:
            return self._hat.mu0(x1) + prof.delta_prime
        return _mu0_closed(prof.kappa, prof.alpha, prof.delta, np.asarray(x1, dtype=float))

    def inverse(self, x1):
        """mu(x1): window abscissa whose image is ``x1 in [0, ell)``."""
        prof = self.profile
        scalar = np.isscalar(x1)
        x = np.atleast_1d(np.asarray(x1, dtype=float))
        if np.any(x < 0.0) or (np.isfinite(self.ell) and np.any(x >= self.ell)):
            raise ValueError(f"x1 must lie in [0, ell={self.ell}); got {x.min()}..{x.max()}")
        if prof.is_flat:
            out = np.empty_like(x)
            on_band = x >= self.ell_hat
            out[on_band] = prof.epsilon * (x[on_band] - self.ell_hat) + prof.delta_prime
            if np.any(~on_band):
                out[~on_band] = self._hat.inverse(x[~on_band]) + prof.delta_prime
            return float(out[0]) if scalar else out
        if prof.epsilon == 0.0:
            out = self.mu0(x)
            return float(out[0]) if scalar else out
        out = self._newton_inverse(x)
        return float(out[0]) if scalar else out

    def _newton_inverse(self, x):
        prof = self.profile
        idx = np.clip(np.searchsorted(self._x_knots, x, side="right") - 1, 0, len(self._x_knots) - 2)
        xi_lo = self._xi_knots[idx]      # bracket endpoints, xi_lo < xi_hi < 0
        xi_hi = self._xi_knots[idx + 1]
        gap_x = np.maximum(self._x_knots[idx + 1] - self._x_knots[idx], 1e-300)
        frac = np.clip((x - self._x_knots[idx]) / gap_x, 0.0, 1.0)
        mu = xi_lo + (xi_hi - xi_lo) * frac
        for _ in range(3):
            res = self._rho_table(mu) - x
            mu = np.clip(mu - res * prof.gap(mu), xi_lo, xi_hi)
        return mu

    def antiderivative(self, x1):
        """Integral of mu over [0, x1], used by the singular ansatz."""
        prof = self.profile
        scalar = np.isscalar(x1)
        x = np.atleast_1d(np.asarray(x1, dtype=float))
        if prof.is_flat:
            out = self._hat.antiderivative(np.minimum(x, self.ell_hat * (1 - 1e-15)))
            out = out + prof.delta_prime * x
            s = np.maximum(x - self.ell_hat, 0.0)
            out += 0.5 * prof.epsilon * s**2
            return float(out[0]) if scalar else out
        if prof.epsilon == 0.0:
            mu = self.mu0(x)
            out = self._anti0(np.abs(mu))
            return float(out[0]) if scalar else out
        mu = self.inverse(np.minimum(x, self.ell * (1 - 1e-15)))
        idx = np.searchsorted(self._xi_knots, mu, side="right") - 1
        idx = np.clip(idx, 0, len(self._xi_knots) - 1)
        base_xi = self._xi_knots[idx]
        part = self._partial_panel(lambda s: s / prof.gap(s), base_xi, mu)
        out = self._anti_knots[idx] + part
        return float(out[0]) if scalar else out

    def _anti0(self, mu_abs):
        """Closed form of integral_delta^mu xi/H0 dxi for the power cusp."""
        prof = self.profile
        a, k, d = prof.alpha, prof.kappa, abs(prof.delta)
        if a == 1.0:
            return np.log(mu_abs / d) / k
        return (mu_abs ** (1.0 - a) - d ** (1.0 - a)) / (k * (1.0 - a))


def forward_map(strip_map: StripMap, xi1):
    """Strip coordinate of window abscissa(e) ``xi1``."""
    return strip_map.forward(xi1)


def inverse_map(strip_map: StripMap, x1):
    """Window abscissa(e) of strip coordinate(s) ``x1``."""
    return strip_map.inverse(x1)


@dataclass(frozen=True)
class SymmetricMatrix2:
    """Symmetric 2x2 coefficient matrix."""

    a11: float
    a12: float
    a22: float

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a12

    def eigenvalues(self):
        tr = self.a11 + self.a22
        disc = math.sqrt((self.a11 - self.a22) ** 2 + 4.0 * self.a12**2)
        return 0.5 * (tr - disc), 0.5 * (tr + disc)

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])


def coefficient_fields(strip_map: StripMap, x1, x2):
    """Vectorized entries (a11, a12, a22) of the strip coefficient matrix.

    Points with ``x1 < 0`` (the fixed block) get the identity.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x1, x2 = np.broadcast_arrays(x1, x2)
    a11 = np.ones(x1.shape)
    a12 = np.zeros(x1.shape)
    a22 = np.ones(x1.shape)
    strip = x1 > 0.0
    if np.any(strip):
        mu = strip_map.inverse(x1[strip])
        _, d1, _, _ = _jet_fields(strip_map.profile, mu)
        a = x2[strip] * d1
        a12[strip] = -a
        a22[strip] = 1.0 + a * a
    return a11, a12, a22


def coefficient_matrix(strip_map: StripMap, x, domain=None) -> SymmetricMatrix2:
    """Coefficient matrix at a point of the transformed domain."""
    x1, x2 = float(x[0]), float(x[1])
    if not (0.0 <= x2 <= 1.0):
        raise ValueError(f"point {x} lies outside the transformed domain")
    if np.isfinite(strip_map.ell) and x1 >= strip_map.ell:
        raise ValueError(f"x1={x1} beyond the strip end {strip_map.ell}")
    if domain is not None and x1 < -domain.d_width:
        raise ValueError(f"x1={x1} left of the block of width {domain.d_width}")
    if x1 <= 0.0:
        return SymmetricMatrix2(1.0, 0.0, 1.0)
    mu = strip_map.inverse(x1)
    jet = height_jet(strip_map.profile, mu)
    a = x2 * jet.d1
    return SymmetricMatrix2(1.0, -a, 1.0 + a * a)


def _ellipticity_funcs(x):
    root = math.sqrt(x * x + 4.0)
    return 1.0 + 0.5 * x * (x - root), 1.0 + 0.5 * x * (x + root)


def eigen_bounds(profile: CuspProfile):
    """Uniform-in-eps eigenvalue bounds (lam1, lam2) of the coefficient matrix.

    Obtained by evaluating the closed-form eigenvalue functions at the
    largest slope the bottom shape attains over the window.
    """
    m = (profile.alpha + 1.0) * profile.kappa * abs(profile.window_hat) ** profile.alpha
    lam1, lam2 = _ellipticity_funcs(m)
    return lam1, lam2


def neumann_data(strip_map: StripMap, domain, s) -> float:
    """Neumann datum on the transformed top boundary.

    Over the strip (``x1 > 0``) the datum is the transported channel height
    ``H_eps(mu(x1))``, whose integral over the strip equals ``|delta|``
    exactly.  Over the block top the compensating bump
    ``-2|delta| sin^2(pi x1)`` (supported on ``(-1, 0)``) integrates to
    ``-|delta|``, so the total datum is exactly compatible at every eps.
    """
    x1, x2 = float(s[0]), float(s[1])
    if abs(x2 - 1.0) > 1e-12:
        raise ValueError(f"point {s} is not on the top boundary")
    if x1 < -domain.d_width - 1e-12 or (np.isfinite(strip_map.ell) and x1 > strip_map.ell):
        raise ValueError(f"point {s} is off the top boundary")
    if x1 > 0.0:
        mu = strip_map.inverse(min(x1, strip_map.ell * (1 - 1e-15)))
        return float(strip_map.profile.gap(mu))
    return compensating_datum(strip_map.profile, x1)


def compensating_datum(profile: CuspProfile, x1):
    """Block-top datum: -2|delta| sin^2(pi x1) on (-1, 0), zero further left."""
    x1 = np.asarray(x1, dtype=float)
    out = np.where(
        (x1 >= -1.0) & (x1 <= 0.0),
        -2.0 * abs(profile.delta) * np.sin(np.pi * x1) ** 2,
        0.0,
    )
    return float(out) if out.ndim == 0 else out


def strip_datum(strip_map: StripMap, x1):
    """Vectorized strip-top datum H_eps(mu(x1))."""
    scalar = np.isscalar(x1)
    x1 = np.asarray(x1, dtype=float)
    cap = strip_map.ell * (1 - 1e-15) if np.isfinite(strip_map.ell) else None
    xq = np.minimum(x1, cap) if cap is not None else x1
    mu = strip_map.inverse(xq)
    out = np.atleast_1d(strip_map.profile.gap(mu))
    return float(out[0]) if scalar else out
