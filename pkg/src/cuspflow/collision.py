"""Rigid-body descent dynamics driven by the gap-dependent added mass.

The body falls toward the channel bottom with the gap ``eps(t)`` obeying a
first-order autonomous law: kinetic-energy conservation of the body-fluid
system ties the velocity to the added mass ``m_f(eps) = rho_f * E(eps)``.
Bounded added mass means impact at nonzero speed (real shock); divergent
added mass with a sub-quadratic rate means touchdown in finite time at zero
speed (smooth landing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .asymptotics import AsymptoticModel, EnergyCurve, energy_leading
from .geometry import CuspProfile

__all__ = [
    "CollisionSetup",
    "CollisionTrajectory",
    "REAL_SHOCK",
    "SMOOTH_LANDING",
    "UNRESOLVED",
    "added_mass",
    "velocity_rhs",
    "integrate_collision",
    "classify",
]

REAL_SHOCK = "RealShock"
SMOOTH_LANDING = "SmoothLanding"
UNRESOLVED = "Unresolved"

# Dormand-Prince 5(4) embedded pair
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


@dataclass
class CollisionSetup:
    """Body mass, fluid density, initial state and the added-mass source.

    ``mass_model`` is either a closed-form energy law or a sampled energy
    curve (interpolated monotonically in log-log coordinates).
    """

    m_s: float
    rho_f: float
    eps_star: float
    v0: float
    mass_model: AsymptoticModel | EnergyCurve

    _interp: PchipInterpolator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.m_s <= 0 or self.rho_f <= 0:
            raise ValueError("m_s and rho_f must be positive")
        if self.eps_star <= 0:
            raise ValueError("initial gap must be positive")
        if self.v0 >= 0:
            raise ValueError("initial velocity must be negative (descending body)")
        if isinstance(self.mass_model, EnergyCurve):
            eps = np.asarray(self.mass_model.epsilons)[::-1]
            en = np.asarray(self.mass_model.energies)[::-1]
            if np.any(en <= 0):
                raise ValueError("curve energies must be positive for log-log interpolation")
            if np.any(np.diff(en) > 0):
                raise ValueError("added mass must be nonincreasing in the gap")
            self._interp = PchipInterpolator(np.log(eps), np.log(en), extrapolate=False)


def added_mass(setup: CollisionSetup, eps: float) -> float:
    """Added mass ``rho_f * E(eps)`` from the model or the sampled curve."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    model = setup.mass_model
    if isinstance(model, EnergyCurve):
        val = setup._interp(math.log(eps))
        if np.isnan(val):
            lo, hi = min(model.epsilons), max(model.epsilons)
            raise ValueError(
                f"eps={eps:.3e} outside the tabulated range [{lo:.3e}, {hi:.3e}]"
            )
        return setup.rho_f * float(np.exp(val))
    return setup.rho_f * model.value(eps)


def velocity_rhs(setup: CollisionSetup, eps: float) -> float:
    """Gap velocity from energy conservation at the current gap."""
    num = setup.m_s + added_mass(setup, setup.eps_star)
    den = setup.m_s + added_mass(setup, eps)
    return setup.v0 * math.sqrt(num / den)


@dataclass
class CollisionTrajectory:
    """Sampled descent: times, gaps, velocities, and the contact outcome."""

    t: np.ndarray
    eps: np.ndarray
    v: np.ndarray
    touchdown: tuple | None
    regime: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def terminal_speed(self) -> float:
        return abs(self.v[-1])


def _hermite_eval(t, t0, t1, y0, y1, f0, f1):
    """Cubic Hermite value on [t0, t1]."""
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s**2 * (3 - 2 * s)
    h11 = s**2 * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def integrate_collision(
    setup: CollisionSetup,
    eps_stop: float,
    rtol: float = 1e-10,
    max_steps: int = 100000,
) -> CollisionTrajectory:
    """Adaptive embedded 4/5 Runge-Kutta descent until the gap reaches
    ``eps_stop``, with the crossing time refined to ``rtol``.

    The speed is checked to be nonincreasing at every accepted step (it must
    be, since the added mass grows as the gap closes).  A step-size
    underflow aborts with the ``Unresolved`` regime and diagnostics.
    """
    if not 0 < eps_stop < setup.eps_star:
        raise ValueError("need 0 < eps_stop < eps_star")

    def f(eps):
        return velocity_rhs(setup, max(eps, eps_stop * 1e-12))

    t, y = 0.0, setup.eps_star
    fy = f(y)
    ts, ys, vs = [t], [y], [fy]
    h = min(0.01 * setup.eps_star / abs(fy), 1.0)
    atol = rtol * setup.eps_star
    regime = classify(setup.mass_model)
    diagnostics = {"rejected_steps": 0, "model_regime": regime}
    touchdown = None

    for _ in range(max_steps):
        if h < 1e-15 * max(t, 1.0):
            return CollisionTrajectory(
                t=np.array(ts), eps=np.array(ys), v=np.array(vs),
                touchdown=None, regime=UNRESOLVED,
                diagnostics={**diagnostics, "failure": "step-size underflow", "t": t, "eps": y},
            )
        k = np.empty(7)
        k[0] = fy
        failed = False
        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[i]))
            if yi <= 0:
                failed = True
                break
            k[i] = f(yi)
        if failed:
            h *= 0.5
            diagnostics["rejected_steps"] += 1
            continue
        y5 = y + h * float(_DP_B5 @ k)
        y4 = y + h * float(_DP_B4 @ k)
        err = abs(y5 - y4)
        scale = atol + rtol * abs(y)
        if err > scale or y5 <= 0:
            h *= max(0.2, 0.9 * (scale / max(err, 1e-300)) ** 0.2)
            diagnostics["rejected_steps"] += 1
            continue
        t_new = t + h
        y_new = y5
        f_new = f(y_new)
        if abs(f_new) > abs(fy) * (1.0 + 1e-12):
            raise AssertionError(
                "speed increased along the descent: the added mass is not "
                "nonincreasing in the gap"
            )
        if y_new <= eps_stop:
            # refine the crossing on the dense cubic
            lo, hi = t, t_new
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if _hermite_eval(mid, t, t_new, y, y_new, fy, f_new) > eps_stop:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= rtol * max(t_new, 1.0):
                    break
            t_star = 0.5 * (lo + hi)
            v_star = f(eps_stop)
            ts.append(t_star)
            ys.append(eps_stop)
            vs.append(v_star)
            touchdown = (t_star, abs(v_star))
            break
        t, y, fy = t_new, y_new, f_new
        ts.append(t)
        ys.append(y)
        vs.append(fy)
        h = min(h * min(5.0, 0.9 * (scale / max(err, 1e-300)) ** 0.2), 10 * h)
    else:
        return CollisionTrajectory(
            t=np.array(ts), eps=np.array(ys), v=np.array(vs),
            touchdown=None, regime=UNRESOLVED,
            diagnostics={**diagnostics, "failure": "max steps reached"},
        )
    return CollisionTrajectory(
        t=np.array(ts), eps=np.array(ys), v=np.array(vs),
        touchdown=touchdown, regime=regime, diagnostics=diagnostics,
    )


def classify(source) -> str:
    """Contact regime from a profile or an energy law.

    Bounded energy: impact at nonzero speed.  Logarithmic or power blow-up
    milder than the inverse square gap: finite-time touchdown at zero speed.
    A power rate at or beyond the inverse square gap is outside the scope of
    the finite-time argument and stays unresolved.
    """
    if isinstance(source, CuspProfile):
        model = energy_leading(source)
    elif isinstance(source, AsymptoticModel):
        model = source
    elif isinstance(source, EnergyCurve):
        return UNRESOLVED
    else:
        raise TypeError(f"cannot classify {type(source).__name__}")
    if model.kind == "bounded":
        return REAL_SHOCK
    if model.kind == "log":
        return SMOOTH_LANDING
    if model.exponent > -2.0:
        return SMOOTH_LANDING
    return UNRESOLVED
