import math

import numpy as np
import pytest

from cuspflow.geometry import (
    CuspProfile,
    StripMap,
    SymmetricMatrix2,
    coefficient_matrix,
    eigen_bounds,
    forward_map,
    height_jet,
    inverse_map,
    neumann_data,
    strip_length,
    compensating_datum,
    strip_datum,
)
from cuspflow.mesh import build_domain


def test_profile_validation():
    with pytest.raises(ValueError):
        CuspProfile(kappa=0.0, alpha=1, epsilon=0)
    with pytest.raises(ValueError):
        CuspProfile(kappa=1, alpha=-1, epsilon=0)
    with pytest.raises(ValueError):
        CuspProfile(kappa=1, alpha=1, epsilon=-1e-3)
    with pytest.raises(ValueError):
        CuspProfile(kappa=1, alpha=1, epsilon=0, delta=0.5)
    with pytest.raises(ValueError):
        CuspProfile(kappa=1, alpha=3, epsilon=0, bottom="flat")  # missing delta_prime
    with pytest.raises(ValueError):
        CuspProfile(kappa=1, alpha=3, epsilon=0, bottom="flat", delta_prime=-2.0)
    with pytest.raises(ValueError):
        # flat variant needs alpha > 2
        CuspProfile(kappa=1, alpha=1.5, epsilon=0, bottom="flat", delta_prime=-0.5)


def test_height_jet_direct_values():
    jet = height_jet(CuspProfile(kappa=2, alpha=1, epsilon=0.1), -0.5)
    assert jet.h == pytest.approx(0.6, abs=1e-15)

    jet = height_jet(CuspProfile(kappa=1, alpha=1, epsilon=0.0), -0.5)
    assert jet.d1 == pytest.approx(-1.0, abs=1e-15)  # slope of xi^2 at -0.5

    flat = CuspProfile(kappa=3, alpha=2.5, epsilon=1e-3, bottom="flat", delta_prime=-0.5)
    jet = height_jet(flat, -0.25)
    assert jet.h == pytest.approx(1e-3, abs=0)
    assert jet.d1 == 0.0 and jet.d2 == 0.0 and jet.d3 == 0.0
    # cusp side of the junction: shifted power jet
    jet = height_jet(flat, -0.75)
    assert jet.h == pytest.approx(3 * 0.25**3.5 + 1e-3, rel=1e-14)


def test_height_jet_window_error():
    prof = CuspProfile(kappa=1, alpha=1, epsilon=0)
    with pytest.raises(ValueError):
        height_jet(prof, -1.5)
    with pytest.raises(ValueError):
        height_jet(prof, 0.0)


def test_strip_length_arctan_oracle():
    # analytic antiderivative of 1/(s^2 + eps) over [-1, 0]
    eps = 1e-4
    oracle = math.atan(1 / math.sqrt(eps)) / math.sqrt(eps)
    ell = strip_length(CuspProfile(kappa=1, alpha=1, epsilon=eps))
    assert ell == pytest.approx(oracle, rel=1e-12)
    assert ell == pytest.approx(156.0797, rel=1e-5)


def test_strip_length_infinite_at_zero_gap():
    assert strip_length(CuspProfile(kappa=1, alpha=1, epsilon=0)) == math.inf
    assert strip_length(
        CuspProfile(kappa=1, alpha=3, epsilon=0, bottom="flat", delta_prime=-0.5)
    ) == math.inf


def test_strip_length_flat_band_split():
    # quadrature oracle on each piece: cusp part plus |delta'|/eps
    prof = CuspProfile(kappa=1, alpha=3, epsilon=1e-3, delta=-1.0,
                       bottom="flat", delta_prime=-0.5)
    hat = CuspProfile(kappa=1, alpha=3, epsilon=1e-3, delta=-0.5)
    assert strip_length(prof) == pytest.approx(strip_length(hat) + 500.0, rel=1e-11)


def test_forward_map_closed_form():
    smap = StripMap(CuspProfile(kappa=1, alpha=1, epsilon=0))
    assert forward_map(smap, -0.5) == pytest.approx(1.0, abs=1e-14)
    assert forward_map(smap, -1.0) == 0.0


def test_forward_map_quadrature_oracle():
    # adaptive quadrature vs the arctan closed form, eps = 1e-2
    eps = 1e-2
    smap = StripMap(CuspProfile(kappa=1, alpha=1, epsilon=eps))
    oracle = (math.atan(1 / math.sqrt(eps)) + math.atan(-0.1 / math.sqrt(eps))) / math.sqrt(eps)
    assert forward_map(smap, -0.1) == pytest.approx(oracle, rel=1e-11)


def test_inverse_map_closed_form_and_round_trip():
    smap = StripMap(CuspProfile(kappa=1, alpha=1, epsilon=0))
    assert inverse_map(smap, 1.0) == pytest.approx(-0.5, abs=1e-14)
    assert inverse_map(smap, 0.0) == pytest.approx(-1.0, abs=0)

    smap = StripMap(CuspProfile(kappa=1, alpha=2, epsilon=1e-4))
    mid = smap.ell / 2
    assert forward_map(smap, inverse_map(smap, mid)) == pytest.approx(mid, rel=1e-10)


def test_inverse_map_domain_error():
    smap = StripMap(CuspProfile(kappa=1, alpha=1, epsilon=1e-2))
    with pytest.raises(ValueError):
        inverse_map(smap, smap.ell)
    with pytest.raises(ValueError):
        inverse_map(smap, -0.1)


@pytest.mark.parametrize("eps", [0.0, 1e-2, 1e-4, 1e-6])
def test_round_trip_tolerance(eps):
    prof = CuspProfile(kappa=1.7, alpha=1.8, epsilon=eps, delta=-1.2)
    smap = StripMap(prof)
    xi = -np.geomspace(1e-9, 1.2 * (1 - 1e-12), 1000)
    x = smap.forward(xi)
    if eps > 0:
        x = np.minimum(x, smap.ell * (1 - 1e-15))
    assert np.max(np.abs(smap.inverse(x) - xi)) <= 1e-10


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
def test_mu_ordering_and_decay_bounds(eps):
    # mu0 <= mu_eps < 0, and the closed-form decay envelopes
    alpha, kappa, delta = 1.5, 2.0, -1.0
    prof = CuspProfile(kappa=kappa, alpha=alpha, epsilon=eps, delta=delta)
    smap = StripMap(prof)
    x = np.linspace(0.0, smap.ell * (1 - 1e-12), 500)
    mu = smap.inverse(x)
    mu0 = smap.mu0(x)
    assert np.all(mu < 0)
    assert np.all(mu0 <= mu + 1e-14)

    x1hat = (alpha * kappa) ** (-1.0) * abs(delta) ** (-alpha)
    c1 = (alpha * kappa) ** (-1.0 / alpha) * max(1.0, x1hat ** (-1.0 / alpha))
    assert np.all(np.abs(mu) <= c1 * (1 + x) ** (-1.0 / alpha) + 1e-14)

    # H bound constant from the closed form: H_eps(mu_eps) <= G * H0(mu0)
    h_mu = prof.gap(mu)
    mu0_end = smap.mu0(smap.ell)
    g_end = eps / (kappa * abs(mu0_end) ** (1 + alpha))
    c2 = kappa * c1 ** (1 + alpha) * max(1.0, g_end) * (1 + 1e-9)
    assert np.all(h_mu <= c2 * (1 + x) ** (-1 - 1.0 / alpha))

    # slope bound
    c3 = kappa * (1 + alpha) * (alpha * kappa) ** (-1.0) * max(1.0, 1.0 / x1hat)
    d1 = kappa * (1 + alpha) * np.abs(mu) ** alpha
    assert np.all(d1 <= c3 * (1 + x) ** (-1.0) * (1 + 1e-12))


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
def test_uniform_convergence_attained_at_strip_end(eps):
    # sup |mu_eps - mu0| equals -mu0(ell) and shrinks with eps
    prof = CuspProfile(kappa=1, alpha=2, epsilon=eps)
    smap = StripMap(prof)
    x = np.linspace(0.0, smap.ell, 2000)
    mu = np.empty_like(x)
    mu[:-1] = smap.inverse(x[:-1])
    mu[-1] = 0.0  # limit value at the strip end
    gap = np.max(np.abs(mu - smap.mu0(x)))
    assert gap == pytest.approx(-smap.mu0(smap.ell), abs=1e-8)


def test_uniform_convergence_decreases_with_eps():
    sups = []
    for eps in (1e-2, 1e-4, 1e-6):
        smap = StripMap(CuspProfile(kappa=1, alpha=2, epsilon=eps))
        sups.append(-smap.mu0(smap.ell))
    assert sups[0] > sups[1] > sups[2]


def test_coefficient_matrix_block_identity_and_tip_value():
    smap = StripMap(CuspProfile(kappa=1, alpha=1, epsilon=0))
    a = coefficient_matrix(smap, (-0.5, 0.3))
    assert (a.a11, a.a12, a.a22) == (1.0, 0.0, 1.0)

    # x2 = 0 kills the off-diagonal coupling
    a = coefficient_matrix(smap, (2.0, 0.0))
    assert (a.a11, a.a12, a.a22) == (1.0, 0.0, 1.0)

    # hand value: mu0(1) = -1/2, slope -1, so x2 * slope = -1 at (1, 1)
    a = coefficient_matrix(smap, (1.0, 1.0))
    assert a.a11 == pytest.approx(1.0)
    assert a.a12 == pytest.approx(1.0, rel=1e-12)
    assert a.a22 == pytest.approx(2.0, rel=1e-12)


def test_coefficient_matrix_unit_determinant():
    rng = np.random.default_rng(7)
    smap = StripMap(CuspProfile(kappa=2.5, alpha=2.2, epsilon=1e-4, delta=-0.8))
    for _ in range(200):
        x1 = rng.uniform(0.0, smap.ell * 0.9999)
        x2 = rng.uniform(0.0, 1.0)
        a = coefficient_matrix(smap, (x1, x2))
        assert abs(a.det() - 1.0) <= 1e-12


def test_eigen_bounds_reference_values():
    lam1, lam2 = eigen_bounds(CuspProfile(kappa=1, alpha=1, epsilon=0))
    assert lam1 == pytest.approx(3 - 2 * math.sqrt(2), rel=1e-12)  # 0.1716
    assert lam2 == pytest.approx(3 + 2 * math.sqrt(2), rel=1e-12)  # 5.8284

    lam1, lam2 = eigen_bounds(CuspProfile(kappa=1e-9, alpha=1, epsilon=0))
    assert lam1 == pytest.approx(1.0, abs=1e-4)
    assert lam2 == pytest.approx(1.0, abs=1e-4)


def test_eigen_bounds_envelope_sampled():
    # eigen-decomposition oracle at random strip points
    rng = np.random.default_rng(11)
    prof = CuspProfile(kappa=1.4, alpha=2.7, epsilon=1e-3, delta=-1.1)
    smap = StripMap(prof)
    lam1, lam2 = eigen_bounds(prof)
    x1 = rng.uniform(0.0, smap.ell * 0.9999, size=10000)
    x2 = rng.uniform(0.0, 1.0, size=10000)
    from cuspflow.geometry import coefficient_fields

    a11, a12, a22 = coefficient_fields(smap, x1, x2)
    tr = a11 + a22
    disc = np.sqrt((a11 - a22) ** 2 + 4 * a12**2)
    lo = 0.5 * (tr - disc)
    hi = 0.5 * (tr + disc)
    assert np.all(lo >= lam1 - 1e-12)
    assert np.all(hi <= lam2 + 1e-12)


def test_neumann_data_values():
    prof = CuspProfile(kappa=1, alpha=1, epsilon=0)
    smap = StripMap(prof)
    domain = build_domain(prof, truncation=50.0)
    # H0(mu0(1)) = (1/2)^2
    assert neumann_data(smap, domain, (1.0, 1.0)) == pytest.approx(0.25, rel=1e-12)
    # compensating bump at the block midpoint
    assert neumann_data(smap, domain, (-0.5, 1.0)) == pytest.approx(-2.0, rel=1e-14)
    with pytest.raises(ValueError):
        neumann_data(smap, domain, (0.5, 0.5))


@pytest.mark.parametrize("eps", [0.0, 1e-2, 1e-4])
def test_boundary_data_total_integral_vanishes(eps):
    # substitution dx1 = dxi/H makes int_0^X H(mu) dx1 = |delta| - |mu(X)|
    # exactly, for every eps >= 0; the compensating bump carries -|delta|
    from scipy.integrate import quad

    prof = CuspProfile(kappa=1, alpha=1, epsilon=eps, delta=-1)
    smap = StripMap(prof)
    upper = smap.ell * (1 - 1e-12) if eps > 0 else 1e3
    strip_part, _ = quad(lambda x: strip_datum(smap, x), 0.0, upper, limit=400)
    block_part, _ = quad(lambda x: float(compensating_datum(prof, x)), -1.0, 0.0, limit=100)
    tail = abs(smap.inverse(upper)) if eps > 0 else abs(smap.mu0(upper))
    assert strip_part + tail == pytest.approx(1.0, abs=1e-10)
    assert block_part == pytest.approx(-1.0, abs=1e-12)


def test_strip_length_leading_order_ratio():
    # ell * eps^(a/(a+1)) kappa^(1/(a+1)) sin(pi/(a+1)) / (pi/(a+1)) -> 1
    for alpha in (1.0, 2.0, 3.0):
        prof = CuspProfile(kappa=1.0, alpha=alpha, epsilon=1e-8)
        theta = math.pi / (alpha + 1)
        scale = 1e-8 ** (alpha / (alpha + 1)) * math.sin(theta) / theta
        assert strip_length(prof) * scale == pytest.approx(1.0, rel=0.05)


def test_symmetric_matrix_eigenvalues():
    m = SymmetricMatrix2(2.0, 1.0, 2.0)
    lo, hi = m.eigenvalues()
    assert lo == pytest.approx(1.0)
    assert hi == pytest.approx(3.0)
