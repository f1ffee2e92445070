"""Tests for the composite channel layer.

Frozen reference values come from independent oracles: 50-digit mpmath
Meijer-G evaluation for the no-fog laws, and an incomplete-beta closed form
(plus one-dimensional quadrature over the optical-depth weight) for the
fog composites.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from fsolink.channels import (
    DeterministicFog,
    DownlinkJitter,
    FParams,
    GammaGammaParams,
    HopChain,
    MalagaParams,
    RandomFog,
    RisJitter,
    combined_cdf,
    combined_pdf,
    derive_malaga,
    derive_pointing,
    hop_moment,
    kim_attenuation,
    product_stats,
    snr_cdf,
    snr_pdf,
    sum_stats,
    unify,
)

AP = 0.1  # aperture radius [m]


def pointing_w10(**kw):
    return derive_pointing(AP, 1.0, DownlinkJitter(0.3), **kw)


# --------------------------------------------------------------------------- pointing geometry


def test_pointing_downlink_w10():
    p = pointing_w10()
    assert p.upsilon == pytest.approx(0.12533141373155005, rel=1e-14)
    assert p.a0 == pytest.approx(0.019792086945219323, rel=1e-14)
    assert p.w_zeq_sq == pytest.approx(1.0105380692062482, rel=1e-14)
    assert p.rho_sq == pytest.approx(2.8070501922395774, rel=1e-13)


def test_pointing_downlink_w15():
    p = derive_pointing(AP, 1.5, DownlinkJitter(0.3))
    assert p.upsilon == pytest.approx(0.08355427582103335, rel=1e-14)
    assert p.a0 == pytest.approx(0.008847652560319252, rel=1e-14)
    assert p.w_zeq_sq == pytest.approx(2.260501277205319, rel=1e-14)
    assert p.rho_sq == pytest.approx(6.279170214459216, rel=1e-13)


def test_pointing_reflected_geometry():
    p = derive_pointing(AP, 1.0, RisJitter(1e-3, 0.5e-3, 1.0, 0.5))
    assert p.xi == pytest.approx(5.0, rel=1e-14)
    assert p.rho_sq == pytest.approx(0.20210761384124962, rel=1e-13)
    p2 = derive_pointing(AP, 1.0, RisJitter(1e-3, 0.5e-3, 2.0, 1.0))
    assert p2.xi == pytest.approx(20.0, rel=1e-14)
    assert p2.rho_sq == pytest.approx(0.050526903460312404, rel=1e-13)


def test_pointing_override_keeps_consistent_variance():
    p = pointing_w10(rho_sq_override=2.25)
    assert p.rho_sq == 2.25
    assert p.xi == pytest.approx(p.w_zeq_sq / 2.25, rel=1e-14)


def test_pointing_collects_everything_for_narrow_beam():
    p = derive_pointing(1.0, 0.05, DownlinkJitter(0.01))
    assert p.a0 == pytest.approx(1.0, abs=1e-12)


def test_pointing_validation():
    with pytest.raises(ValueError):
        derive_pointing(AP, 0.0, DownlinkJitter(0.3))
    with pytest.raises(ValueError):
        derive_pointing(AP, 1.0, DownlinkJitter(-1.0))
    with pytest.raises(TypeError):
        derive_pointing(AP, 1.0, 0.3)


# --------------------------------------------------------------------------- Malaga auxiliaries

MALAGA = MalagaParams(3.01, 3, 0.4, 0.3, 0.596, 0.0)


def test_malaga_derived_values():
    d = derive_malaga(MALAGA)
    assert d.g == pytest.approx(0.2424, rel=1e-14)
    assert d.omega_prime == pytest.approx(1.5140125858286602, rel=1e-14)
    assert d.a_mg == pytest.approx(1.137094976837565, rel=1e-13)
    np.testing.assert_allclose(
        d.b_m,
        [0.09173366138150321, 0.38197447160544656, 0.19881537316965697],
        rtol=1e-13,
    )
    np.testing.assert_allclose(
        d.weights,
        [0.10527897188799093, 0.4383764809172716, 0.4563445471947377],
        rtol=1e-13,
    )


@pytest.mark.parametrize("alpha,beta", [(3.01, 3), (8.9, 12), (8.17, 11), (30.76, 40)])
def test_malaga_weights_normalize(alpha, beta):
    d = derive_malaga(MalagaParams(alpha, beta, 0.4, 0.3, 0.596, 0.0))
    assert math.fsum(d.weights) == pytest.approx(1.0, abs=1e-9)


def test_malaga_decoupled_limit():
    d = derive_malaga(MalagaParams(3.01, 3, 0.4, 0.3, 0.0, 0.0))
    assert d.omega_prime == pytest.approx(0.4, rel=1e-14)
    assert d.g == pytest.approx(0.6, rel=1e-14)


def test_malaga_single_component_normalizes():
    u = unify(MalagaParams(4.2, 1, 0.5, 0.25, 0.3, 0.0))
    assert _pdf_mass(u) == pytest.approx(1.0, abs=1e-6)


def test_malaga_validation():
    with pytest.raises(ValueError):
        MalagaParams(3.01, 2.5, 0.4, 0.3, 0.596)  # non-integer mixture size
    with pytest.raises(ValueError):
        MalagaParams(3.01, 3, 0.4, 0.3, 1.0)  # no independent scatter power


# --------------------------------------------------------------------------- fog / visibility


def test_fog_rate_values():
    assert RandomFog(2, 13.12, 1.0).v == pytest.approx(0.33102134146341466, rel=1e-14)
    assert RandomFog(2, 12.06, 1.0).v == pytest.approx(0.3601160862354892, rel=1e-14)
    assert RandomFog(2, 13.12, 0.5).v == pytest.approx(0.6620426829268293, rel=1e-14)


def test_fog_shape_must_be_positive_integer():
    with pytest.raises(ValueError):
        RandomFog(0, 13.12, 1.0)
    with pytest.raises(ValueError):
        RandomFog(2.5, 13.12, 1.0)


def test_kim_attenuation():
    # visibility 2 km at 1550 nm: exponent 0.66
    assert kim_attenuation(2.0) == pytest.approx(0.8049726810876883, rel=1e-14)
    gain = DeterministicFog(kim_attenuation(2.0), 2.0).gain
    assert gain == pytest.approx(0.1998985357979136, rel=1e-14)
    assert DeterministicFog(kim_attenuation(2.0), 1.0).gain == pytest.approx(
        0.4471001406820553, rel=1e-14
    )
    # piecewise exponent regions are continuous at the 6 km knot
    assert kim_attenuation(6.0 - 1e-12) == pytest.approx(kim_attenuation(6.0 + 1e-12), rel=1e-9)


# --------------------------------------------------------------------------- unified laws

F_TURB = FParams(4.85, 6.55)

F_PDF_REFS = {1e-4: 0.10105779350217238, 1e-3: 6.073848016185606, 5e-3: 50.86750275352117}
F_CDF_REFS = {
    1e-4: 3.6013017598257837e-06,
    1e-3: 0.0022207518145432375,
    5e-3: 0.12342328841022321,
}
GG_PDF_REFS = {1e-3: 32.386863620849276, 2e-2: 18.141060157464707}
M_PDF_REFS = {1e-3: 27.989709378249206, 2e-2: 18.828550130301164}
FFOG_CDF_REFS = {1e-5: 0.3275690420697762, 1e-3: 0.8033039776995438, 3e-2: 0.9994023049629844}
FFOG_PDF_REFS = {1e-5: 7528.290253898091, 1e-3: 113.77418770535269, 3e-2: 0.0738289697896869}


def _pdf_mass(u, upper=None):
    # integrate the density in log-space; the random-fog composites keep a
    # power-law lower tail with a tiny exponent, so the window must be huge
    def f(y):
        return combined_pdf(u, math.exp(y)) * math.exp(y)

    hi = math.log(upper) if upper else 6.0
    total = 0.0
    for a, b in [(-170.0, -40.0), (-40.0, -12.0), (-12.0, -5.0), (-5.0, hi)]:
        val, err = integrate.quad(f, a, b, limit=200)
        total += val
    return total


def test_row_structure():
    p = pointing_w10()
    uf = unify(F_TURB, p)
    assert uf.orders == (2, 1, 2, 2)
    assert uf.a == (-6.55, p.rho_sq)
    assert uf.b == ((4.85 - 1.0, p.rho_sq - 1.0),)
    ug = unify(GammaGammaParams(3.01, 3.0), p)
    assert ug.orders == (3, 0, 1, 3)
    assert ug.a == (p.rho_sq,)
    um = unify(MALAGA, p)
    assert um.orders == (3, 0, 1, 3)
    assert um.P == 3
    assert um.b[2] == (p.rho_sq, 3.01, 3.0)


@pytest.mark.parametrize("x,want", sorted(F_PDF_REFS.items()))
def test_f_pointing_pdf(x, want):
    assert combined_pdf(unify(F_TURB, pointing_w10()), x) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("x,want", sorted(F_CDF_REFS.items()))
def test_f_pointing_cdf(x, want):
    assert combined_cdf(unify(F_TURB, pointing_w10()), x) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("x,want", sorted(GG_PDF_REFS.items()))
def test_gg_pointing_pdf(x, want):
    u = unify(GammaGammaParams(3.01, 3.0), pointing_w10())
    assert combined_pdf(u, x) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("x,want", sorted(M_PDF_REFS.items()))
def test_malaga_pointing_pdf(x, want):
    u = unify(MALAGA, pointing_w10())
    assert combined_pdf(u, x) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("x,want", sorted(FFOG_CDF_REFS.items()))
def test_f_fog_cdf(x, want):
    u = unify(F_TURB, pointing_w10(), RandomFog(2, 13.12, 1.0))
    assert combined_cdf(u, x) == pytest.approx(want, rel=1e-11)


@pytest.mark.parametrize("x,want", sorted(FFOG_PDF_REFS.items()))
def test_f_fog_pdf(x, want):
    u = unify(F_TURB, pointing_w10(), RandomFog(2, 13.12, 1.0))
    assert combined_pdf(u, x) == pytest.approx(want, rel=1e-11)


@pytest.mark.parametrize(
    "turb",
    [F_TURB, GammaGammaParams(3.01, 3.0), MALAGA],
    ids=["f", "gg", "malaga"],
)
def test_pdf_normalization_with_and_without_fog(turb):
    p = pointing_w10()
    assert _pdf_mass(unify(turb, p)) == pytest.approx(1.0, abs=1e-6)
    assert _pdf_mass(unify(turb, p, RandomFog(2, 13.12, 1.0))) == pytest.approx(1.0, abs=1e-6)


def test_deterministic_gain_folds_into_scale():
    base = unify(F_TURB, pointing_w10())
    haze = DeterministicFog(kim_attenuation(2.0), 2.0)
    folded = unify(F_TURB, pointing_w10(), haze)
    assert folded.psi == pytest.approx(base.psi / haze.gain, rel=1e-13)
    assert folded.C[0] == pytest.approx(base.C[0] / haze.gain, rel=1e-13)
    # law check: P[gain * h <= x] = P[h <= x / gain]
    x = 2e-3
    assert combined_cdf(folded, x) == pytest.approx(
        combined_cdf(base, x / haze.gain), rel=1e-10
    )


def test_fog_dominance_in_rate():
    # smaller Gamma rate v means heavier optical depth: CDF pointwise larger
    p = pointing_w10()
    slow = unify(F_TURB, p, RandomFog(2, 13.12, 1.0))  # v = 0.331
    fast = unify(F_TURB, p, RandomFog(2, 12.06, 1.0))  # v = 0.360
    for x in np.geomspace(1e-6, 5e-2, 12):
        assert combined_cdf(slow, x) >= combined_cdf(fast, x)


def test_cdf_pdf_consistency():
    u = unify(F_TURB, pointing_w10(), RandomFog(2, 13.12, 1.0))
    for x in np.geomspace(3e-5, 2e-2, 6):
        h = 1e-4 * x
        deriv = (combined_cdf(u, x + h) - combined_cdf(u, x - h)) / (2 * h)
        assert deriv == pytest.approx(combined_pdf(u, x), rel=1e-4)


# --------------------------------------------------------------------------- moments


def test_fog_composite_moments():
    u = unify(F_TURB, pointing_w10(), RandomFog(2, 13.12, 1.0))
    assert hop_moment(u, 1) == pytest.approx(0.0009025995578826301, rel=1e-13)
    assert hop_moment(u, 2) == pytest.approx(6.786875850418928e-06, rel=1e-13)
    p = pointing_w10()
    v = RandomFog(2, 13.12, 1.0).v
    closed = p.a0 * p.rho_sq / (1.0 + p.rho_sq) * (v / (v + 1.0)) ** 2
    assert hop_moment(u, 1) == pytest.approx(closed, rel=1e-13)


def test_unit_mean_turbulence_families():
    assert hop_moment(unify(GammaGammaParams(3.01, 3.0)), 1) == pytest.approx(1.0, rel=1e-12)
    assert hop_moment(unify(F_TURB), 1) == pytest.approx(1.0, rel=1e-12)
    d = derive_malaga(MALAGA)
    assert hop_moment(unify(MALAGA), 1) == pytest.approx(d.g + d.omega_prime, rel=1e-12)


def test_moment_matches_quadrature():
    u = unify(F_TURB, pointing_w10())

    def f(y):
        x = math.exp(y)
        return combined_pdf(u, x) * x**2  # x * pdf * e^y jacobian -> E[h]

    val = sum(
        integrate.quad(f, a, b, limit=200)[0]
        for a, b in [(-40.0, -10.0), (-10.0, 0.0), (0.0, 5.0)]
    )
    assert val == pytest.approx(hop_moment(u, 1), rel=1e-7)


def test_moment_nonexistence():
    u = unify(F_TURB)  # beta = 6.55 caps the polynomial tail
    with pytest.raises(ValueError):
        hop_moment(u, 7.0)
    assert hop_moment(u, 0) == 1.0


# --------------------------------------------------------------------------- product & sum laws


def test_product_single_hop_degenerate():
    u = unify(F_TURB, pointing_w10(), RandomFog(2, 13.12, 1.0))
    ps = product_stats([u])
    for x in (1e-4, 1e-3, 1e-2):
        assert ps.pdf(x) == pytest.approx(combined_pdf(u, x), rel=1e-10)
        assert ps.cdf(x) == pytest.approx(combined_cdf(u, x), rel=1e-10)


def test_product_mgf_first_moment():
    u = unify(GammaGammaParams(3.01, 3.0))
    ps = product_stats([u, u])
    mean = hop_moment(u, 1) ** 2
    g1 = (1.0 - ps.mgf(1e-3)) / 1e-3
    g2 = (1.0 - ps.mgf(5e-4)) / 5e-4
    assert 2.0 * g2 - g1 == pytest.approx(mean, rel=1e-4)


def test_product_cdf_monotone_and_mixed_hops():
    p = pointing_w10()
    hop1 = unify(F_TURB, p, RandomFog(2, 13.12, 1.0))
    hop2 = unify(GammaGammaParams(3.01, 3.0))
    ps = product_stats([hop1, hop2])
    xs = np.geomspace(1e-5, 5e-2, 8)
    vals = [ps.cdf(float(x)) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert 0.0 < vals[0] and vals[-1] < 1.0


def test_sum_single_element_matches_product():
    p = pointing_w10()
    chain = HopChain((unify(F_TURB, p), unify(GammaGammaParams(3.01, 3.0))), elements=1)
    ss = sum_stats(chain)
    ps = product_stats(chain.hops)
    for x in (1e-4, 2e-3):
        assert ss.cdf(x) == pytest.approx(ps.cdf(x), rel=1e-10)


def test_sum_two_elements_tensor():
    # N = 2 distribution function lies below the single-element one and the
    # deterministic evaluation stays within its own error estimate
    p = pointing_w10()
    hop = unify(F_TURB, p)
    one = sum_stats(HopChain((hop,), 1)).cdf(1e-3)
    two = sum_stats(HopChain((hop,), 2)).cdf(1e-3)
    assert 0.0 < two < one**2 * 1.1
    # doubling the argument of a two-term sum of the same parts: P[Z1+Z2 <= 2x]
    # must exceed P[Z1 <= x] * P[Z2 <= x]
    two_wide = sum_stats(HopChain((hop,), 2)).cdf(2e-3)
    assert two_wide > one**2


# --------------------------------------------------------------------------- SNR transforms


def test_snr_cdf_identity_transform():
    u = unify(F_TURB, pointing_w10())
    for g in (1e-4, 1e-3):
        assert snr_cdf(u, (1, 1.0), g) == pytest.approx(combined_cdf(u, g), rel=1e-12)


def test_snr_cdf_direct_detection_substitution():
    u = unify(F_TURB, pointing_w10())
    gamma0 = 4.0
    g = 1e-5
    assert snr_cdf(u, (2, gamma0), g) == pytest.approx(
        combined_cdf(u, math.sqrt(g / gamma0)), rel=1e-12
    )


def test_snr_pdf_normalizes():
    u = unify(F_TURB, pointing_w10())
    gamma0 = 100.0

    def f(y):
        g = math.exp(y)
        return snr_pdf(u, (2, gamma0), g) * g

    total = sum(
        integrate.quad(f, a, b, limit=200)[0]
        for a, b in [(-75.0, -20.0), (-20.0, -5.0), (-5.0, 8.0)]
    )
    assert total == pytest.approx(1.0, abs=1e-6)


def test_snr_validation():
    u = unify(F_TURB, pointing_w10())
    with pytest.raises(ValueError):
        snr_cdf(u, (3, 1.0), 1.0)
    with pytest.raises(ValueError):
        snr_cdf(u, (1, -1.0), 1.0)
    assert snr_cdf(u, (1, 1.0), 0.0) == 0.0
