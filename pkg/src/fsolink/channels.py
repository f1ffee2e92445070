"""Composite channel laws for optical links through turbulent, misaligned,
and obscured paths.

Each hop gain is a product ``h = h_turb * h_point * h_fog`` of independent
factors: a turbulence fade (Gamma-Gamma, Malaga mixture, or Fisher-Snedecor
F), a zero-boresight misalignment loss, and a visibility loss that is either
random (Gamma-distributed optical depth) or a fixed Beer-Lambert gain.  The
Mellin transform of every factor is a ratio of Gamma functions, so each hop --
and any product or independent sum of hops -- maps onto the contour kernels of
:mod:`fsolink.specfun`.  This module derives those kernels and exposes the
distribution-level operations; SNR-domain metrics live in
:mod:`fsolink.metrics`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

from .specfun import (
    FoxHMultiSpec,
    FoxHSpec,
    GammaFactor,
    OuterFactor,
    eval_fox_h,
    eval_fox_h_multi,
)

__all__ = [
    "GammaGammaParams",
    "MalagaParams",
    "FParams",
    "TurbulenceParams",
    "MalagaDerived",
    "derive_malaga",
    "DownlinkJitter",
    "RisJitter",
    "PointingParams",
    "derive_pointing",
    "RandomFog",
    "DeterministicFog",
    "FogParams",
    "kim_attenuation",
    "UnifiedChannelParams",
    "unify",
    "combined_pdf",
    "combined_cdf",
    "hop_moment",
    "product_mellin_terms",
    "pdf_terms",
    "cdf_terms",
    "ProductStats",
    "product_stats",
    "HopChain",
    "SumStats",
    "sum_stats",
    "snr_cdf",
    "snr_pdf",
]


# --------------------------------------------------------------------------- turbulence
@dataclass(frozen=True)
class GammaGammaParams:
    """Product-of-two-Gammas irradiance model (unit mean)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Gamma-Gamma shape parameters must be positive")


@dataclass(frozen=True)
class MalagaParams:
    """Line-of-sight + coupled/independent scatter irradiance model.

    ``beta`` must be a positive integer so the density is a finite mixture;
    ``rho_coupling`` is the share of scatter power coupled to the line of
    sight and ``phase_diff`` the phase between the two coherent terms.
    """

    alpha: float
    beta: int
    omega: float
    b0: float
    rho_coupling: float
    phase_diff: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("Malaga alpha must be positive")
        if isinstance(self.beta, bool) or int(self.beta) != self.beta or self.beta < 1:
            raise ValueError("Malaga beta must be a positive integer (finite mixture form)")
        if self.omega < 0:
            raise ValueError("Malaga omega (line-of-sight power) must be nonnegative")
        if self.b0 <= 0:
            raise ValueError("Malaga b0 (scatter power) must be positive")
        if not 0.0 <= self.rho_coupling <= 1.0:
            raise ValueError("Malaga rho_coupling must lie in [0, 1]")
        if self.rho_coupling == 1.0:
            raise ValueError(
                "rho_coupling = 1 leaves no independent scatter power (g = 0); "
                "the finite-mixture representation requires g > 0"
            )


@dataclass(frozen=True)
class FParams:
    """Fisher-Snedecor-type irradiance model (unit mean for beta > 1)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("F-model alpha must exceed 1")
        if self.beta <= 1:
            raise ValueError("F-model beta must exceed 1 (scale beta - 1 must be positive)")


TurbulenceParams = Union[GammaGammaParams, MalagaParams, FParams]


@dataclass(frozen=True)
class MalagaDerived:
    """Closed-form auxiliaries of the Malaga mixture."""

    g: float
    omega_prime: float
    a_mg: float
    a_m: tuple[float, ...]
    b_m: tuple[float, ...]
    weights: tuple[float, ...]


def derive_malaga(params: MalagaParams) -> MalagaDerived:
    """Derive the mixture constants and self-check their normalization.

    The mixture weights are the probability masses of the component terms;
    their sum must be 1, which guards against transcription errors in the
    auxiliary formulas.
    """
    al = float(params.alpha)
    be = int(params.beta)
    g = 2.0 * params.b0 * (1.0 - params.rho_coupling)
    omega_prime = (
        params.omega
        + 2.0 * params.b0 * params.rho_coupling
        + 2.0 * math.sqrt(2.0 * params.b0 * params.rho_coupling * params.omega)
        * math.cos(params.phase_diff)
    )
    gbo = g * be + omega_prime
    a_mg = (
        2.0 * al ** (al / 2.0)
        / (g ** (1.0 + al / 2.0) * math.gamma(al))
        * (g * be / gbo) ** (be + al / 2.0)
    )
    a_m, b_m, weights = [], [], []
    for m in range(1, be + 1):
        am = (
            math.comb(be - 1, m - 1)
            / math.factorial(m - 1)
            * gbo ** (1.0 - m / 2.0)
            * (omega_prime / g) ** (m - 1)
            * (al / be) ** (m / 2.0)
        )
        bm = am * (al * be / gbo) ** (-(al + m) / 2.0)
        a_m.append(am)
        b_m.append(bm)
        weights.append(0.5 * a_mg * bm * math.gamma(al) * math.gamma(m))
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-6:
        raise ValueError(
            f"Malaga mixture weights sum to {total:.9f}, not 1: "
            "inconsistent auxiliary parameters"
        )
    return MalagaDerived(g, omega_prime, a_mg, tuple(a_m), tuple(b_m), tuple(weights))


# --------------------------------------------------------------------------- pointing
@dataclass(frozen=True)
class DownlinkJitter:
    """Radial displacement jitter of a single terminal [m std-dev]."""

    sigma_s: float


@dataclass(frozen=True)
class RisJitter:
    """Angular jitter of transmitter and reflector.

    ``sigma_theta``/``sigma_beta`` in radians; ``d_km`` the full path length
    and ``d2_km`` the reflector-to-receiver leg, both in km.
    """

    sigma_theta: float
    sigma_beta: float
    d_km: float
    d2_km: float


@dataclass(frozen=True)
class PointingParams:
    """Zero-boresight misalignment loss parameters.

    ``a0`` is the power fraction collected at perfect alignment, ``w_zeq_sq``
    the equivalent beam-width square and ``rho_sq = w_zeq_sq / xi`` the
    jitter-severity exponent of the loss density ~ x**(rho_sq - 1) on
    (0, a0).
    """

    aperture_radius: float
    beam_width: float
    upsilon: float
    a0: float
    w_zeq_sq: float
    rho_sq: float
    xi: float


def derive_pointing(
    aperture_radius: float,
    beam_width: float,
    jitter: Union[DownlinkJitter, RisJitter],
    rho_sq_override: Optional[float] = None,
) -> PointingParams:
    """Derive the misalignment-loss parameters from the link geometry.

    ``rho_sq_override`` pins the severity exponent directly (the displacement
    variance is back-solved so samplers stay consistent with the analytic
    law).
    """
    if aperture_radius <= 0 or beam_width <= 0:
        raise ValueError("aperture radius and beam width must be positive")
    upsilon = math.sqrt(math.pi / 2.0) * aperture_radius / beam_width
    a0 = math.erf(upsilon) ** 2
    w_zeq_sq = (
        beam_width**2 * math.sqrt(math.pi) * math.erf(upsilon)
        / (2.0 * upsilon * math.exp(-upsilon * upsilon))
    )
    if isinstance(jitter, DownlinkJitter):
        if jitter.sigma_s <= 0:
            raise ValueError("displacement jitter sigma_s must be positive")
        xi = 4.0 * jitter.sigma_s**2
    elif isinstance(jitter, RisJitter):
        if jitter.sigma_theta <= 0 or jitter.sigma_beta <= 0:
            raise ValueError("angular jitters must be positive")
        if jitter.d_km <= 0 or jitter.d2_km < 0:
            raise ValueError("path lengths must be positive")
        d_m = 1000.0 * jitter.d_km
        d2_m = 1000.0 * jitter.d2_km
        xi = 4.0 * jitter.sigma_theta**2 * d_m**2 + 16.0 * jitter.sigma_beta**2 * d2_m**2
    else:
        raise TypeError("jitter must be DownlinkJitter or RisJitter")
    rho_sq = w_zeq_sq / xi
    if rho_sq_override is not None:
        if rho_sq_override <= 0:
            raise ValueError("rho_sq override must be positive")
        rho_sq = float(rho_sq_override)
        xi = w_zeq_sq / rho_sq
    return PointingParams(
        aperture_radius=aperture_radius,
        beam_width=beam_width,
        upsilon=upsilon,
        a0=a0,
        w_zeq_sq=w_zeq_sq,
        rho_sq=rho_sq,
        xi=xi,
    )


# --------------------------------------------------------------------------- fog / visibility
@dataclass(frozen=True)
class RandomFog:
    """Random visibility loss: h = exp(-G), G ~ Gamma(shape k, rate v).

    ``beta_fog`` [dB/km-type scale] and the path length set the rate
    v = 4.343 / (d * beta_fog); ``k`` must be a positive integer so the loss
    law stays a finite Gamma-block kernel.
    """

    k: int
    beta_fog: float
    d_km: float

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValueError("fog shape k must be a positive integer")
        if self.beta_fog <= 0:
            raise ValueError("beta_fog must be positive")
        if self.d_km <= 0:
            raise ValueError("path length must be positive")

    @property
    def v(self) -> float:
        return 4.343 / (self.d_km * self.beta_fog)


@dataclass(frozen=True)
class DeterministicFog:
    """Fixed Beer-Lambert gain exp(-tau * d) for haze-like conditions."""

    tau: float
    d_km: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("extinction coefficient must be nonnegative")
        if self.d_km <= 0:
            raise ValueError("path length must be positive")

    @property
    def gain(self) -> float:
        return math.exp(-self.tau * self.d_km)


FogParams = Union[RandomFog, DeterministicFog, None]


def kim_attenuation(visibility_km: float, wavelength_nm: float = 1550.0) -> float:
    """Extinction coefficient [1/km] from visibility (Kim size-distribution
    exponent)."""
    vis = float(visibility_km)
    if vis <= 0:
        raise ValueError("visibility must be positive")
    if vis > 50.0:
        q = 1.6
    elif vis > 6.0:
        q = 1.3
    elif vis > 1.0:
        q = 0.16 * vis + 0.34
    elif vis > 0.5:
        q = vis - 0.5
    else:
        q = 0.0
    return 3.19 / vis * (wavelength_nm / 550.0) ** (-q)


# --------------------------------------------------------------------------- unified hop law
@dataclass(frozen=True)
class UnifiedChannelParams:
    """Mixture-of-Gamma-ratio representation of one hop's gain law.

    The hop's Mellin transform is
    ``E[h**(-s)] = sum_l psi * zeta[l] * C[l]**(phi) ... `` — concretely, each
    mixture term contributes ``lead_l * C[l]**s`` times a ratio of Gamma
    factors built from the ``phi``-shifted ``a``/``b`` rows, with ``k``
    repeated factors ``(v/(v-s))`` for random visibility loss.  Deterministic
    visibility gain is already folded into ``C`` (and ``psi``); random fog is
    kept in ``fog``.  The original component parameter blocks ride along for
    the samplers.
    """

    psi: float
    phi: float
    P: int
    zeta: tuple[float, ...]
    C: tuple[float, ...]
    orders: tuple[int, int, int, int]
    a: tuple[float, ...]
    b: tuple[tuple[float, ...], ...]
    fog: FogParams = None
    turbulence: Optional[TurbulenceParams] = None
    pointing: Optional[PointingParams] = None

    def __post_init__(self):
        m, n, p, q = self.orders
        if not (len(self.zeta) == len(self.C) == len(self.b) == self.P >= 1):
            raise ValueError("mixture lists must share length P")
        if len(self.a) != p or any(len(row) != q for row in self.b):
            raise ValueError("parameter rows must match the stated orders")
        if not (0 <= n <= p and 0 <= m <= q):
            raise ValueError("orders out of range")
        if self.psi <= 0:
            raise ValueError("psi must be positive")

    def mellin_terms(self) -> tuple[FoxHSpec, ...]:
        """Per-mixture-term kernels of E[h**(-s)] (offset 0)."""
        m, n, _, _ = self.orders
        k = self.fog.k if isinstance(self.fog, RandomFog) else 0
        terms = []
        for zeta_l, c_l, b_row in zip(self.zeta, self.C, self.b):
            nl = [GammaFactor(self.phi + bw) for bw in b_row[:m]]
            dl = [GammaFactor(self.phi + bw) for bw in b_row[m:]]
            nu = [GammaFactor(self.phi + aw) for aw in self.a[:n]]
            du = [GammaFactor(self.phi + aw) for aw in self.a[n:]]
            lead = self.psi * zeta_l * c_l ** (-self.phi)
            if k:
                v = self.fog.v
                nl.append(GammaFactor(v, 1.0, k))
                du.append(GammaFactor(v + 1.0, 1.0, k))
                lead *= v**k
            terms.append(
                FoxHSpec(
                    numerator_lower=tuple(nl),
                    numerator_upper=tuple(nu),
                    denominator_lower=tuple(dl),
                    denominator_upper=tuple(du),
                    argument_scale=c_l,
                    leading_coefficient=lead,
                )
            )
        return tuple(terms)


def unify(
    turb: TurbulenceParams,
    point: Optional[PointingParams] = None,
    fog: FogParams = None,
) -> UnifiedChannelParams:
    """Map a turbulence family (optionally with misalignment loss and fog)
    onto the unified mixture representation."""
    if point is not None:
        rho_sq, a0 = point.rho_sq, point.a0
    if isinstance(turb, GammaGammaParams):
        al, be = turb.alpha, turb.beta
        lg = math.lgamma(al) + math.lgamma(be)
        if point is not None:
            psi = al * be * rho_sq / a0 * math.exp(-lg)
            row = dict(
                phi=1.0,
                zeta=(1.0,),
                C=(al * be / a0,),
                orders=(3, 0, 1, 3),
                a=(rho_sq,),
                b=((rho_sq - 1.0, al - 1.0, be - 1.0),),
            )
        else:
            psi = al * be * math.exp(-lg)
            row = dict(
                phi=1.0,
                zeta=(1.0,),
                C=(al * be,),
                orders=(2, 0, 0, 2),
                a=(),
                b=((al - 1.0, be - 1.0),),
            )
    elif isinstance(turb, FParams):
        al, be = turb.alpha, turb.beta
        lg = math.lgamma(al) + math.lgamma(be)
        if point is not None:
            psi = al * rho_sq / ((be - 1.0) * a0) * math.exp(-lg)
            row = dict(
                phi=1.0,
                zeta=(1.0,),
                C=(al / ((be - 1.0) * a0),),
                orders=(2, 1, 2, 2),
                a=(-be, rho_sq),
                b=((al - 1.0, rho_sq - 1.0),),
            )
        else:
            psi = al / (be - 1.0) * math.exp(-lg)
            row = dict(
                phi=1.0,
                zeta=(1.0,),
                C=(al / (be - 1.0),),
                orders=(1, 1, 1, 1),
                a=(-be,),
                b=((al - 1.0,),),
            )
    elif isinstance(turb, MalagaParams):
        der = derive_malaga(turb)
        al, be = float(turb.alpha), int(turb.beta)
        gbo = der.g * be + der.omega_prime
        if point is not None:
            psi = rho_sq * der.a_mg / 2.0
            row = dict(
                phi=0.0,
                zeta=der.b_m,
                C=(al * be / (gbo * a0),) * be,
                orders=(3, 0, 1, 3),
                a=(rho_sq + 1.0,),
                b=tuple((rho_sq, al, float(m)) for m in range(1, be + 1)),
            )
        else:
            psi = der.a_mg / 2.0
            row = dict(
                phi=0.0,
                zeta=der.b_m,
                C=(al * be / gbo,) * be,
                orders=(2, 0, 0, 2),
                a=(),
                b=tuple((al, float(m)) for m in range(1, be + 1)),
            )
    else:
        raise TypeError("unsupported turbulence parameter type")

    if isinstance(fog, DeterministicFog):
        gain = fog.gain
        psi *= gain ** (-row["phi"])
        row["C"] = tuple(c / gain for c in row["C"])

    return UnifiedChannelParams(
        psi=psi,
        P=len(row["zeta"]),
        fog=fog,
        turbulence=turb,
        pointing=point,
        **row,
    )


# --------------------------------------------------------------------------- kernel transforms
def _as_pdf(term: FoxHSpec) -> FoxHSpec:
    return replace(term, argument_power_offset=-1.0)


def _as_cdf(term: FoxHSpec) -> FoxHSpec:
    # integrating x**(s-1) from 0 to x brings in Gamma(s)/Gamma(1+s)
    return replace(
        term,
        numerator_upper=term.numerator_upper + (GammaFactor(1.0),),
        denominator_lower=term.denominator_lower + (GammaFactor(0.0),),
    )


def _as_laplace(term: FoxHSpec) -> FoxHSpec:
    # E[exp(-u Z)] evaluated at x = 1/u brings in Gamma(s)
    return replace(term, numerator_upper=term.numerator_upper + (GammaFactor(1.0),))


def product_mellin_terms(hops: Sequence[UnifiedChannelParams]) -> tuple[FoxHSpec, ...]:
    """Kernels of E[Z**(-s)] for the product Z of independent hop gains:
    one merged term per combination of the hops' mixture terms."""
    if not hops:
        raise ValueError("at least one hop is required")
    out = []
    for combo in itertools.product(*[h.mellin_terms() for h in hops]):
        out.append(
            FoxHSpec(
                numerator_lower=sum((t.numerator_lower for t in combo), ()),
                numerator_upper=sum((t.numerator_upper for t in combo), ()),
                denominator_lower=sum((t.denominator_lower for t in combo), ()),
                denominator_upper=sum((t.denominator_upper for t in combo), ()),
                argument_scale=math.prod(t.argument_scale for t in combo),
                leading_coefficient=math.prod(t.leading_coefficient for t in combo),
            )
        )
    return tuple(out)


def pdf_terms(hops: Sequence[UnifiedChannelParams]) -> tuple[FoxHSpec, ...]:
    return tuple(_as_pdf(t) for t in product_mellin_terms(hops))


def cdf_terms(hops: Sequence[UnifiedChannelParams]) -> tuple[FoxHSpec, ...]:
    return tuple(_as_cdf(t) for t in product_mellin_terms(hops))


def combined_pdf(hop: UnifiedChannelParams, x, **kwargs):
    """Density of one hop's gain at ``x`` (scalar or array)."""
    return eval_fox_h(pdf_terms([hop]), x, **kwargs)


def combined_cdf(hop: UnifiedChannelParams, x, **kwargs):
    """Distribution function of one hop's gain at ``x`` (scalar or array)."""
    return eval_fox_h(cdf_terms([hop]), x, **kwargs)


def hop_moment(hop: UnifiedChannelParams, r: float) -> float:
    """E[h**r] in closed form from the hop's Gamma-ratio Mellin transform."""
    if r < 0:
        raise ValueError("moment order must be nonnegative")
    if r == 0:
        return 1.0
    s = -float(r)
    total = 0.0
    for t in hop.mellin_terms():
        for f in t.numerator_upper:
            if 1.0 - f.coefficient + f.scale * s <= 0.0:
                raise ValueError(f"moment of order {r:g} does not exist for this hop")
        log_val = t.log_mellin(complex(s)).real + s * math.log(t.argument_scale)
        total += t.leading_coefficient * math.exp(log_val)
    return total


# --------------------------------------------------------------------------- product & sum laws
@dataclass(frozen=True)
class ProductStats:
    """Distribution of the product of independent hop gains."""

    hops: tuple[UnifiedChannelParams, ...]
    terms: tuple[FoxHSpec, ...]

    def pdf(self, x, **kwargs):
        return eval_fox_h([_as_pdf(t) for t in self.terms], x, **kwargs)

    def cdf(self, x, **kwargs):
        return eval_fox_h([_as_cdf(t) for t in self.terms], x, **kwargs)

    def mgf(self, u, **kwargs):
        """E[exp(-u Z)] for u > 0."""
        if u <= 0:
            raise ValueError("the transform argument must be positive")
        return eval_fox_h([_as_laplace(t) for t in self.terms], 1.0 / u, **kwargs)


def product_stats(hops: Sequence[UnifiedChannelParams]) -> ProductStats:
    return ProductStats(tuple(hops), product_mellin_terms(hops))


@dataclass(frozen=True)
class HopChain:
    """N independent summands, each the product of the same hop blocks."""

    hops: tuple[UnifiedChannelParams, ...]
    elements: int = 1

    def __post_init__(self):
        if not self.hops:
            raise ValueError("at least one hop is required")
        if self.elements < 1:
            raise ValueError("element count must be at least 1")


def _as_chain(chain_or_hop) -> HopChain:
    if isinstance(chain_or_hop, HopChain):
        return chain_or_hop
    if isinstance(chain_or_hop, UnifiedChannelParams):
        return HopChain((chain_or_hop,), 1)
    return HopChain(tuple(chain_or_hop), 1)


@dataclass(frozen=True)
class SumStats:
    """Distribution of the sum of N independent product-of-hops gains.

    For N = 1 evaluation stays on a single contour; for N >= 2 the builders
    produce the N-variable kernel (per-element blocks tied by a
    1/Gamma-of-the-sum joint factor) and evaluation delegates to
    :func:`fsolink.specfun.eval_fox_h_multi`.
    """

    chain: HopChain
    element_terms: tuple[FoxHSpec, ...]

    def cdf_spec(self, x: float) -> FoxHMultiSpec:
        n = self.chain.elements
        per_var = (tuple(_as_laplace(t) for t in self.element_terms),) * n
        return FoxHMultiSpec(
            per_variable=per_var,
            outer_factors=(OuterFactor(0.0, (1.0,) * n, numerator=False),),
            arguments=(float(x),) * n,
        )

    def pdf_spec(self, x: float) -> FoxHMultiSpec:
        n = self.chain.elements
        per_var = (tuple(_as_laplace(t) for t in self.element_terms),) * n
        return FoxHMultiSpec(
            per_variable=per_var,
            outer_factors=(OuterFactor(1.0, (1.0,) * n, numerator=False),),
            arguments=(float(x),) * n,
            leading_coefficient=1.0 / float(x),
        )

    def cdf(self, x, **kwargs):
        if self.chain.elements == 1:
            return eval_fox_h([_as_cdf(t) for t in self.element_terms], x, **kwargs)
        return eval_fox_h_multi(self.cdf_spec(x), **kwargs)

    def pdf(self, x, **kwargs):
        if self.chain.elements == 1:
            return eval_fox_h([_as_pdf(t) for t in self.element_terms], x, **kwargs)
        return eval_fox_h_multi(self.pdf_spec(x), **kwargs)


def sum_stats(chain: HopChain) -> SumStats:
    return SumStats(chain, product_mellin_terms(chain.hops))


# --------------------------------------------------------------------------- SNR transforms
def _detection_pair(det) -> tuple[int, float]:
    if hasattr(det, "t") and hasattr(det, "gamma0"):
        t, gamma0 = det.t, det.gamma0
    else:
        t, gamma0 = det
    t = int(t)
    if t not in (1, 2):
        raise ValueError("detection exponent t must be 1 (coherent) or 2 (direct)")
    gamma0 = float(gamma0)
    if gamma0 <= 0:
        raise ValueError("reference SNR gamma0 must be positive")
    return t, gamma0


def snr_cdf(chain_or_hop, det, gamma, **kwargs):
    """CDF of the SNR gamma0 * h**t at ``gamma``."""
    t, gamma0 = _detection_pair(det)
    if gamma <= 0:
        return 0.0
    x = (gamma / gamma0) ** (1.0 / t)
    return sum_stats(_as_chain(chain_or_hop)).cdf(x, **kwargs)


def snr_pdf(chain_or_hop, det, gamma, **kwargs):
    """Density of the SNR gamma0 * h**t at ``gamma``."""
    t, gamma0 = _detection_pair(det)
    if gamma <= 0:
        return 0.0
    x = (gamma / gamma0) ** (1.0 / t)
    jacobian = x / (t * gamma)
    return sum_stats(_as_chain(chain_or_hop)).pdf(x, **kwargs) * jacobian
