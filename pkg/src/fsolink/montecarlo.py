"""Monte-Carlo samplers and estimators for the optical-link models.

Every channel primitive (turbulence, beam misalignment, fog) is drawn from
its physical law and combined exactly the way the analytic engine composes
them, which makes the estimators an independent truth source for the
closed-form results.  Streams are counter-based so estimates are bit-identical
for a fixed (seed, stream_id, n_samples) regardless of how work is split.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy import special as sp

from .channels import (
    DeterministicFog,
    FParams,
    GammaGammaParams,
    HopChain,
    MalagaParams,
    PointingParams,
    RandomFog,
    UnifiedChannelParams,
    _as_chain,
    _detection_pair,
    derive_malaga,
)

__all__ = [
    "BATCH_SIZE",
    "MIN_RECOMMENDED_SAMPLES",
    "RngStream",
    "McEstimate",
    "sample_turbulence",
    "sample_pointing",
    "sample_fog",
    "sample_hop",
    "sample_end_to_end",
    "estimate_metric",
]

BATCH_SIZE = 100_000
MIN_RECOMMENDED_SAMPLES = 10_000


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream: (seed, stream_id) fixes every draw.

    Batch ``b`` of a stream gets its own generator spawned from
    ``SeedSequence(seed, spawn_key=(stream_id, b))``, so estimates do not
    depend on how batches are scheduled, only on their indices.
    """

    seed: int
    stream_id: int = 0

    def generator(self, batch_index: int = 0) -> Generator:
        ss = SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, batch_index))
        return Generator(Philox(ss))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int


def sample_turbulence(turb, rng: Generator, n: int = 1) -> np.ndarray:
    """Draw ``n`` unit-mean turbulence gains for any of the three models."""
    if isinstance(turb, GammaGammaParams):
        a, b = float(turb.alpha), float(turb.beta)
        return (rng.standard_gamma(a, n) / a) * (rng.standard_gamma(b, n) / b)
    if isinstance(turb, FParams):
        a, b = float(turb.alpha), float(turb.beta)
        u = rng.standard_gamma(a, n)
        v = rng.standard_gamma(b, n)
        return (b - 1.0) * u / (a * v)
    if isinstance(turb, MalagaParams):
        der = derive_malaga(turb)
        a, be = float(turb.alpha), int(turb.beta)
        gbo = der.g * be + der.omega_prime
        w = np.asarray(der.weights, dtype=float)
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("mixture weights do not sum to 1 within 1e-9")
        idx = rng.choice(be, size=n, p=w / w.sum())
        x = rng.standard_gamma(a, n) / a
        y = rng.standard_gamma(idx + 1.0)
        # component m is a doubly-stochastic gain with mean m*gbo/beta; the
        # 1/m normalizer of the second factor cancels against that mean
        return x * y * (gbo / be)
    raise TypeError("unsupported turbulence parameter type")


def sample_pointing(point: PointingParams, rng: Generator, n: int = 1) -> np.ndarray:
    """Collected-power fraction under radially symmetric jitter: the radial
    offset is Rayleigh with sigma^2 = xi/4 and the collected fraction decays
    as a Gaussian of the offset, capped at the zero-offset fraction."""
    sigma = 0.5 * math.sqrt(point.xi)
    r = rng.rayleigh(sigma, n)
    return point.a0 * np.exp(-2.0 * r * r / point.w_zeq_sq)


def sample_fog(fog, rng: Generator, n: int = 1) -> np.ndarray:
    """Fog gain: exp(-X) with X ~ Gamma(k, rate v) in the random mode, or the
    constant Beer-Lambert gain in the deterministic mode."""
    if isinstance(fog, DeterministicFog):
        return np.full(n, fog.gain)
    if isinstance(fog, RandomFog):
        x = rng.standard_gamma(float(fog.k), n) / fog.v
        return np.exp(-x)
    raise TypeError("unsupported fog parameter type")


def sample_hop(hop: UnifiedChannelParams, rng: Generator, n: int = 1) -> np.ndarray:
    """One hop's composite gain: turbulence x misalignment x fog, using the
    physical parameter set the hop was built from."""
    if hop.turbulence is None:
        raise ValueError(
            "hop carries no physical parameter set; build it via unify() to sample"
        )
    h = sample_turbulence(hop.turbulence, rng, n)
    if hop.pointing is not None:
        h = h * sample_pointing(hop.pointing, rng, n)
    if hop.fog is not None:
        h = h * sample_fog(hop.fog, rng, n)
    return h


def sample_end_to_end(chain, rng: Generator, n: int = 1) -> np.ndarray:
    """End-to-end gain: sum over reflecting elements of the product of that
    element's hop gains (a single-hop link is the one-element, one-hop case)."""
    chain = _as_chain(chain)
    total = np.zeros(n)
    for _ in range(chain.elements):
        prod = np.ones(n)
        for hop in chain.hops:
            prod = prod * sample_hop(hop, rng, n)
        total += prod
    return total


DEFAULT_GAMMA_TH = 10.0 ** 0.5


def _metric_kernel(metric, det, modulation, gamma_th, r):
    t, gamma0 = _detection_pair(det)
    name = str(metric)
    if name.startswith("moment-"):
        r = int(name.split("-", 1)[1])
        name = "moment"
    if name == "outage":
        th = DEFAULT_GAMMA_TH if gamma_th is None else float(gamma_th)
        if th <= 0.0:
            raise ValueError("gamma_th must be positive")
        return lambda z: (gamma0 * z**t <= th).astype(float)
    if name == "ber":
        if modulation is None:
            raise ValueError("ber estimation needs a modulation parameter set")
        p = float(modulation.p)
        q = float(modulation.q)
        # conditional error probability given the SNR; averaging it instead of
        # flipping bits removes the Bernoulli variance
        return lambda z: 0.5 * sp.gammaincc(p, q * gamma0 * z**t)
    if name == "capacity":
        mu = getattr(det, "mu_t", None)
        if mu is None:
            mu = 1.0 if t == 1 else math.e / (2.0 * math.pi)
        return lambda z: np.log2(1.0 + mu * gamma0 * z**t)
    if name == "moment":
        if r is None:
            raise ValueError("moment estimation needs the order r")
        rr = float(r)
        return lambda z: (gamma0 * z**t) ** rr
    raise ValueError(f"unknown metric {metric!r}")


def estimate_metric(
    metric,
    chain,
    det,
    modulation=None,
    *,
    n_samples: int,
    rng,
    gamma_th=None,
    r=None,
    batch_size: int = BATCH_SIZE,
) -> McEstimate:
    """Estimate outage / ber / capacity / moment-r by simulation.

    ``rng`` is an :class:`RngStream` (or a bare integer seed).  Samples are
    drawn in fixed-size batches with per-batch generators and merged with a
    numerically stable running mean/variance, so the result is reproducible
    and independent of scheduling.
    """
    n = int(n_samples)
    if n <= 0:
        raise ValueError("n_samples must be positive")
    if n < MIN_RECOMMENDED_SAMPLES:
        warnings.warn(
            f"n_samples={n} is below {MIN_RECOMMENDED_SAMPLES}; "
            "the reported standard error may be unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    kernel = _metric_kernel(metric, det, modulation, gamma_th, r)

    count = 0
    mean = 0.0
    m2 = 0.0
    batch = 0
    while count < n:
        size = min(int(batch_size), n - count)
        gen = stream.generator(batch)
        y = kernel(sample_end_to_end(chain, gen, size))
        bm = float(np.mean(y))
        bm2 = float(np.sum((y - bm) ** 2))
        tot = count + size
        delta = bm - mean
        mean += delta * size / tot
        m2 += bm2 + delta * delta * count * size / tot
        count = tot
        batch += 1
    var = m2 / (count - 1) if count > 1 else 0.0
    return McEstimate(mean=mean, std_error=math.sqrt(max(var, 0.0) / count), n_samples=count)
