"""Mellin-Barnes evaluation of Fox-H-type special functions.

A Fox-H-type value is a contour integral

    H(z) = (1 / 2*pi*j) * integral over a vertical line of  Lambda(s) * z**s ds

where ``Lambda`` is a ratio of products of Gamma functions of affine arguments
in ``s``.  This module provides

* :class:`GammaFactor` / :class:`FoxHSpec` -- declarative description of one
  such kernel, together with pole bookkeeping,
* :func:`plan_contour` -- choice of the integration line (anchor) and of the
  truncation point from the actual kernel decay,
* :func:`eval_fox_h` -- adaptive evaluation on a vector of positive arguments
  with refinement until a relative tolerance is met,
* :func:`eval_meijer_g` -- the all-unit-scale special case in conventional
  (m, n, p, q) order notation,
* :class:`FoxHMultiSpec` / :func:`eval_fox_h_multi` -- multivariate kernels
  (tensor-product quadrature for up to two contour variables, randomized
  quasi-Monte-Carlo with a reported standard error for three or more).

Everything is computed with vectorized complex log-gamma arithmetic; linear
quantities are only formed after per-node exponent normalization, so kernels
whose Gamma factors overflow double precision still evaluate correctly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special
from scipy.stats import qmc

__all__ = [
    "SpecFunError",
    "GammaPoleError",
    "ContourStripError",
    "ConvergenceError",
    "UnsupportedModeError",
    "DegeneratePoleError",
    "GammaFactor",
    "FoxHSpec",
    "OuterFactor",
    "FoxHMultiSpec",
    "ContourPlan",
    "log_gamma_complex",
    "plan_contour",
    "eval_fox_h",
    "eval_meijer_g",
    "eval_fox_h_multi",
]

_LN_TAIL = 16 * math.log(10.0)  # drop the tail once the kernel fell 16 decades
_T_CAP = 4.0e4                  # absolute truncation-point ceiling


# --------------------------------------------------------------------------- errors
class SpecFunError(Exception):
    """Base class for special-function evaluation failures."""


class GammaPoleError(SpecFunError, ValueError):
    """Log-gamma requested exactly at a non-positive integer."""


class ContourStripError(SpecFunError, ValueError):
    """No vertical line separates the ascending and descending pole families."""


class ConvergenceError(SpecFunError):
    """Refinement budget exhausted before the tolerance was met.

    Attributes
    ----------
    last_estimate : float or ndarray
        Best value obtained before giving up.
    error_estimate : float
        Relative change over the final refinement step.
    """

    def __init__(self, message, last_estimate=None, error_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.error_estimate = error_estimate


class UnsupportedModeError(SpecFunError, ValueError):
    """An evaluation mode that is not available for the requested dimension."""


class DegeneratePoleError(SpecFunError, ValueError):
    """Two pole families collide where a simple-pole residue was required."""


# --------------------------------------------------------------------------- primitives
def log_gamma_complex(z):
    """Principal-branch complex log-gamma, vectorized.

    Raises :class:`GammaPoleError` if any entry sits exactly on a pole of the
    Gamma function (a non-positive integer), naming the offending point.
    """
    arr = np.asarray(z, dtype=complex)
    on_axis = arr.imag == 0.0
    re = arr.real
    at_pole = on_axis & (re <= 0.0) & (re == np.floor(re))
    if np.any(at_pole):
        bad = arr[at_pole].ravel()[0]
        raise GammaPoleError(f"log-gamma pole at z = {bad}")
    out = special.loggamma(arr)
    if arr.ndim == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class GammaFactor:
    """One Gamma factor of affine argument; ``multiplicity`` repeats it.

    The meaning of ``coefficient``/``scale`` depends on which of the four
    :class:`FoxHSpec` groups the factor belongs to; see there.
    """

    coefficient: float
    scale: float = 1.0
    multiplicity: int = 1

    def __post_init__(self):
        if not (self.scale > 0.0) or not math.isfinite(self.scale):
            raise ValueError(f"GammaFactor scale must be positive, got {self.scale}")
        if self.multiplicity < 1 or int(self.multiplicity) != self.multiplicity:
            raise ValueError(f"GammaFactor multiplicity must be a positive integer, got {self.multiplicity}")
        if not math.isfinite(self.coefficient):
            raise ValueError(f"GammaFactor coefficient must be finite, got {self.coefficient}")


def _as_factors(factors: Iterable[GammaFactor]) -> tuple[GammaFactor, ...]:
    out = tuple(factors)
    for f in out:
        if not isinstance(f, GammaFactor):
            raise TypeError(f"expected GammaFactor, got {type(f)!r}")
    return out


@dataclass(frozen=True)
class FoxHSpec:
    """Kernel of a univariate Mellin-Barnes integral.

    With ``s`` the contour variable, the kernel is

        Lambda(s) =   prod over numerator_lower   of Gamma(c - B*s)**mult
                    * prod over numerator_upper   of Gamma(1 - c + B*s)**mult
                    / prod over denominator_lower of Gamma(1 - c + B*s)**mult
                    / prod over denominator_upper of Gamma(c - B*s)**mult

    where each factor contributes its own ``c = coefficient`` and
    ``B = scale``.  ``numerator_lower`` factors carry the ascending (right)
    pole family at ``(c + nu)/B``; ``numerator_upper`` factors the descending
    (left) family at ``(c - 1 - nu)/B``.  The represented value is

        value(x) = leading_coefficient * x**argument_power_offset
                   * (1/2*pi*j) * int Lambda(s) * (argument_scale * x)**s ds.
    """

    numerator_lower: tuple[GammaFactor, ...] = ()
    numerator_upper: tuple[GammaFactor, ...] = ()
    denominator_lower: tuple[GammaFactor, ...] = ()
    denominator_upper: tuple[GammaFactor, ...] = ()
    argument_scale: float = 1.0
    leading_coefficient: float = 1.0
    argument_power_offset: float = 0.0

    def __post_init__(self):
        for name in ("numerator_lower", "numerator_upper", "denominator_lower", "denominator_upper"):
            object.__setattr__(self, name, _as_factors(getattr(self, name)))
        if not (self.argument_scale > 0.0) or not math.isfinite(self.argument_scale):
            raise ValueError(f"argument_scale must be positive and finite, got {self.argument_scale}")
        if not math.isfinite(self.leading_coefficient):
            raise ValueError("leading_coefficient must be finite")

    # ---- bookkeeping -------------------------------------------------
    def orders(self) -> tuple[int, int, int, int]:
        """(m, n, p, q) counts with multiplicities."""
        m = sum(f.multiplicity for f in self.numerator_lower)
        n = sum(f.multiplicity for f in self.numerator_upper)
        p = n + sum(f.multiplicity for f in self.denominator_upper)
        q = m + sum(f.multiplicity for f in self.denominator_lower)
        return m, n, p, q

    def delta(self) -> float:
        """Exponential decay rate index of ``|Lambda|`` along the contour.

        The kernel decays like ``exp(-pi*delta*|Im s|/2)`` (times algebraic
        terms); a positive value is required for convergence.
        """
        d = 0.0
        for f in self.numerator_lower:
            d += f.multiplicity * f.scale
        for f in self.numerator_upper:
            d += f.multiplicity * f.scale
        for f in self.denominator_lower:
            d -= f.multiplicity * f.scale
        for f in self.denominator_upper:
            d -= f.multiplicity * f.scale
        return d

    def right_pole_inf(self) -> float:
        """Smallest ascending pole (lower edge of the right family)."""
        vals = [f.coefficient / f.scale for f in self.numerator_lower]
        return min(vals) if vals else math.inf

    def left_pole_sup(self) -> float:
        """Largest descending pole (upper edge of the left family)."""
        vals = [(f.coefficient - 1.0) / f.scale for f in self.numerator_upper]
        return max(vals) if vals else -math.inf

    def log_mellin(self, s):
        """``log Lambda(s)`` on an array of complex points."""
        s = np.asarray(s, dtype=complex)
        out = np.zeros_like(s)
        for f in self.numerator_lower:
            out += f.multiplicity * special.loggamma(f.coefficient - f.scale * s)
        for f in self.numerator_upper:
            out += f.multiplicity * special.loggamma(1.0 - f.coefficient + f.scale * s)
        for f in self.denominator_lower:
            out -= f.multiplicity * special.loggamma(1.0 - f.coefficient + f.scale * s)
        for f in self.denominator_upper:
            out -= f.multiplicity * special.loggamma(f.coefficient - f.scale * s)
        return out


@dataclass(frozen=True)
class ContourPlan:
    """Where a Mellin-Barnes integral is evaluated.

    ``anchors`` holds the real part of each contour variable's line,
    ``truncation`` the per-variable cut-off of the imaginary part, ``nodes``
    a nominal node count, and ``error_estimate`` the relative change over the
    final refinement (populated by the evaluators).
    """

    anchors: tuple[float, ...]
    truncation: tuple[float, ...]
    nodes: int
    error_estimate: float | None = None


def _terms_of(spec_or_terms) -> tuple[FoxHSpec, ...]:
    if isinstance(spec_or_terms, FoxHSpec):
        return (spec_or_terms,)
    terms = tuple(spec_or_terms)
    if not terms or not all(isinstance(t, FoxHSpec) for t in terms):
        raise TypeError("expected a FoxHSpec or a non-empty sequence of them")
    return terms


def _strip_of(terms: Sequence[FoxHSpec]) -> tuple[float, float]:
    right = min(t.right_pole_inf() for t in terms)
    left = max(t.left_pole_sup() for t in terms)
    if left >= right - 1e-12:
        raise ContourStripError(
            "pole families interlace: no separating vertical line exists"
            f" (descending family reaches {left}, ascending family starts at {right})"
        )
    return left, right


def _saddle_anchor(terms: Sequence[FoxHSpec], lnx_ref: float = 0.0, extra_log=None) -> float:
    """Anchor minimizing the real-axis integrand height.

    Placing the line at the saddle of ``log|Lambda| + s*ln z`` keeps the peak
    of the oscillatory integrand at the same magnitude as the result, which
    removes catastrophic cancellation for very small or very large arguments.
    ``extra_log`` optionally adds joint-factor height (multivariate case).
    """
    left, right = _strip_of(terms)
    # Extreme arguments push the saddle against a strip edge, and standing a
    # fixed distance from the blocking pole costs cancellation that grows like
    # exp(margin * |ln z|); tighten the margin so that factor stays bounded.
    lam = max(abs(math.log(t.argument_scale) + lnx_ref) for t in terms)
    margin = min(0.25, max(6.0 / max(lam, 1e-9), 1e-4))
    lo = left + margin if math.isfinite(left) else -30.0
    hi = right - margin if math.isfinite(right) else 30.0
    if math.isfinite(left) and math.isfinite(right):
        width = right - left
        margin = min(margin, 0.2 * width)
        lo, hi = left + margin, right - margin
    if lo >= hi:
        return 0.5 * (left + right)

    def height(c_arr):
        c = np.asarray(c_arr, dtype=float)
        s = c.astype(complex)
        out = np.full(c.shape, -np.inf)
        for t in terms:
            h = t.log_mellin(s).real + c * (math.log(t.argument_scale) + lnx_ref)
            out = np.maximum(out, h)
        if extra_log is not None:
            out = out + extra_log(c)
        return out

    # a strip open on one side may put the saddle arbitrarily far out; grow
    # the search window until the minimum is interior
    for _ in range(16):
        grid = np.linspace(lo, hi, 49)
        vals = height(grid)
        i = int(np.nanargmin(vals))
        if i <= 1 and not math.isfinite(left):
            span = hi - lo
            lo -= 3.0 * span
            continue
        if i >= len(grid) - 2 and not math.isfinite(right):
            span = hi - lo
            hi += 3.0 * span
            continue
        break
    for _ in range(3):  # zoom toward the minimum
        i = int(np.nanargmin(vals))
        a = grid[max(0, i - 1)]
        b = grid[min(len(grid) - 1, i + 1)]
        grid = np.linspace(a, b, 17)
        vals = height(grid)
    return float(grid[int(np.nanargmin(vals))])


def _probe_truncation(logabs_fn, tail_tol: float) -> float:
    """Probe actual kernel decay; cut where it fell far enough below its peak."""
    ln_drop = max(_LN_TAIL, -math.log(max(tail_tol, 1e-300)))
    ref = float(np.max(logabs_fn(np.array([0.0, 0.25, 0.5, 1.0, 2.0]))))
    T = 4.0
    while T <= _T_CAP:
        level = float(logabs_fn(np.array([T]))[0])
        if level + math.log1p(T) <= ref - ln_drop:
            return T
        T *= 1.6
    raise ConvergenceError(
        f"kernel failed to decay below the tail tolerance by Im s = {_T_CAP}"
    )


def _terms_log_probe(terms, anchor):
    def fn(tau_grid):
        s = anchor + 1j * np.asarray(tau_grid, float)
        best = np.full(s.shape, -np.inf)
        for t in terms:
            best = np.maximum(best, t.log_mellin(s).real)
        return best

    return fn


def _plan_terms(terms, tail_tol: float, lnx_ref: float = 0.0) -> ContourPlan:
    delta = min(t.delta() for t in terms)
    if delta <= 0.0:
        raise ConvergenceError(
            f"kernel does not decay along vertical lines (delta = {delta:g} <= 0)"
        )
    anchor = _saddle_anchor(terms, lnx_ref)
    T = _probe_truncation(_terms_log_probe(terms, anchor), tail_tol)
    nominal = 16 * max(8, int(math.ceil(T)))
    return ContourPlan(anchors=(anchor,), truncation=(T,), nodes=nominal)


def plan_contour(spec_or_terms, tail_tol: float = 1e-16) -> ContourPlan:
    """Pick the contour line and truncation for a kernel (or mixture of kernels
    sharing one contour).  Raises :class:`ContourStripError` when the pole
    families cannot be separated and :class:`ConvergenceError` when the kernel
    does not decay."""
    return _plan_terms(_terms_of(spec_or_terms), tail_tol)


def _panel_grid(T: float, omega: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre grid on (0, T] resolving phase rate ``omega``."""
    n_panels = max(4, int(math.ceil(T * omega / 8.0)))
    edges = np.linspace(0.0, T, n_panels + 1)
    x, w = leggauss(order)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    tau = (mids[:, None] + half * x[None, :]).ravel()
    wts = np.broadcast_to(half * w[None, :], (n_panels, order)).ravel()
    return tau, wts


def _batch_half_line(terms, anchor, T, xv, lnz_by_term, order):
    """Sum over terms of  lead * x**offset * (1/pi) int_0^T Re[Lambda z^s] dtau
    for a mixture sharing one contour line.  Returns shape ``(n_x,)``."""
    max_abs_lnz = max(float(np.max(np.abs(l))) for l in lnz_by_term)
    delta = min(t.delta() for t in terms)
    omega = max_abs_lnz + 0.5 * math.pi * delta + 1.0
    tau, wts = _panel_grid(T, omega, order)
    s = anchor + 1j * tau
    total = None
    chunk = max(1, int(4e6 // max(len(s), 1)))
    for t, lnz in zip(terms, lnz_by_term):
        lg = t.log_mellin(s)  # (M,)
        acc = np.empty(len(lnz))
        for lo in range(0, len(lnz), chunk):
            part = lnz[lo:lo + chunk]
            # exponent grid (chunk, M); normalize by row max to avoid overflow
            expo = lg[None, :] + s[None, :] * part[:, None]
            shift = np.max(expo.real, axis=1, keepdims=True)
            shift = np.where(np.isfinite(shift), shift, 0.0)
            vals = np.exp(expo - shift)
            acc[lo:lo + chunk] = (vals.real @ wts) * np.exp(shift[:, 0])
        acc *= t.leading_coefficient / math.pi
        if t.argument_power_offset != 0.0:
            acc = acc * xv ** t.argument_power_offset
        total = acc if total is None else total + acc
    return total


def eval_fox_h(
    spec_or_terms,
    x,
    *,
    tol: float = 1e-10,
    max_refinements: int = 8,
    tail_tol: float = 1e-16,
    full_output: bool = False,
):
    """Evaluate a univariate Fox-H-type value (or a sum of such terms sharing
    one contour strip) on positive argument(s) ``x``.

    Refines the quadrature order until successive estimates agree to ``tol``
    relative; raises :class:`ConvergenceError` (carrying the last estimate)
    if the budget runs out.
    """
    terms = _terms_of(spec_or_terms)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(xv)) or np.any(xv <= 0.0):
        raise ValueError("arguments must be positive and finite")

    # The anchor sits at the integrand saddle, which moves with log(x); group
    # arguments into narrow log-buckets so each group gets a fitting contour.
    lnx = np.log(xv)
    bucket_ids = np.floor((lnx - lnx.min()) / 3.0).astype(int)
    result = np.empty_like(xv)
    worst_rel = 0.0
    rep_plan = None
    rep_size = -1
    for bid in np.unique(bucket_ids):
        mask = bucket_ids == bid
        xb = xv[mask]
        lnx_ref = float(np.mean(lnx[mask]))
        plan = _plan_terms(terms, tail_tol, lnx_ref)
        anchor, T = plan.anchors[0], plan.truncation[0]
        lnz_by_term = [np.log(t.argument_scale) + np.log(xb) for t in terms]
        prev = None
        rel = math.inf
        order = 8
        vals = None
        used_nodes = 0
        for _ in range(max_refinements + 1):
            vals = _batch_half_line(terms, anchor, T, xb, lnz_by_term, order)
            used_nodes = len(_panel_grid(T, 1.0, order)[0])
            if prev is not None:
                # both estimates below representable magnitude: the value is
                # zero at double precision, not a convergence failure
                under = (np.abs(vals) < 1e-280) & (np.abs(prev) < 1e-280)
                denom = np.maximum(np.abs(vals), 1e-300)
                rel = float(np.max(np.where(under, 0.0, np.abs(vals - prev) / denom)))
                if rel < tol:
                    vals = np.where(under, 0.0, vals)
                    break
            prev = vals
            order *= 2
        else:
            raise ConvergenceError(
                f"contour quadrature did not reach tol={tol:g} after {max_refinements} refinements",
                last_estimate=vals if vals.size > 1 else float(vals[0]),
                error_estimate=rel,
            )
        result[mask] = vals
        worst_rel = max(worst_rel, rel)
        if int(np.sum(mask)) > rep_size:
            rep_size = int(np.sum(mask))
            rep_plan = ContourPlan((anchor,), (T,), used_nodes, None)

    out = result if np.ndim(x) else float(result[0])
    if full_output:
        final = ContourPlan(rep_plan.anchors, rep_plan.truncation, rep_plan.nodes, worst_rel)
        return out, final
    return out


def eval_meijer_g(orders, a, b, x, **kwargs):
    """Evaluate the classical all-unit-scale case.

    ``orders = (m, n, p, q)``; ``a`` (length ``p``) supplies the upper
    parameters, the first ``n`` of them in the numerator; ``b`` (length ``q``)
    the lower parameters, the first ``m`` in the numerator.  Keyword arguments
    are forwarded to :func:`eval_fox_h`.
    """
    m, n, p, q = orders
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) != p or len(b) != q or not (0 <= n <= p) or not (0 <= m <= q):
        raise ValueError("inconsistent order tuple for the parameter lists")
    spec = FoxHSpec(
        numerator_lower=tuple(GammaFactor(v) for v in b[:m]),
        numerator_upper=tuple(GammaFactor(v) for v in a[:n]),
        denominator_lower=tuple(GammaFactor(v) for v in b[m:]),
        denominator_upper=tuple(GammaFactor(v) for v in a[n:]),
    )
    return eval_fox_h(spec, x, **kwargs)


# --------------------------------------------------------------------------- multivariate
@dataclass(frozen=True)
class OuterFactor:
    """Gamma factor of the joint contour variable.

    Contributes ``Gamma(1 - coefficient + sum_i weights[i]*s_i)`` raised to
    ``multiplicity``, in the numerator or denominator of the kernel.
    """

    coefficient: float
    weights: tuple[float, ...]
    numerator: bool = True
    multiplicity: int = 1

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be a positive integer")

    def log_value(self, s_list):
        arg = 1.0 - self.coefficient
        for w, s in zip(self.weights, s_list):
            arg = arg + w * s
        sign = 1.0 if self.numerator else -1.0
        return sign * self.multiplicity * special.loggamma(arg)


@dataclass(frozen=True)
class FoxHMultiSpec:
    """Kernel of an N-fold Mellin-Barnes integral.

    ``per_variable[i]`` is the mixture of :class:`FoxHSpec` terms attached to
    contour variable ``i`` (their ``argument_scale`` and positive
    ``leading_coefficient`` are per-term; offsets must be zero).
    ``arguments[i]`` is the common positive argument of variable ``i``, so a
    term's effective argument is ``argument_scale * arguments[i]``.
    ``outer_factors`` couple the variables.  The represented value is

        leading_coefficient * (1/2*pi*j)^N * int ... int
            prod_i [ sum_terms lead * Lambda_term(s_i) * (scale*x_i)^{s_i} ]
            * prod outer factors  ds_1 ... ds_N.
    """

    per_variable: tuple[tuple[FoxHSpec, ...], ...]
    outer_factors: tuple[OuterFactor, ...] = ()
    arguments: tuple[float, ...] = ()
    leading_coefficient: float = 1.0

    def __post_init__(self):
        pv = tuple(tuple(terms) for terms in self.per_variable)
        object.__setattr__(self, "per_variable", pv)
        object.__setattr__(self, "outer_factors", tuple(self.outer_factors))
        args = tuple(float(v) for v in (self.arguments or (1.0,) * len(pv)))
        object.__setattr__(self, "arguments", args)
        n = len(pv)
        if n == 0:
            raise ValueError("at least one contour variable is required")
        if len(args) != n:
            raise ValueError("arguments length must match the number of variables")
        if any(v <= 0 or not math.isfinite(v) for v in args):
            raise ValueError("arguments must be positive and finite")
        for terms in pv:
            if not terms:
                raise ValueError("every variable needs at least one kernel term")
            for t in terms:
                if t.argument_power_offset != 0.0:
                    raise ValueError("per-variable terms must have zero argument_power_offset")
                if t.leading_coefficient <= 0.0:
                    raise ValueError("per-variable term leadings must be positive")
        for f in self.outer_factors:
            if len(f.weights) != n:
                raise ValueError("outer factor weight vector length must equal the variable count")


def _axis_log_probe(mspec: FoxHMultiSpec, i: int, anchors: list[float]):
    """Probe function: max over mixture terms of Re log kernel along axis i,
    with the other variables pinned at their anchors inside the joint factors."""
    terms = mspec.per_variable[i]

    def fn(tau_grid):
        s = anchors[i] + 1j * np.asarray(tau_grid, float)
        best = np.full(s.shape, -np.inf)
        for t in terms:
            best = np.maximum(best, t.log_mellin(s).real)
        joint = np.zeros(s.shape)
        for f in mspec.outer_factors:
            s_list = [complex(anchors[j], 0.0) for j in range(len(anchors))]
            arg = 1.0 - f.coefficient + sum(
                f.weights[j] * s_list[j] for j in range(len(anchors)) if j != i
            ) + f.weights[i] * s
            sign = 1.0 if f.numerator else -1.0
            joint = joint + sign * f.multiplicity * special.loggamma(arg).real
        return best + joint

    return fn


def _probe_truncation(logabs_fn, tail_tol: float) -> float:
    ln_drop = max(_LN_TAIL, -math.log(max(tail_tol, 1e-300)))
    ref = float(np.max(logabs_fn(np.array([0.25, 0.5, 1.0, 2.0]))))
    T = 4.0
    while T <= _T_CAP:
        level = float(logabs_fn(np.array([T]))[0])
        if level + math.log1p(T) <= ref - ln_drop:
            return T
        T *= 1.6
    raise ConvergenceError(
        f"kernel failed to decay below the tail tolerance by Im s = {_T_CAP}"
    )


def _axis_kernel_log(terms, s, lnx):
    """Complex log of the per-axis mixture kernel at contour points ``s``."""
    rows = []
    for t in terms:
        lnz = math.log(t.argument_scale) + lnx
        rows.append(t.log_mellin(s) + s * lnz + math.log(t.leading_coefficient))
    if len(rows) == 1:
        return rows[0]
    stack = np.stack(rows)
    mx = np.max(stack.real, axis=0)
    return mx + np.log(np.sum(np.exp(stack - mx), axis=0))


def _multi_anchors(mspec: FoxHMultiSpec) -> list[float]:
    """Per-variable saddle anchors found by coordinate sweeps, keeping every
    joint numerator factor strictly inside its analyticity half-space."""
    n = len(mspec.per_variable)
    anchors = []
    for terms in mspec.per_variable:
        left, right = _strip_of(terms)
        if math.isfinite(left) and math.isfinite(right):
            anchors.append(0.5 * (left + right))
        elif math.isfinite(right):
            anchors.append(right - 1.0)
        elif math.isfinite(left):
            anchors.append(left + 1.0)
        else:
            anchors.append(0.0)

    lnxs = [math.log(a) for a in mspec.arguments]
    for _ in range(2):
        for i in range(n):

            def extra(c_arr, i=i):
                c = np.asarray(c_arr, float)
                total = np.zeros_like(c)
                for f in mspec.outer_factors:
                    arg = 1.0 - f.coefficient + f.weights[i] * c
                    for j in range(n):
                        if j != i:
                            arg = arg + f.weights[j] * anchors[j]
                    with np.errstate(all="ignore"):
                        lg = special.loggamma(arg.astype(complex)).real
                    if f.numerator:
                        # outside the analyticity half-space (or at a pole):
                        # forbid the anchor there
                        lg = np.where((arg > 1e-6) & np.isfinite(lg), lg, np.inf)
                        total = total + f.multiplicity * lg
                    else:
                        # a denominator pole is a kernel zero: neutral, never
                        # reward anchoring exactly on it
                        lg = np.where(np.isfinite(lg), lg, -1e9)
                        total = total - f.multiplicity * lg
                return total

            anchors[i] = _saddle_anchor(mspec.per_variable[i], lnxs[i], extra)
    for f in mspec.outer_factors:
        if f.numerator:
            arg = 1.0 - f.coefficient + sum(w * c for w, c in zip(f.weights, anchors))
            if arg <= 1e-9:
                raise ContourStripError(
                    "joint numerator factor has a non-positive argument at the anchor point"
                )
    return anchors


def _eval_multi_tensor(mspec: FoxHMultiSpec, tol, max_refinements, tail_tol, full_output):
    N = len(mspec.per_variable)
    anchors = _multi_anchors(mspec)
    Ts = [_probe_truncation(_axis_log_probe(mspec, i, anchors), tail_tol) for i in range(N)]
    lnxs = [math.log(a) for a in mspec.arguments]
    deltas = [min(t.delta() for t in terms) for terms in mspec.per_variable]
    omegas = []
    for i, terms in enumerate(mspec.per_variable):
        m = max(abs(math.log(t.argument_scale) + lnxs[i]) for t in terms)
        omegas.append(m + 0.5 * math.pi * deltas[i] + 1.0)

    prev = None
    rel = math.inf
    value = None
    order = 8
    nodes_used = 0
    for _ in range(max_refinements + 1):
        grids = []
        for i in range(N):
            tau, wts = _panel_grid(Ts[i], omegas[i], order)
            if i < N - 1:  # all but the last axis run over the full line
                tau = np.concatenate([-tau[::-1], tau])
                wts = np.concatenate([wts[::-1], wts])
            grids.append((anchors[i] + 1j * tau, wts))
        klogs = [
            _axis_kernel_log(mspec.per_variable[i], grids[i][0], lnxs[i]) for i in range(N)
        ]
        if N == 1:
            total = klogs[0]
            s_list = [grids[0][0]]
        else:
            s1 = grids[0][0][:, None]
            s2 = grids[1][0][None, :]
            total = klogs[0][:, None] + klogs[1][None, :]
            s_list = [s1, s2]
        for f in mspec.outer_factors:
            total = total + f.log_value(s_list)
        mx = float(np.max(total.real))
        lin = np.exp(total - mx)
        if N == 1:
            acc = float(lin.real @ grids[0][1])
        else:
            acc = float(grids[0][1] @ lin.real @ grids[1][1])
        # one axis is folded to a half line: factor 2 * Re
        value = mspec.leading_coefficient * 2.0 * acc * math.exp(mx) / (2.0 * math.pi) ** N
        nodes_used = sum(len(g[0]) for g in grids)
        if prev is not None:
            rel = abs(value - prev) / max(abs(value), 1e-300)
            if rel < tol:
                break
        prev = value
        order *= 2
    else:
        raise ConvergenceError(
            f"tensor contour quadrature did not reach tol={tol:g}",
            last_estimate=value,
            error_estimate=rel,
        )
    if full_output:
        return value, ContourPlan(tuple(anchors), tuple(Ts), nodes_used, rel)
    return value


def _eval_multi_qmc(mspec, tol, max_refinements, tail_tol, seed, replicates, exponent, full_output):
    N = len(mspec.per_variable)
    anchors = _multi_anchors(mspec)
    # net per-axis exponential decay rate, joint factors included
    lambdas = []
    for i, terms in enumerate(mspec.per_variable):
        eff = min(t.delta() for t in terms)
        for f in mspec.outer_factors:
            eff += (1.0 if f.numerator else -1.0) * f.multiplicity * abs(f.weights[i])
        if eff <= 0:
            raise ConvergenceError(f"axis {i} kernel does not decay (net rate {eff:g})")
        lambdas.append(0.55 * 0.5 * math.pi * eff)
    lnxs = [math.log(a) for a in mspec.arguments]

    value = None
    se = math.inf
    n_used = 0
    m = exponent
    for _ in range(max_refinements + 1):
        means = []
        for r in range(replicates):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(104729, r, m))
            sob = qmc.Sobol(d=N, scramble=True, seed=np.random.default_rng(ss))
            u = sob.random(2**m)
            logw = np.zeros(len(u))
            total = None
            s_list = []
            for i in range(N):
                ui = np.clip(u[:, i], 2**-40, 1 - 2**-40)
                half = 2.0 * np.abs(ui - 0.5)
                half = np.clip(half, 0.0, 1 - 2**-40)
                tau = -np.sign(ui - 0.5) * np.log1p(-half) / lambdas[i]
                s = anchors[i] + 1j * tau
                s_list.append(s)
                logw += lambdas[i] * np.abs(tau) + math.log(2.0 / lambdas[i])
                k = _axis_kernel_log(mspec.per_variable[i], s, lnxs[i])
                total = k if total is None else total + k
            for f in mspec.outer_factors:
                total = total + f.log_value(s_list)
            expo = total + logw
            mx = float(np.max(expo.real))
            vals = np.exp(expo - mx).real
            means.append(math.exp(mx) * float(np.mean(vals)))
        scale = mspec.leading_coefficient / (2.0 * math.pi) ** N
        reps = np.asarray(means) * scale
        value = float(np.mean(reps))
        se = float(np.std(reps, ddof=1) / math.sqrt(len(reps)))
        n_used = replicates * 2**m
        if se <= tol * max(abs(value), 1e-300) or not math.isfinite(se):
            break
        if m - exponent >= max_refinements:
            break
        m += 1
    if not math.isfinite(value):
        raise ConvergenceError("randomized contour estimate is not finite", last_estimate=value)
    if full_output:
        return value, ContourPlan(tuple(anchors), tuple(60.0 / l for l in lambdas), n_used, se)
    return value


def eval_fox_h_multi(
    mspec: FoxHMultiSpec,
    *,
    tol: float = 5e-7,
    max_refinements: int = 5,
    tail_tol: float = 1e-14,
    mode: str = "auto",
    seed: int = 0,
    qmc_replicates: int = 8,
    qmc_exponent: int = 12,
    full_output: bool = False,
):
    """Evaluate a multivariate Fox-H-type value.

    ``mode='auto'`` uses deterministic tensor-product quadrature for one or
    two contour variables and a randomized scrambled-net rule (with the
    standard error reported as the plan's ``error_estimate``) for three or
    more.  Requesting ``mode='tensor'`` with three or more variables raises
    :class:`UnsupportedModeError`.
    """
    N = len(mspec.per_variable)
    if mode not in ("auto", "tensor", "qmc"):
        raise UnsupportedModeError(f"unknown evaluation mode {mode!r}")
    if mode == "tensor" and N > 2:
        raise UnsupportedModeError(
            f"deterministic tensor quadrature supports at most 2 contour variables, got {N}"
        )
    use_tensor = (mode == "tensor") or (mode == "auto" and N <= 2)
    if use_tensor:
        return _eval_multi_tensor(mspec, tol, max_refinements, tail_tol, full_output)
    return _eval_multi_qmc(
        mspec, tol, max_refinements, tail_tol, seed, qmc_replicates, qmc_exponent, full_output
    )
