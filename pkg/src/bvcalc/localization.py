"""Stationary-phase localization checks.

Ties together three desk-scale computations: the oscillatory Liouville
integral and its fixed-point sum (the two sides of the localization
identity for isolated nondegenerate fixed points), the exact vanishing
pattern of the tubular boundary series, and the effective-measure series
produced by perturbing a contraction with the BV Laplacian.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .algebra import GradedPolynomial
from .chart import Chart, bv_laplacian, poisson_bracket
from .hpt import Contraction, HPTError, NonTerminatingSeries
from .scalars import Scalar


class LocalizationError(ValueError):
    pass


class QuadratureError(LocalizationError):
    """Oscillation not resolved within the node budget."""


@dataclass
class FixedPoint:
    """Nondegenerate critical point data in local Darboux-like coordinates."""

    h_value: float
    hessian: list[list[float]]
    sqrt_det_omega: float = 1.0


@dataclass
class SymplecticModel:
    """Compact symplectic model: Liouville sampler plus fixed-point data."""

    m: int                               # half-dimension
    variables: list[str]
    ranges: list[tuple[float, float]]
    # sampler(mesh_dict, hbar) -> complex ndarray of exp(iH/hbar) * liouville
    sampler: Callable[[dict[str, np.ndarray], float], np.ndarray]
    fixed_points: list[FixedPoint]
    name: str = "model"
    phase_scale: float = 1.0             # |H| range, used to size the grid

    def __post_init__(self):
        if len(self.variables) != len(self.ranges):
            raise LocalizationError("one range per chart variable is required")
        if len(self.variables) != 2 * self.m:
            raise LocalizationError(
                f"chart must have 2m = {2 * self.m} variables")


def sphere_model() -> SymplecticModel:
    """Height function on the unit sphere: H = cos(theta), omega = sin dtheta dphi."""

    def sampler(mesh, hbar):
        theta = mesh["theta"]
        return np.exp(1j * np.cos(theta) / hbar) * np.sin(theta)

    north = FixedPoint(h_value=1.0, hessian=[[-1.0, 0.0], [0.0, -1.0]])
    south = FixedPoint(h_value=-1.0, hessian=[[1.0, 0.0], [0.0, 1.0]])
    return SymplecticModel(
        m=1, variables=["theta", "phi"],
        ranges=[(0.0, math.pi), (0.0, 2.0 * math.pi)],
        sampler=sampler, fixed_points=[north, south], name="s2",
        phase_scale=2.0)


def dh_lhs_numeric(model: SymplecticModel, hbar: float,
                   rel_tol: float = 1e-10, max_nodes: int = 4096
                   ) -> tuple[complex, float]:
    """Oscillatory Liouville integral by tensor Gauss-Legendre quadrature.

    The grid is refined until two successive node counts agree to rel_tol;
    failure to converge raises with the last error estimate.
    """
    if hbar <= 0:
        raise LocalizationError("hbar must be positive")
    periods = model.phase_scale / (2.0 * math.pi * hbar)
    nodes = max(32, int(20 * periods) + 1)

    def evaluate(nn: int) -> complex:
        axes = []
        weights = []
        for (a, b) in model.ranges:
            x, w = np.polynomial.legendre.leggauss(nn)
            axes.append(0.5 * (b - a) * x + 0.5 * (b + a))
            weights.append(0.5 * (b - a) * w)
        mesh_arrays = np.meshgrid(*axes, indexing="ij")
        mesh = {v: g for v, g in zip(model.variables, mesh_arrays)}
        wmesh = np.meshgrid(*weights, indexing="ij")
        wtot = np.ones_like(wmesh[0])
        for w in wmesh:
            wtot = wtot * w
        return complex(np.sum(model.sampler(mesh, hbar) * wtot))

    prev = evaluate(nodes)
    while True:
        nodes *= 2
        cur = evaluate(nodes)
        err = abs(cur - prev)
        scale = max(abs(cur), 1e-300)
        if err <= rel_tol * scale:
            return cur, err
        if nodes > max_nodes:
            raise QuadratureError(
                f"quadrature did not resolve the oscillation "
                f"(error estimate {err:.3e} at {nodes} nodes)")
        prev = cur


def dh_fixed_point_sum(model: SymplecticModel, hbar: float) -> complex:
    """Stationary-phase sum over nondegenerate fixed points.

    Each point contributes (2 pi hbar)^m e^{iH/hbar} e^{i pi sigma/4}
    sqrt(det omega)/sqrt|det H''|, with sigma the Hessian signature; the
    signature phase is the branch convention that matches the oscillatory
    integral.
    """
    if hbar <= 0:
        raise LocalizationError("hbar must be positive")
    total = 0j
    for fp in model.fixed_points:
        hess = np.array(fp.hessian, dtype=float)
        eigs = np.linalg.eigvalsh(hess)
        if np.any(np.abs(eigs) < 1e-12):
            raise LocalizationError("degenerate Hessian at a fixed point")
        sigma = int(np.sum(eigs > 0) - np.sum(eigs < 0))
        det = float(np.prod(eigs))
        total += ((2.0 * math.pi * hbar) ** model.m
                  * cmath.exp(1j * fp.h_value / hbar)
                  * cmath.exp(1j * math.pi * sigma / 4)
                  * fp.sqrt_det_omega / math.sqrt(abs(det)))
    return total


# ---------------------------------------------------------------------------
# tubular boundary series


@dataclass
class TubularTerm:
    """One hbar-order of the boundary integral around a critical point."""

    order: int                    # hbar power n
    eps_power: int                # boundary radius exponent before the limit
    radial_factor: Fraction       # product (2m-2)(2m-4)...(2m-2(n-1))
    volume_factor: Fraction       # Vol(S^{2m-1}) / (2 pi)^m
    coefficient: Fraction         # limit coefficient, normalized by (-2 pi i hbar)^m

    def vanishes(self) -> bool:
        return self.coefficient == 0


def tubular_series(m: int, orders: list[int] | range) -> list[TubularTerm]:
    """Exact hbar-coefficients of the shrinking tubular boundary integral.

    For the local model H = H(p) + r^2/2 the order-n term carries
    eps^{2(m-n)} and the radial factor (2m-2)(2m-4)...(2m-2(n-1)); in the
    limit the only survivor is n = m, whose coefficient against the
    (-2 pi i hbar)^m-normalized closed form is exactly 1.
    """
    if m < 1:
        raise LocalizationError("half-dimension m must be >= 1")
    sphere = Fraction(1)
    for k in range(1, m):
        sphere /= (2 * k)  # Vol(S^{2m-1}) = (2 pi)^m / (2*4*...*(2m-2))
    out = []
    for n in orders:
        if n < 0:
            raise LocalizationError("orders must be nonnegative")
        radial = Fraction(1)
        for k in range(1, n):
            radial *= (2 * m - 2 * k)
        eps_power = 2 * (m - n)
        if eps_power > 0 or radial == 0:
            coeff = Fraction(0)
        else:
            # eps_power == 0 exactly at n = m (radial == 0 kills n > m)
            coeff = radial * sphere
        out.append(TubularTerm(n, eps_power, radial, sphere, coeff))
    return out


# ---------------------------------------------------------------------------
# effective measure on the shell


@dataclass
class EffectiveMeasure:
    """The transferred unit ~iota ~p (1) with its exact consistency data."""

    series: GradedPolynomial          # full hbar-graded polynomial
    h_tilde_one: GradedPolynomial     # (-i hbar) sum (h delta)^n h (1)
    orders: int

    def coefficient(self, hbar_order: int) -> GradedPolynomial:
        sig = self.series.signature
        terms = {}
        for mono, c in self.series.terms.items():
            re, im = c.coefficient(hbar_order)
            if re or im:
                terms[mono] = Scalar.from_rational(re, im, hbar_power=hbar_order)
        return GradedPolynomial(sig, terms)


def effective_measure_series(s0: GradedPolynomial, chart: Chart,
                             c: Contraction, order: int) -> EffectiveMeasure:
    """Transfer of the unit along the -i*hbar*Delta perturbation of {S0,.}.

    Computes ~iota ~p (1) as an hbar-series supported on the shell sector
    and the homotopy witness h~(1) obeying, exactly,

        ~iota ~p (1) - 1 = (i/hbar) delta_BV h~(1),

    with delta_BV = {S0,.} - i*hbar*Delta.  Raises when the series has not
    terminated at the requested order.
    """
    sig = chart.signature
    one = GradedPolynomial.constant(sig, 1)
    minus_ihbar = Scalar.from_rational(0, -1) * Scalar.hbar()

    def delta(f: GradedPolynomial) -> GradedPolynomial:
        return bv_laplacian(f, chart) * minus_ihbar

    # p~(1) = sum p (delta h)^n (1)
    p_total = c.apply_p(one)
    g = one
    for n in range(1, order + 1):
        g = delta(c.apply_h(g))
        if g.is_zero():
            break
        p_total = p_total + c.apply_p(g)
    else:
        if not delta(c.apply_h(g)).is_zero():
            raise NonTerminatingSeries(order, g.abs_norm())

    # ~iota(p~1) = sum (h delta)^n iota(p~1)
    base = c.apply_iota(p_total)
    series = base
    g = base
    for n in range(1, order + 1):
        g = c.apply_h(delta(g))
        if g.is_zero():
            break
        series = series + g
    else:
        if not c.apply_h(delta(g)).is_zero():
            raise NonTerminatingSeries(order, g.abs_norm())

    # h~(1) = sum (h delta)^n h(1), scaled by -i*hbar so the stated
    # (i/hbar)-normalized identity holds verbatim
    h_total = c.apply_h(one)
    g = h_total
    for n in range(1, order + 1):
        if g.is_zero():
            break
        g = c.apply_h(delta(g))
        h_total = h_total + g
    h_tilde = h_total * minus_ihbar
    return EffectiveMeasure(series, h_tilde, order)


def effective_measure_identity(s0: GradedPolynomial, chart: Chart,
                               measure: EffectiveMeasure) -> GradedPolynomial:
    """Exact residual of  ~iota ~p(1) - 1 - (i/hbar) delta_BV h~(1)."""
    sig = chart.signature
    one = GradedPolynomial.constant(sig, 1)
    ihbar = Scalar.i() * Scalar.hbar()
    dbv = poisson_bracket(s0, measure.h_tilde_one, chart) \
        - ihbar * bv_laplacian(measure.h_tilde_one, chart)
    i_over_h = Scalar.i() * Scalar.hbar(-1)
    return measure.series - one - i_over_h * dbv
