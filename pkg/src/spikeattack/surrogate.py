"""Surrogate spike derivatives and the gradient-vanishing functional.

A surrogate ``g`` is even, non-decreasing on the negative axis and has unit
mass.  ``G(x) = integral of g over [-x, x]`` measures how much of that mass
has been "used up" at distance ``x`` from threshold; a value near 1 means
the gradient there has effectively vanished.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .numerics import ContractError


class NumericError(RuntimeError):
    """Quadrature or another numeric routine failed to reach its tolerance."""


def _check_alpha(alpha):
    if np.any(np.asarray(alpha) <= 0):
        raise ContractError("sharpness alpha must be positive")


def atan_g(x, alpha):
    """Arctangent surrogate ``alpha / (2 (1 + (pi/2 alpha x)^2))``."""
    _check_alpha(alpha)
    z = (0.5 * math.pi) * alpha * x
    return alpha / (2.0 * (1.0 + z * z))


def atan_sigma(x, alpha):
    """Antiderivative of :func:`atan_g`: a smooth step rising from 0 to 1."""
    _check_alpha(alpha)
    return np.arctan((0.5 * math.pi) * alpha * x) / math.pi + 0.5


def triangle_g(x):
    """Training surrogate ``2 max(0, 1 - |x|)`` (peak 2, total mass 2)."""
    return 2.0 * np.maximum(0.0, 1.0 - np.abs(x))


def triangle_unit(x):
    """Unit-mass rescaling of :func:`triangle_g`, used for certification."""
    return 0.5 * triangle_g(x)


def vanish_degree(alpha, x):
    """Closed-form ``G`` for the arctangent surrogate."""
    _check_alpha(alpha)
    if np.any(np.asarray(x) < 0):
        raise ContractError("vanish_degree is defined on x >= 0")
    return (2.0 / math.pi) * np.arctan((0.5 * math.pi) * alpha * x)


def vanish_degree_numeric(g, x, tol=1e-8, breakpoints=(-1.0, 0.0, 1.0)):
    """``G(x)`` by adaptive quadrature of ``g`` over ``[-x, x]``.

    ``breakpoints`` lists kinks of ``g`` (the triangle has them at 0 and
    +-1); those inside the interval are handed to the integrator.
    """
    if x < 0:
        raise ContractError("vanish_degree_numeric is defined on x >= 0")
    if x == 0:
        return 0.0
    pts = [p for p in breakpoints if -x < p < x] or None
    val, err = integrate.quad(lambda t: float(g(t)), -x, x, points=pts,
                              epsabs=tol * 1e-2, epsrel=0.0, limit=200)
    if err > tol:
        raise NumericError(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return val


def total_mass(g, scale=1.0, breakpoints=(-1.0, 1.0)):
    """Integral of ``g`` over the whole real line.

    Uses ``x = tan(theta) / scale`` so the range becomes finite. With
    ``scale = pi alpha / 2`` the arctangent integrand turns constant and the
    integral is exact up to rounding.
    """
    def integrand(theta):
        c = math.cos(theta)
        if c == 0.0:
            return 0.0
        return float(g(math.tan(theta) / scale)) / (scale * c * c)

    pts = [math.atan(p * scale) for p in breakpoints] or None
    lim = 0.5 * math.pi
    val, _ = integrate.quad(integrand, -lim, lim, points=pts, epsabs=1e-12,
                            epsrel=1e-12, limit=400)
    return val


def alpha_bound(expected_abs, A):
    """Largest sharpness with expected vanishing degree at most ``A``."""
    if not 0.0 < A < 1.0:
        raise ContractError(f"A must lie in (0, 1), got {A}")
    if np.any(np.asarray(expected_abs) <= 0):
        raise ContractError("expected |x| must be positive")
    return (2.0 / (math.pi * expected_abs)) * math.tan(0.5 * math.pi * A)


@dataclass
class ValidationReport:
    family: str
    alpha: float
    evenness_err: float
    monotonicity_err: float
    integral_err: float
    tol: float = 1e-4

    @property
    def evenness_ok(self):
        return self.evenness_err <= self.tol

    @property
    def monotonicity_ok(self):
        return self.monotonicity_err <= self.tol

    @property
    def integral_ok(self):
        return self.integral_err <= self.tol

    @property
    def passed(self):
        return self.evenness_ok and self.monotonicity_ok and self.integral_ok

    def row(self):
        return [self.family, self.alpha, self.evenness_err,
                self.monotonicity_err, self.integral_err]


def validate_surrogate(g, grid, family="custom", alpha=float("nan"), scale=1.0,
                       breakpoints=(-1.0, 1.0), tol=1e-4):
    """Check evenness, negative-axis monotonicity and unit mass of ``g``."""
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if not np.allclose(grid, -grid[::-1], rtol=0.0, atol=1e-12):
        raise ContractError("grid must be symmetric about 0")
    vals = np.array([float(g(t)) for t in grid])
    mirrored = np.array([float(g(-t)) for t in grid])
    evenness = float(np.max(np.abs(vals - mirrored)))
    neg = vals[grid <= 0]
    drops = neg[:-1] - neg[1:]
    monotonicity = float(max(0.0, drops.max())) if drops.size else 0.0
    integral = abs(total_mass(g, scale=scale, breakpoints=breakpoints) - 1.0)
    return ValidationReport(family, alpha, evenness, monotonicity, integral, tol)


def certify_atan(alpha, n=2001, tol=1e-4):
    grid = np.linspace(-50.0 / alpha, 50.0 / alpha, n)
    return validate_surrogate(lambda t: atan_g(t, alpha), grid, "atan", alpha,
                              scale=0.5 * math.pi * alpha, breakpoints=(), tol=tol)


def certify_triangle(n=2001, tol=1e-4):
    grid = np.linspace(-50.0, 50.0, n)
    return validate_surrogate(triangle_unit, grid, "triangle", float("nan"),
                              scale=1.0, breakpoints=(-1.0, 0.0, 1.0), tol=tol)


def write_validation_csv(reports, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "alpha", "evenness_err", "monotonicity_err", "integral_err"])
        for r in reports:
            w.writerow(r.row())


def concavity_margin(alpha, grid, G=None):
    """Largest second difference of ``G`` on a uniform ascending grid.

    A concave ``G`` gives a margin <= 0 up to rounding.  ``G`` defaults to
    the closed-form arctangent vanishing degree at sharpness ``alpha``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 3:
        raise ContractError("concavity_margin needs at least 3 grid points")
    steps = np.diff(grid)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ContractError("grid must be uniform and ascending")
    if grid[0] < 0:
        raise ContractError("grid must be non-negative")
    vals = vanish_degree(alpha, grid) if G is None else np.asarray(G(grid), dtype=np.float64)
    second = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
    return float(second.max())


class SurrogateSpec:
    """Which surrogate the backward pass evaluates at the pre-activations.

    ``family`` is one of ``"atan"`` (fixed ``alpha``), ``"triangle"`` or
    ``"assg"`` (per-element sharpness held in ``state``).
    """

    FAMILIES = ("atan", "triangle", "assg")

    def __init__(self, family, alpha=None, state=None):
        if family not in self.FAMILIES:
            raise ContractError(f"unknown surrogate family {family!r}")
        if family == "atan":
            if alpha is None or alpha <= 0:
                raise ContractError("atan surrogate needs alpha > 0")
        if family == "assg" and state is None:
            raise ContractError("assg surrogate needs an AssgState")
        self.family = family
        self.alpha = alpha
        self.state = state

    @classmethod
    def atan(cls, alpha):
        return cls("atan", alpha=float(alpha))

    @classmethod
    def triangle(cls):
        return cls("triangle")

    @classmethod
    def assg(cls, state):
        return cls("assg", state=state)

    @property
    def adaptive(self):
        return self.family == "assg"

    def grad(self, layer, u):
        if self.family == "atan":
            return atan_g(u, self.alpha)
        if self.family == "triangle":
            return triangle_g(u)
        return self.state.grad(layer, u)

    def label(self):
        if self.family == "atan":
            return f"atan(alpha={self.alpha:g})"
        if self.family == "assg":
            p = self.state.params
            return f"assg(A={p.A:g},gamma={p.gamma:g})"
        return "triangle"

    def __repr__(self):
        return f"SurrogateSpec({self.label()})"
