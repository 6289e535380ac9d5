"""Viscoelastic fluid parameter maps and desk-scale model spectra.

Linearized Oldroyd-B and Jeffreys flows reduce, after eliminating the
stress, to the abstract memory equation this package treats: a
diffusion generator scaled by an effective viscosity plus an
exponential convolution kernel.  The maps here produce those abstract
inputs; Dirichlet Laplacian spectra on the interval and the square
stand in for Stokes eigenvalues at desk scale (genuine eigenvalues can
always be fed in as a user spectrum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NonpositiveAmplitudeError
from .simulate import ForcingField
from .spectral import MemoryKernel, Spectrum, SpectrumEntry
from .synthesis import ActuatorSet

PI_SQ = math.pi * math.pi


@dataclass(frozen=True)
class OldroydParams:
    """Oldroyd-B material constants.

    ``nu`` is the kinematic viscosity, ``kappa`` the elastic modulus
    parameter and ``lambda_relax`` the relaxation time.  Validity needs
    nu > kappa / lambda_relax, otherwise the memory amplitude would not
    be positive.
    """

    nu: float
    kappa: float
    lambda_relax: float

    def __post_init__(self):
        for name in ("nu", "kappa", "lambda_relax"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"Oldroyd parameter {name} must be positive")


@dataclass(frozen=True, eq=False)
class JeffreysParams:
    """Jeffreys model constants plus the initial-stress footprint.

    ``tau0`` holds per-mode coefficients of the divergence of the
    initial stress; it becomes a decaying forcing term after the stress
    is eliminated.
    """

    mu_visc: float
    kappa: float
    lambda_relax: float
    tau0: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("mu_visc", "kappa", "lambda_relax"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(
                    f"Jeffreys parameter {name} must be positive")
        object.__setattr__(self, "tau0",
                           np.asarray(self.tau0, dtype=float).reshape(-1))


def oldroyd_to_abstract(params: OldroydParams) -> tuple:
    """Effective viscosity and memory kernel of an Oldroyd-B flow.

    Returns (mu, kernel) with mu = 2 kappa / lambda scaling the
    diffusion generator, amplitude b = nu/kappa - 1/lambda and decay
    delta = 1/lambda.  The reachable rate ceiling is then
    b + delta = nu/kappa.
    """
    lam = params.lambda_relax
    mu = 2.0 * params.kappa / lam
    b = params.nu / params.kappa - 1.0 / lam
    if b <= 0.0:
        raise NonpositiveAmplitudeError(
            f"nu={params.nu:g} must exceed kappa/lambda_relax="
            f"{params.kappa / lam:g} for a positive memory amplitude")
    return mu, MemoryKernel(b=b, delta=1.0 / lam)


def jeffreys_reduce(params: JeffreysParams) -> tuple:
    """Kernel and stress-induced forcing of a Jeffreys flow.

    Eliminating the stress leaves amplitude b = kappa / mu_visc, decay
    delta = lambda_relax, and the modal forcing
    f_n(t) = e^{-lambda_relax t} (div tau0)_n with zero limit.
    """
    kernel = MemoryKernel(b=params.kappa / params.mu_visc,
                          delta=params.lambda_relax)
    forcing = ForcingField.exponential(params.tau0, params.lambda_relax)
    return kernel, forcing


def square_levels(n_modes: int) -> list:
    """Distinct values of j^2 + k^2 (j, k >= 1) with their ordered pairs.

    Whole levels are returned, in increasing order, until their
    multiplicities sum to at least ``n_modes``.
    """
    if n_modes < 1:
        raise ConfigError("n_modes must be at least 1")
    bound = max(4, int(math.isqrt(2 * n_modes)) + 2)
    while True:
        by_sum = {}
        # sums <= bound^2 + 1 are complete once j, k run through 1..bound
        cutoff = bound * bound + 1
        for j in range(1, bound + 1):
            for k in range(1, bound + 1):
                s = j * j + k * k
                if s <= cutoff:
                    by_sum.setdefault(s, []).append((j, k))
        levels = []
        count = 0
        for s in sorted(by_sum):
            levels.append((s, tuple(sorted(by_sum[s]))))
            count += len(by_sum[s])
            if count >= n_modes:
                return levels
        bound *= 2


def model_spectrum(kind: str, scale: float, n_modes: int, *,
                   values=None, multiplicities=None,
                   labels=None) -> Spectrum:
    """Ready-made or user-supplied spectrum.

    ``dirichlet_1d`` yields scale * j^2 pi^2 with multiplicity one;
    ``square_2d`` yields scale * (j^2 + k^2) pi^2 with multiplicities
    from coinciding integer sums, keeping whole levels so ``n_modes``
    counts modes with multiplicity; ``user`` normalizes the given
    values (scaled, sorted, equal ones merged).
    """
    if kind != "user":
        if n_modes < 1:
            raise ConfigError("n_modes must be at least 1")
        if not scale > 0.0:
            raise ConfigError("spectrum scale must be positive")
    if kind == "dirichlet_1d":
        entries = tuple(
            SpectrumEntry(lam=scale * j * j * PI_SQ, multiplicity=1,
                          label=f"sin(j={j})")
            for j in range(1, n_modes + 1))
        return Spectrum(entries=entries)
    if kind == "square_2d":
        entries = []
        for s, pairs in square_levels(n_modes):
            label = "+".join(f"({j},{k})" for j, k in pairs)
            entries.append(SpectrumEntry(lam=scale * s * PI_SQ,
                                         multiplicity=len(pairs),
                                         label=label))
        return Spectrum(entries=tuple(entries))
    if kind == "user":
        if values is None:
            raise ConfigError("user spectrum requires explicit values")
        vals = [float(v) * scale for v in values]
        try:
            return Spectrum.from_values(vals, multiplicities, labels)
        except ValueError as exc:
            raise ConfigError(f"invalid user spectrum: {exc}") from exc
    raise ConfigError(f"unknown spectrum kind '{kind}'")


def square_mode_pairs(n_modes: int) -> list:
    """Ordered (j, k) pairs aligned with the expanded square_2d modes."""
    pairs = []
    for _, level_pairs in square_levels(n_modes):
        pairs.extend(level_pairs)
    return pairs


def _sine_indicator_integral(j: int, a: float, c: float) -> float:
    # integral of sqrt(2) sin(j pi x) over (a, c)
    return math.sqrt(2.0) * (math.cos(j * math.pi * a)
                             - math.cos(j * math.pi * c)) / (j * math.pi)


def indicator_actuators_1d(intervals, n_modes: int) -> ActuatorSet:
    """Actuators supported on subintervals of (0, 1).

    Column i holds the projections of the indicator of interval i on
    the first ``n_modes`` Dirichlet sine eigenfunctions, by closed-form
    integrals.
    """
    intervals = [tuple(map(float, iv)) for iv in intervals]
    for a, c in intervals:
        if not 0.0 <= a < c <= 1.0:
            raise ConfigError(
                f"interval ({a:g}, {c:g}) must satisfy 0 <= a < c <= 1")
    coeffs = np.array([[_sine_indicator_integral(j, a, c)
                        for (a, c) in intervals]
                       for j in range(1, n_modes + 1)])
    return ActuatorSet(count=len(intervals), modal_coefficients=coeffs,
                       description="1d indicator supports")


def indicator_actuators_2d(rectangles, n_modes: int) -> ActuatorSet:
    """Actuators supported on axis-aligned rectangles of the unit square.

    Projections on the tensor sine basis factor into two closed-form
    1D integrals; rows follow the square_2d mode ordering.
    """
    rects = [tuple(map(float, r)) for r in rectangles]
    for a, c, d, e in rects:
        if not (0.0 <= a < c <= 1.0 and 0.0 <= d < e <= 1.0):
            raise ConfigError(
                f"rectangle ({a:g},{c:g})x({d:g},{e:g}) must sit inside "
                "the unit square")
    pairs = square_mode_pairs(n_modes)
    coeffs = np.array([[_sine_indicator_integral(j, a, c)
                        * _sine_indicator_integral(k, d, e)
                        for (a, c, d, e) in rects]
                       for (j, k) in pairs])
    return ActuatorSet(count=len(rects), modal_coefficients=coeffs,
                       description="2d indicator supports")
