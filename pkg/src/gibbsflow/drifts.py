"""Drift families, discretized stochastic integrals and their time reversals.

Three drift families are supported: Markovian (reads the current state of
a finite neighborhood), long-memory (self-interaction integrated against
a memory kernel) and space-time kernel (neighborhood increments integrated
against a deterministic bounded-variation integrator).  All evaluations
are adapted: step j reads path values at grid times <= s_j only, and only
sites in the translated neighborhood.

The canonical reversed exponent is the forward Girsanov exponent applied
to the grid-reversed path; the explicit closed forms implemented here are
oracles validating that choice for the families where they exist.

Evaluation operates on value arrays of shape (..., M+1, n_sites) so the
same code path serves single paths and Monte Carlo batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalGuardError
from .lattice import Configuration, Site, shift_site
from .mc import RunningMoments, chunk_sizes
from .paths import GridPath, SeedStream, TimeGrid, brownian_batch, reverse_values

_EXP_GUARD = 700.0


def _origin(dim: int) -> Site:
    return (0,) * dim


def _sorted_offsets(offsets) -> tuple[Site, ...]:
    out = tuple(sorted(tuple(o) for o in offsets))
    if not out:
        raise ValueError("neighborhood must be nonempty")
    dim = len(out[0])
    if _origin(dim) not in out:
        raise ValueError("neighborhood must contain the origin")
    return out


@dataclass(frozen=True)
class MarkovianDrift:
    """State drift b(t, x_N) with explicit global bounds.

    b0 and b0_prime take (t, v) where v has the neighborhood values along
    the last axis (offsets in sorted order) and must broadcast over
    leading axes.  Evaluations are clipped to [-bound, bound]; the
    supplied derivative (w.r.t. the origin coordinate) is zeroed where
    the clip is active, so it is the a.e. derivative of the clipped drift.
    """

    neighborhood: tuple[Site, ...]
    b0: Callable = field(repr=False)
    bound: float = 1.0
    b0_prime: Callable | None = field(default=None, repr=False)
    bound_prime: float | None = None
    lipschitz: float | None = None

    family = "markovian"

    def __post_init__(self):
        object.__setattr__(self, "neighborhood", _sorted_offsets(self.neighborhood))
        if not math.isfinite(self.bound) or self.bound < 0:
            raise ValueError("Markovian drift needs a finite nonnegative bound")

    def _clipped(self, t, v):
        return np.clip(self.b0(t, v), -self.bound, self.bound)

    def _clipped_prime(self, t, v):
        if self.b0_prime is None:
            raise ValueError("b0_prime not supplied for this drift")
        raw = np.asarray(self.b0(t, v), dtype=float)
        prime = np.asarray(self.b0_prime(t, v), dtype=float)
        prime = np.where(np.abs(raw) >= self.bound, 0.0, prime)
        if self.bound_prime is not None:
            prime = np.clip(prime, -self.bound_prime, self.bound_prime)
        return prime

    def step_values(self, j: int, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        return self._clipped(j * grid.delta, values[..., j, :][..., cols])

    def profile(self, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        times = grid.times()[: grid.steps]
        v = values[..., : grid.steps, :][..., cols]
        return self._clipped(times, v)

    def reflected_profile(self, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        """b(horizon - s_j, X(s_j)) at every grid point j = 0..M."""
        times = grid.horizon - grid.times()
        return self._clipped(times, values[..., cols])

    def reflected_prime_profile(self, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        times = grid.horizon - grid.times()[: grid.steps]
        v = values[..., : grid.steps, :][..., cols]
        return self._clipped_prime(times, v)


@dataclass(frozen=True)
class LongMemoryDrift:
    """Self-interaction drift integrating the site's own past increments.

    b_i(t, w) = integral over [0, t] of memory(s) (w_i(s) - w_i(0)) ds,
    discretized as the left Riemann sum.  The k = 0 cell contributes
    exactly 0 (the increment vanishes identically), which also makes
    kernels with an integrable singularity at 0 safe to evaluate.
    """

    memory: Callable = field(repr=False)
    memory_primitive: Callable = field(repr=False)
    dim: int = 1
    lipschitz: float | None = None

    family = "long_memory"

    @property
    def neighborhood(self) -> tuple[Site, ...]:
        return (_origin(self.dim),)

    def _weights(self, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        # w_k = memory(s_k) (X(s_k) - X(0)), k = 0..M-1, with w_0 = 0.
        x = values[..., : grid.steps, :][..., cols[0]]
        w = np.zeros_like(x)
        if grid.steps > 1:
            times = grid.times()[1 : grid.steps]
            w[..., 1:] = self.memory(times) * (x[..., 1:] - x[..., :1])
        return w

    def step_values(self, j: int, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        base = values[..., 0, :][..., cols[0]]
        if j <= 1:
            return np.zeros_like(base)
        total = np.zeros_like(base)
        for k in range(1, j):
            total = total + self.memory(k * grid.delta) * (
                values[..., k, :][..., cols[0]] - base
            )
        return total * grid.delta

    def profile(self, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        w = self._weights(grid, values, cols)
        out = np.zeros_like(w)
        if grid.steps > 1:
            out[..., 1:] = np.cumsum(w, axis=-1)[..., :-1] * grid.delta
        return out


@dataclass(frozen=True)
class BoundedVariationIntegrator:
    """Deterministic right-continuous BV integrator: density part + jumps.

    jumps is a tuple of (time, size) pairs; jump times are snapped down to
    the nearest grid point when integrated, and a jump at time tau enters
    the integral over [0, s_j] iff tau <= s_j.
    """

    density: Callable | None = field(default=None, repr=False)
    jumps: tuple[tuple[float, float], ...] = ()

    def total_variation(self, horizon: float) -> float:
        tv = sum(abs(c) for tau, c in self.jumps if tau <= horizon)
        if self.density is not None:
            s = np.linspace(0.0, horizon, 257)
            tv += float(np.trapezoid(np.abs(self.density(s)), s))
        return tv

    @staticmethod
    def lebesgue() -> "BoundedVariationIntegrator":
        return BoundedVariationIntegrator(density=lambda s: np.ones_like(np.asarray(s, dtype=float)))

    @staticmethod
    def two_jump(
        jumps: tuple[tuple[float, float], ...] = ((0.01, 0.5), (0.03, 0.5))
    ) -> "BoundedVariationIntegrator":
        return BoundedVariationIntegrator(density=None, jumps=jumps)


@dataclass(frozen=True)
class SpaceTimeKernelDrift:
    """Drift integrating a lag kernel of neighborhood increments against dV.

    b_i(t, w) = integral over [0, t] of alpha0(t - s, (w(s) - w(0))_{N+i})
    dV(s), discretized as a Riemann-Stieltjes sum on the grid: left-point
    cells against the density part plus the snapped jump part.  alpha0
    takes (lag, increments) with increments along the last axis and must
    broadcast.
    """

    neighborhood: tuple[Site, ...]
    alpha0: Callable = field(repr=False)
    integrator: BoundedVariationIntegrator = field(
        default_factory=BoundedVariationIntegrator.lebesgue
    )
    lipschitz: float | None = None

    family = "space_time_kernel"

    def __post_init__(self):
        object.__setattr__(self, "neighborhood", _sorted_offsets(self.neighborhood))

    def step_values(self, j: int, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        base = values[..., 0, :][..., cols]
        out = np.zeros(values.shape[:-2])
        s_j = j * grid.delta
        if self.integrator.density is not None and j > 0:
            times = grid.times()[:j]
            incr = values[..., :j, :][..., cols] - base[..., None, :]
            contrib = self.alpha0(s_j - times, incr) * self.integrator.density(times)
            out = out + contrib.sum(axis=-1) * grid.delta
        for tau, size in self.integrator.jumps:
            if tau <= s_j + 1e-12 * grid.delta:
                k = min(int(tau / grid.delta), j)
                incr_k = values[..., k, :][..., cols] - base
                out = out + size * self.alpha0(s_j - k * grid.delta, incr_k)
        return out

    def profile(self, grid: TimeGrid, values: np.ndarray, cols) -> np.ndarray:
        shape = values.shape[:-2] + (grid.steps,)
        out = np.empty(shape)
        for j in range(grid.steps):
            out[..., j] = self.step_values(j, grid, values, cols)
        return out


DriftSpec = MarkovianDrift | LongMemoryDrift | SpaceTimeKernelDrift


# ---------------------------------------------------------------------------
# Stock families (selectable by name in the experiment config).


def zero_drift(dim: int = 1) -> MarkovianDrift:
    return MarkovianDrift(
        neighborhood=(_origin(dim),),
        b0=lambda t, v: np.zeros(np.asarray(v).shape[:-1]),
        bound=0.0,
        b0_prime=lambda t, v: np.zeros(np.asarray(v).shape[:-1]),
        bound_prime=0.0,
        lipschitz=0.0,
    )


def ball_offsets(radius: int, dim: int = 1) -> tuple[Site, ...]:
    """Sup-metric ball of offsets around the origin (a connected set)."""
    import itertools

    return tuple(sorted(itertools.product(range(-radius, radius + 1), repeat=dim)))


def markovian_tanh(strength: float = 0.5, radius: int = 1, dim: int = 1) -> MarkovianDrift:
    """b = strength * tanh(sum of neighborhood values)."""
    beta = float(strength)
    n = ball_offsets(radius, dim)

    def b0(t, v):
        return beta * np.tanh(np.asarray(v).sum(axis=-1))

    def b0_prime(t, v):
        s = np.asarray(v).sum(axis=-1)
        return beta / np.cosh(s) ** 2

    return MarkovianDrift(
        neighborhood=n,
        b0=b0,
        bound=abs(beta),
        b0_prime=b0_prime,
        bound_prime=abs(beta),
        lipschitz=abs(beta) * len(n),
    )


def markovian_linear(coefficient: float = -1.0, bound: float = 6.0, dim: int = 1) -> MarkovianDrift:
    """b = coefficient * x at the site itself, clipped to [-bound, bound]."""
    c = float(coefficient)
    origin = _origin(dim)

    def b0(t, v):
        return c * np.asarray(v)[..., 0]

    def b0_prime(t, v):
        return np.full(np.asarray(v).shape[:-1], c)

    return MarkovianDrift(
        neighborhood=(origin,),
        b0=b0,
        bound=float(bound),
        b0_prime=b0_prime,
        bound_prime=abs(c),
        lipschitz=abs(c),
    )


def markovian_constant(level: float, dim: int = 1) -> MarkovianDrift:
    c = float(level)
    return MarkovianDrift(
        neighborhood=(_origin(dim),),
        b0=lambda t, v: np.full(np.asarray(v).shape[:-1], c),
        bound=abs(c),
        b0_prime=lambda t, v: np.zeros(np.asarray(v).shape[:-1]),
        bound_prime=0.0,
        lipschitz=0.0,
    )


def long_memory_power(eps0: float = 0.5, exponent: float = -0.25, dim: int = 1) -> LongMemoryDrift:
    """Memory kernel eps0 * s^exponent, integrable at 0 for exponent > -1."""
    if exponent <= -1.0:
        raise ValueError("memory kernel must be locally integrable")
    e0, e = float(eps0), float(exponent)
    return LongMemoryDrift(
        memory=lambda s: e0 * np.asarray(s, dtype=float) ** e,
        memory_primitive=lambda t: e0 * t ** (e + 1.0) / (e + 1.0),
        dim=dim,
        lipschitz=None,
    )


def long_memory_constant(eps0: float = 0.5, dim: int = 1) -> LongMemoryDrift:
    e0 = float(eps0)
    return LongMemoryDrift(
        memory=lambda s: np.full(np.shape(s) or (), e0),
        memory_primitive=lambda t: e0 * t,
        dim=dim,
        lipschitz=None,
    )


def space_time_tanh(
    strength: float = 0.5,
    radius: int = 1,
    dim: int = 1,
    integrator: BoundedVariationIntegrator | None = None,
) -> SpaceTimeKernelDrift:
    """alpha0(lag, y) = strength * exp(-lag) * tanh(mean of y)."""
    a0 = float(strength)
    n = ball_offsets(radius, dim)

    def alpha0(lag, incr):
        return a0 * np.exp(-np.asarray(lag, dtype=float)) * np.tanh(
            np.asarray(incr).mean(axis=-1)
        )

    return SpaceTimeKernelDrift(
        neighborhood=n,
        alpha0=alpha0,
        integrator=integrator or BoundedVariationIntegrator.lebesgue(),
        lipschitz=None,
    )


# ---------------------------------------------------------------------------
# Path functionals.


def neighborhood_sites(spec: DriftSpec, i: Site) -> list[Site]:
    return [shift_site(i, off) for off in spec.neighborhood]


def _site_cols(sites: Sequence[Site], spec: DriftSpec, i: Site) -> np.ndarray:
    cols = []
    for s in neighborhood_sites(spec, i):
        try:
            cols.append(sites.index(s))
        except ValueError:
            raise KeyError(
                f"path is missing site {s} required by the drift neighborhood of {i}"
            ) from None
    return np.array(cols, dtype=int)


def eval_drift(spec: DriftSpec, i: Site, j: int, path: GridPath) -> float:
    """Drift of site i at step j, reading only times <= s_j and sites N+i."""
    if not 0 <= j <= path.grid.steps:
        raise ValueError(f"step index {j} outside the grid")
    cols = _site_cols(list(path.sites), spec, i)
    return float(spec.step_values(j, path.grid, path.values, cols))


def drift_profile(spec: DriftSpec, i: Site, path: GridPath) -> np.ndarray:
    """Drift at steps 0..M-1 (the left points of every Ito cell)."""
    cols = _site_cols(list(path.sites), spec, i)
    return np.asarray(spec.profile(path.grid, path.values, cols), dtype=float)


@dataclass(frozen=True)
class GirsanovValue:
    """Assembled log change-of-measure contribution of one site."""

    site: Site
    ito_integral: float
    quad_term: float

    @property
    def value(self) -> float:
        return self.ito_integral - self.quad_term


def _girsanov_terms(
    spec: DriftSpec, grid: TimeGrid, values: np.ndarray, cols: np.ndarray, center: int
):
    """(Ito sum, half quadratic term) over the leading batch axes."""
    prof = spec.profile(grid, values, cols)
    x = values[..., center]
    dx = x[..., 1:] - x[..., :-1]
    ito = (prof * dx).sum(axis=-1)
    quad = 0.5 * (prof * prof).sum(axis=-1) * grid.delta
    return ito, quad


def _center_index(spec: DriftSpec) -> int:
    dim = len(spec.neighborhood[0])
    return spec.neighborhood.index(_origin(dim))


def ito_integral(spec: DriftSpec, i: Site, path: GridPath) -> float:
    """Left-point Ito sum of the drift against the site's own increments."""
    cols = _site_cols(list(path.sites), spec, i)
    ito, _ = _girsanov_terms(spec, path.grid, path.values, cols, cols[_center_index(spec)])
    return float(ito)


def girsanov_exponent(spec: DriftSpec, i: Site, path: GridPath) -> GirsanovValue:
    """Ito sum minus half the discretized quadratic term for site i."""
    cols = _site_cols(list(path.sites), spec, i)
    ito, quad = _girsanov_terms(
        spec, path.grid, path.values, cols, cols[_center_index(spec)]
    )
    return GirsanovValue(site=i, ito_integral=float(ito), quad_term=float(quad))


def reversed_girsanov_exponent(spec: DriftSpec, i: Site, path: GridPath) -> float:
    """Forward exponent evaluated on the grid-reversed path.

    This is the canonical reversed functional entering the polymer
    exponents and the density-ratio functional; the closed forms below
    validate it for the families where they are available.
    """
    cols = _site_cols(list(path.sites), spec, i)
    ito, quad = _girsanov_terms(
        spec,
        path.grid,
        reverse_values(path.values),
        cols,
        cols[_center_index(spec)],
    )
    return float(ito - quad)


def reversed_exponent_batch(
    spec: DriftSpec, i: Site, grid: TimeGrid, values: np.ndarray, sites: Sequence[Site]
) -> np.ndarray:
    """Batch version of reversed_girsanov_exponent over leading axes."""
    cols = _site_cols(list(sites), spec, i)
    ito, quad = _girsanov_terms(
        spec, grid, reverse_values(values), cols, cols[_center_index(spec)]
    )
    return ito - quad


def _markov_reflected(spec: MarkovianDrift, i: Site, path: GridPath):
    if spec.family != "markovian":
        raise ValueError(f"closed form requires the Markovian family, got {spec.family}")
    cols = _site_cols(list(path.sites), spec, i)
    rb = spec.reflected_profile(path.grid, path.values, cols)
    x = path.values[..., cols[_center_index(spec)]]
    dx = x[..., 1:] - x[..., :-1]
    return cols, rb, dx


def time_reflected_ito(spec: MarkovianDrift, i: Site, path: GridPath) -> float:
    """Left-point Ito sum of b(horizon - s, X(s)) against dX on the forward path."""
    _, rb, dx = _markov_reflected(spec, i, path)
    return float((rb[..., : path.grid.steps] * dx).sum(axis=-1))


def time_reflected_stratonovich(spec: MarkovianDrift, i: Site, path: GridPath) -> float:
    """Average-endpoint (midpoint-rule) sum of the same reflected integrand."""
    _, rb, dx = _markov_reflected(spec, i, path)
    mid = 0.5 * (rb[..., : path.grid.steps] + rb[..., 1:])
    return float((mid * dx).sum(axis=-1))


def markov_reversed_closed_form(spec: MarkovianDrift, i: Site, path: GridPath) -> float:
    """Explicit reversed exponent for the Markovian family.

    Left-point discretization, on the forward path, of
    - int b(t-s, X(s)) dX(s) - int (b'(t-s, X(s)) + b(t-s, X(s))^2 / 2) ds,
    where b' is the derivative in the origin coordinate (the correction
    produced by turning the reversed Ito sum back into a forward one).
    """
    cols, rb, dx = _markov_reflected(spec, i, path)
    grid = path.grid
    prime = spec.reflected_prime_profile(grid, path.values, cols)
    ito_part = (rb[..., : grid.steps] * dx).sum(axis=-1)
    lebesgue_part = (
        (prime + 0.5 * rb[..., : grid.steps] ** 2).sum(axis=-1) * grid.delta
    )
    return float(-ito_part - lebesgue_part)


def long_memory_fubini_integral(spec: LongMemoryDrift, i: Site, path: GridPath) -> float:
    """Single-sum form of the long-memory Ito integral.

    Interchanging the order of summation in the double (drift x increment)
    sum collapses it to one sum over memory cells; the outer increment is
    then evaluated from the right endpoint of each cell, which is exactly
    what the finite-sum interchange produces, so this equals ito_integral
    for the long-memory family up to float re-summation.
    """
    if spec.family != "long_memory":
        raise ValueError(f"Fubini form requires the long-memory family, got {spec.family}")
    cols = _site_cols(list(path.sites), spec, i)
    grid = path.grid
    x = path.values[..., cols[0]]
    total = 0.0
    for k in range(1, grid.steps - 1):
        total += (
            float(spec.memory(k * grid.delta))
            * (x[k] - x[0])
            * (x[grid.steps] - x[k + 1])
        )
    return total * grid.delta


def reversed_moment_estimate(
    spec: DriftSpec,
    x: Configuration,
    t: float,
    steps: int,
    n_paths: int,
    p_exponent: int,
    stream: SeedStream,
    chunk: int = 16384,
) -> tuple[float, float]:
    """Monte Carlo moment of the reversed exponent at the origin.

    Estimates E[(exp|F_rev| - 1)^(2 p)] over Brownian paths on the
    origin's drift neighborhood started at x.  Used as the short-time
    decay diagnostic: the moment must vanish as t -> 0 for the expansion
    machinery to be applicable.
    """
    if p_exponent < 3 or p_exponent % 2 == 0:
        raise ValueError("moment exponent must be odd and >= 3")
    dim = len(spec.neighborhood[0])
    origin = _origin(dim)
    sites = sorted(neighborhood_sites(spec, origin))
    x0_row = np.array([x[s] for s in sites], dtype=float)
    grid = TimeGrid(t, steps)
    moments = RunningMoments()
    for c, size in enumerate(chunk_sizes(n_paths, chunk)):
        values = brownian_batch(x0_row, sites, grid, stream, size, chunk=c)
        f = reversed_exponent_batch(spec, origin, grid, values, sites)
        absf = np.abs(f)
        if np.any(absf > _EXP_GUARD):
            raise NumericalGuardError(
                "reversed exponent exceeded the overflow guard "
                f"(max |F| = {absf.max():.3g}); drift bounds likely violated"
            )
        moments.push_array(np.expm1(absf) ** (2 * p_exponent))
    return moments.mean, moments.std_error


def gaussian_abs_mgf(a: float) -> float:
    """E exp(a |Z|) for standard normal Z: 2 exp(a^2/2) Phi(a)."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    # 2 Phi(a) = erfc(-a / sqrt(2))
    return math.exp(0.5 * a * a) * math.erfc(-a / math.sqrt(2.0))


def long_memory_moment_envelope(spec: LongMemoryDrift, p_prime: float) -> float | None:
    """Maximal-inequality envelope for the long-memory moment diagnostic.

    Returns (c/(c-1))^c * E exp(2c|Z|) with c = p' eps_bar(1) (2 + eps_bar(1));
    the inequality form needs c > 1, so None is returned otherwise and the
    diagnostic is simply not reported in that regime.
    """
    eps_bar = float(spec.memory_primitive(1.0))
    c = p_prime * eps_bar * (2.0 + eps_bar)
    if c <= 1.0:
        return None
    return (c / (c - 1.0)) ** c * gaussian_abs_mgf(2.0 * c)
