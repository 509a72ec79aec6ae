"""Sites, boxes, configurations, interaction families and Hamiltonians.

Sites are plain integer tuples (lexicographic order is the canonical
iteration order everywhere).  Interactions are restricted to single-site
and pair potentials of finite range r in the sup metric; that is enough
to exercise every estimate downstream while keeping support enumeration
simple.  All types are immutable after construction and all operations
are pure.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .errors import MissingBoundaryError

Site = tuple[int, ...]


def linf_distance(a: Site, b: Site) -> int:
    """Sup-metric distance between two sites."""
    return max(abs(x - y) for x, y in zip(a, b))


def shift_site(s: Site, by: Site) -> Site:
    return tuple(x + y for x, y in zip(s, by))


def site_diameter(sites: Iterable[Site]) -> int:
    """Sup-metric diameter of a finite site set (0 for singletons)."""
    pts = list(sites)
    return max(
        (linf_distance(a, b) for a, b in itertools.combinations(pts, 2)),
        default=0,
    )


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of lattice sites with inclusive bounds."""

    lo: Site
    hi: Site

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must share the dimension")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"empty box: lo={self.lo} hi={self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def size(self) -> int:
        return math.prod(b - a + 1 for a, b in zip(self.lo, self.hi))

    def __contains__(self, site: Site) -> bool:
        return all(a <= s <= b for a, s, b in zip(self.lo, self.hi, site))

    def __iter__(self) -> Iterator[Site]:
        """Sites in lexicographic order."""
        ranges = [range(a, b + 1) for a, b in zip(self.lo, self.hi)]
        return iter(itertools.product(*ranges))

    def sites(self) -> list[Site]:
        return list(self)

    def contains_all(self, sites: Iterable[Site]) -> bool:
        return all(s in self for s in sites)

    def expand(self, r: int) -> "Box":
        return Box(tuple(a - r for a in self.lo), tuple(b + r for b in self.hi))

    def collar(self, r: int) -> list[Site]:
        """Sites outside the box within sup distance r, lexicographic order."""
        if r <= 0:
            return []
        return [s for s in self.expand(r) if s not in self]

    @staticmethod
    def chain(lo: int, hi: int) -> "Box":
        """One-dimensional box, convenience for the d=1 experiments."""
        return Box((lo,), (hi,))


@dataclass(frozen=True)
class Configuration:
    """Real spin values on a finite site set."""

    values: Mapping[Site, float]

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))

    def __getitem__(self, site: Site) -> float:
        return self.values[site]

    def __contains__(self, site: Site) -> bool:
        return site in self.values

    @property
    def sites(self) -> tuple[Site, ...]:
        return tuple(sorted(self.values))

    def restrict(self, sites: Iterable[Site]) -> "Configuration":
        return Configuration({s: self.values[s] for s in sites})

    def concat(self, other: "Configuration") -> "Configuration":
        """Concatenation: self wins on its own domain, other fills the rest."""
        merged = dict(other.values)
        merged.update(self.values)
        return Configuration(merged)

    def shift(self, by: Site) -> "Configuration":
        """Translate the whole configuration: value at s moves to s + by."""
        return Configuration({shift_site(s, by): v for s, v in self.values.items()})

    def as_array(self, sites: Iterable[Site]) -> np.ndarray:
        return np.array([self.values[s] for s in sites], dtype=float)

    @staticmethod
    def constant(sites: Iterable[Site], value: float) -> "Configuration":
        return Configuration({s: float(value) for s in sites})

    @staticmethod
    def from_array(sites: Iterable[Site], row: np.ndarray) -> "Configuration":
        return Configuration({s: float(v) for s, v in zip(sites, row)})


# Lipschitz constant of x -> tanh(x^2): max |2x sech^2(x^2)|, attained near
# x = 0.72; rounded up so the declared constant is valid, not tight.
_TANH_SQ_LIP = 1.12


@dataclass(frozen=True)
class InteractionSpec:
    """Finite-range translation-invariant potential family.

    single_site(v) is the potential on singletons, pair(offset, a, b) on
    two-site supports with 0 < |offset|_inf <= interaction_range.  A None
    callable means that part is identically zero.  sup_norm bounds every
    |phi_A|; lipschitz C satisfies |phi_A(x)-phi_A(y)| <= C max_{j in A}
    |x_j - y_j|.  Callables must accept numpy arrays (broadcasting).
    """

    interaction_range: int
    single_site: Callable | None
    pair: Callable | None
    sup_norm: float
    lipschitz: float

    def __post_init__(self):
        if self.interaction_range < 0:
            raise ValueError("interaction range must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.single_site is None and self.pair is None

    @property
    def has_single_site(self) -> bool:
        return self.single_site is not None

    @property
    def has_pair(self) -> bool:
        return self.pair is not None and self.interaction_range >= 1

    @staticmethod
    def zero(interaction_range: int = 1) -> "InteractionSpec":
        return InteractionSpec(interaction_range, None, None, 0.0, 0.0)

    @staticmethod
    def stock(
        interaction_range: int = 1,
        pair_coupling: float = 0.2,
        single_coupling: float = 0.2,
    ) -> "InteractionSpec":
        """Default bounded Lipschitz family.

        Singletons carry lam * tanh(v^2), pairs J * cos(a - b) for sites
        within range.  Both constants below are closed-form: sup norm
        max(|lam|, |J|), Lipschitz max(1.12 |lam|, 2 |J|).
        """
        lam = float(single_coupling)
        J = float(pair_coupling)
        single = None if lam == 0.0 else (lambda v, _l=lam: _l * np.tanh(v * v))
        pair = (
            None
            if J == 0.0
            else (lambda offset, a, b, _j=J: _j * np.cos(a - b))
        )
        return InteractionSpec(
            interaction_range=interaction_range,
            single_site=single,
            pair=pair,
            sup_norm=max(abs(lam), abs(J)),
            lipschitz=max(_TANH_SQ_LIP * abs(lam), 2.0 * abs(J)),
        )


def _pair_offsets(dim: int, r: int) -> list[Site]:
    """Nonzero offsets o with 0 < |o|_inf <= r, positive lexicographically.

    Only offsets that are lexicographically positive are listed, so each
    unordered pair {i, i+o} is generated exactly once from its lower site.
    """
    if r < 1:
        return []
    out = []
    for o in itertools.product(range(-r, r + 1), repeat=dim):
        if o > (0,) * dim:
            out.append(o)
    return out


def supports_touching(region, spec: InteractionSpec) -> list[frozenset[Site]]:
    """All potential supports (diameter <= range) meeting the region.

    region is a Box or any iterable of sites.  Singleton supports {i} for
    i in the region plus every pair within range with at least one end in
    the region; deterministic lexicographic order of the sorted supports.
    """
    region_sites = list(region)
    region_set = set(region_sites)
    if not region_sites:
        return []
    dim = len(region_sites[0])
    found: set[frozenset[Site]] = set()
    for s in region_sites:
        found.add(frozenset((s,)))
    if spec.interaction_range >= 1:
        offsets = _pair_offsets(dim, spec.interaction_range)
        for s in region_sites:
            for o in offsets:
                found.add(frozenset((s, shift_site(s, o))))
                found.add(frozenset((shift_site(s, tuple(-c for c in o)), s)))
    supports = [fs for fs in found if fs & region_set]
    return sorted(supports, key=lambda fs: tuple(sorted(fs)))


def supports_within(box: Box, spec: InteractionSpec) -> list[frozenset[Site]]:
    """Supports entirely inside the box, lexicographic order."""
    return [fs for fs in supports_touching(box, spec) if box.contains_all(fs)]


def evaluate_support(spec: InteractionSpec, support: frozenset[Site], lookup):
    """Evaluate phi on one support; lookup maps site -> value (or array).

    Returns 0 where the corresponding potential part is absent.  Pair
    supports are evaluated from the lexicographically lower site so the
    offset convention is deterministic.
    """
    sites = sorted(support)
    if len(sites) == 1:
        if spec.single_site is None:
            return 0.0
        return spec.single_site(lookup(sites[0]))
    if len(sites) == 2:
        if spec.pair is None:
            return 0.0
        i, j = sites
        offset = tuple(b - a for a, b in zip(i, j))
        return spec.pair(offset, lookup(i), lookup(j))
    raise ValueError(f"unsupported support size {len(sites)}")


def _boundary_lookup(box: Box, x: Configuration, z: Configuration | None):
    def lookup(site: Site):
        if site in box:
            return x[site]
        if z is not None and site in z:
            return z[site]
        raise MissingBoundaryError(
            f"boundary value missing at {site} (within interaction range of the box)"
        )

    return lookup


def hamiltonian(
    box: Box, x: Configuration, z: Configuration | None, spec: InteractionSpec
) -> float:
    """Energy of x in the box against boundary condition z.

    Sums phi over every support meeting the box; values inside the box
    come from x, values in the range-r collar from z.  A missing boundary
    value within range raises MissingBoundaryError.
    """
    lookup = _boundary_lookup(box, x, z)
    total = 0.0
    for support in supports_touching(box, spec):
        total += float(evaluate_support(spec, support, lookup))
    return total


def free_energy_sum(box: Box, x: Configuration, spec: InteractionSpec) -> float:
    """Sum of phi over supports fully inside the box (free boundary)."""
    total = 0.0
    for support in supports_within(box, spec):
        total += float(evaluate_support(spec, support, lambda s: x[s]))
    return total


@dataclass(frozen=True)
class AprioriMeasure:
    """Per-site reference measure, absolutely continuous w.r.t. Lebesgue.

    log_density must accept numpy arrays.  total_mass is the declared
    integral of the density (1 for the stock normalized Gaussian); the
    quadrature routines rely on the density being sub-Gaussian.
    """

    log_density: Callable = field(repr=False)
    total_mass: float = 1.0
    name: str = "custom"

    @staticmethod
    def gaussian() -> "AprioriMeasure":
        c = -0.5 * math.log(2.0 * math.pi)
        return AprioriMeasure(
            log_density=lambda v: -0.5 * v * v + c,
            total_mass=1.0,
            name="gaussian",
        )
