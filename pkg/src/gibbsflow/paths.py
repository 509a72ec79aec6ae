"""Time grids, Brownian/bridge sampling, Euler-Maruyama and grid reversal.

Randomness is counter-based: a SeedStream is a (root_seed, stream_index)
pair mapped to a Philox generator by a fixed documented function, so any
number of concurrent workers reproduce identical paths from identical
stream coordinates.  Uniform grids only: every discretized functional
(Ito sums, reversal) is then an exact grid symmetry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lattice import Box, Configuration, Site

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 step; the documented mixing primitive for stream ids."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_stream_index(*parts) -> int:
    """Fold integers/strings into a 64-bit stream index via SplitMix64.

    Strings are folded byte-wise; integers are reduced mod 2^64.  The
    chain h <- splitmix64(h XOR part) is order-sensitive by design.
    """
    h = 0
    for part in parts:
        if isinstance(part, str):
            for b in part.encode("utf-8"):
                h = splitmix64(h ^ b)
        elif isinstance(part, (int, np.integer)):
            h = splitmix64(h ^ (int(part) & _MASK64))
        else:
            raise TypeError(f"stream tag must be int or str, got {type(part)!r}")
    return h


@dataclass(frozen=True)
class SeedStream:
    """Counter-based RNG stream coordinates.

    generator() returns Generator(Philox(key=[root_seed, stream_index])),
    which is the entire mapping; distinct stream indices give independent
    streams.  child(*tags) derives a new index deterministically with
    mix_stream_index(stream_index, *tags).
    """

    root_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.root_seed & _MASK64, self.stream_index & _MASK64],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *tags) -> "SeedStream":
        return SeedStream(self.root_seed, mix_stream_index(self.stream_index, *tags))

    def site_stream(self, site: Site, chunk: int = 0) -> "SeedStream":
        """Per-site stream: increments at a site never depend on which other
        sites are being simulated (bitwise locality of path batches)."""
        return self.child("site", *site, "chunk", chunk)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = s_0 < ... < s_M = horizon."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def delta(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.delta


@dataclass(frozen=True)
class GridPath:
    """Multi-site trajectory on a uniform grid; values[j, k] = X_{site k}(s_j).

    Sites are sorted lexicographically; the array is frozen after
    construction so paths are safe to share between workers.
    """

    grid: TimeGrid
    sites: tuple[Site, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.steps + 1, len(self.sites)):
            raise ValueError(
                f"values shape {values.shape} does not match grid/sites "
                f"({self.grid.steps + 1}, {len(self.sites)})"
            )
        if tuple(sorted(self.sites)) != tuple(self.sites):
            raise ValueError("sites must be sorted lexicographically")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def site_column(self, site: Site) -> int:
        return self.sites.index(site)

    def initial(self) -> Configuration:
        return Configuration.from_array(self.sites, self.values[0])

    def final(self) -> Configuration:
        return Configuration.from_array(self.sites, self.values[-1])


def reverse_values(values: np.ndarray) -> np.ndarray:
    """Time reversal on the grid: row j of the output is row M - j."""
    return values[..., ::-1, :]


def reverse_path(p: GridPath) -> GridPath:
    """Grid-level time reversal; an exact involution (bitwise)."""
    return GridPath(p.grid, p.sites, reverse_values(p.values).copy())


def _sorted_sites(x0: Configuration) -> tuple[Site, ...]:
    return tuple(sorted(x0.values))


def sample_brownian(x0: Configuration, grid: TimeGrid, stream: SeedStream) -> GridPath:
    """Independent Brownian motions per site started at x0.

    Consumes exactly one standard_normal((M, n)) block from the stream;
    euler_maruyama deliberately matches this consumption so zero drift
    reproduces the same path bitwise from the same stream.
    """
    sites = _sorted_sites(x0)
    gen = stream.generator()
    increments = gen.standard_normal((grid.steps, len(sites))) * np.sqrt(grid.delta)
    values = np.empty((grid.steps + 1, len(sites)))
    values[0] = x0.as_array(sites)
    np.cumsum(increments, axis=0, out=values[1:])
    values[1:] += values[0]
    return GridPath(grid, sites, values)


def sample_bridge(
    x0: Configuration, x1: Configuration, grid: TimeGrid, stream: SeedStream
) -> GridPath:
    """Brownian bridge from x0 at time 0 to x1 at the horizon.

    Standard construction B(s) = x0 + W(s) - (s/t)(W(t) - (x1 - x0));
    the endpoint rows are then overwritten so they are bitwise exact.
    """
    sites = _sorted_sites(x0)
    if sites != _sorted_sites(x1):
        raise ValueError("bridge endpoints must share the site set")
    gen = stream.generator()
    increments = gen.standard_normal((grid.steps, len(sites))) * np.sqrt(grid.delta)
    w = np.vstack([np.zeros((1, len(sites))), np.cumsum(increments, axis=0)])
    a = x0.as_array(sites)
    b = x1.as_array(sites)
    frac = (grid.times() / grid.horizon)[:, None]
    values = a[None, :] + w - frac * (w[-1][None, :] - (b - a)[None, :])
    values[0] = a
    values[-1] = b
    return GridPath(grid, sites, values)


def brownian_batch(
    x0_row: np.ndarray,
    sites: Sequence[Site],
    grid: TimeGrid,
    stream: SeedStream,
    n_paths: int,
    chunk: int = 0,
) -> np.ndarray:
    """Batch of Brownian paths, shape (n_paths, M+1, n_sites).

    Increments for each site come from stream.site_stream(site, chunk),
    so the values a functional reads at a site are identical no matter
    which other sites were simulated alongside it.
    """
    n = len(sites)
    values = np.empty((n_paths, grid.steps + 1, n))
    sqrt_dt = np.sqrt(grid.delta)
    for k, site in enumerate(sites):
        gen = stream.site_stream(site, chunk).generator()
        inc = gen.standard_normal((n_paths, grid.steps)) * sqrt_dt
        values[:, 0, k] = x0_row[k]
        np.cumsum(inc, axis=1, out=values[:, 1:, k])
        values[:, 1:, k] += x0_row[k]
    return values


def euler_maruyama(
    box: Box,
    x0: Configuration,
    drift,
    grid: TimeGrid,
    stream: SeedStream,
) -> GridPath:
    """Euler-Maruyama step of the finite-volume system in the box.

    Sites i whose drift neighborhood N + i fits inside the box get the
    drift term; all other sites evolve as pure Brownian noise.  The drift
    object must expose .neighborhood and .step_values(j, grid, values,
    cols) reading only rows <= j (adaptedness).
    """
    sites = tuple(sorted(box))
    if set(x0.values) != set(sites):
        raise ValueError("initial configuration must live exactly on the box")
    values = _euler_values(
        box, x0.as_array(sites)[None, :], sites, drift, grid,
        lambda shape: stream.generator().standard_normal(shape[1:])[None, ...],
    )
    return GridPath(grid, sites, values[0])


def euler_maruyama_batch(
    box: Box,
    x0_rows: np.ndarray,
    drift,
    grid: TimeGrid,
    stream: SeedStream,
    chunk: int = 0,
) -> np.ndarray:
    """Vectorized Euler-Maruyama over a batch of initial rows.

    Noise is drawn per site from stream.site_stream(site, chunk), same
    layout as brownian_batch.
    """
    sites = tuple(sorted(box))

    def draw(shape):
        n_paths, steps, n = shape
        out = np.empty(shape)
        for k, site in enumerate(sites):
            gen = stream.site_stream(site, chunk).generator()
            out[:, :, k] = gen.standard_normal((n_paths, steps))
        return out

    return _euler_values(box, np.asarray(x0_rows, dtype=float), sites, drift, grid, draw)


def _euler_values(box, x0_rows, sites, drift, grid, draw_noise):
    n_paths, n = x0_rows.shape[0], len(sites)
    noise = draw_noise((n_paths, grid.steps, n)) * np.sqrt(grid.delta)
    interior = []
    for k, site in enumerate(sites):
        nbh = [tuple(c + d for c, d in zip(site, off)) for off in drift.neighborhood]
        if all(s in box for s in nbh):
            cols = [sites.index(s) for s in nbh]
            interior.append((k, np.array(cols)))
    values = np.empty((n_paths, grid.steps + 1, n))
    values[:, 0, :] = x0_rows
    for j in range(grid.steps):
        values[:, j + 1, :] = values[:, j, :] + noise[:, j, :]
        for k, cols in interior:
            b = drift.step_values(j, grid, values, cols)
            values[:, j + 1, k] += b * grid.delta
    return values


def dump_path(path: GridPath, file, seed: int = 0) -> None:
    """Debug dump: header (d, n_sites, M, t, seed) then row-major float64.

    Little-endian throughout; site labels are not stored (replay only).
    """
    d = len(path.sites[0]) if path.sites else 0
    header = struct.pack(
        "<qqqdQ", d, len(path.sites), path.grid.steps, path.grid.horizon, seed & _MASK64
    )
    file.write(header)
    file.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def load_path_dump(file):
    """Inverse of dump_path: returns (header dict, values array)."""
    raw = file.read(struct.calcsize("<qqqdQ"))
    d, n_sites, steps, horizon, seed = struct.unpack("<qqqdQ", raw)
    values = np.frombuffer(
        file.read(8 * (steps + 1) * n_sites), dtype="<f8"
    ).reshape(steps + 1, n_sites)
    header = {
        "dim": d,
        "n_sites": n_sites,
        "steps": steps,
        "horizon": horizon,
        "seed": seed,
    }
    return header, values.astype(float)
