"""Seeded Monte Carlo path generation with an absorbing state at zero.

Random streams
--------------
Path ``i`` of a run with master seed ``s`` draws its Gaussian shocks from
``numpy.random.Generator(Philox(key=[s, i]))``: a Philox-4x64 counter-based
bit generator keyed by the pair (master seed, path index), counter starting at
zero, consumed one ``standard_normal`` per time step. Streams never depend on
how paths are chunked or how many worker threads run, so an ensemble is a pure
function of (model, config).
"""
from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptySample
from .models import Micro, ModelSpec, diffusion_fn, drift_fn, micro_step_unchecked

MAX_SEED = 2**64 - 1
CHUNK_PATHS = 4096
BLOCK_STEPS = 512
BINARY_MAGIC = b"QEDE"


@dataclass(frozen=True)
class SimConfig:
    """Time grid, ensemble size and seeding.

    ``record_every`` stores every k-th step (the final step is always stored);
    absorption and level-crossing times are resolved at every step regardless.
    ``crossing_level`` optionally tracks the first time each path falls to or
    below a price level (e.g. a barrier top) in addition to absorption.
    """

    dt: float
    horizon: float
    n_paths: int
    master_seed: int = 0
    x0: float = 1.0
    absorb_threshold: float = 0.0
    record_every: int = 1
    crossing_level: float | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if not (self.horizon >= self.dt and math.isfinite(self.horizon)):
            raise ConfigError("horizon must be >= dt")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError("n_paths must be a positive integer")
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed <= MAX_SEED:
            raise ConfigError("master_seed must be an integer in [0, 2**64)")
        if not self.absorb_threshold >= 0:
            raise ConfigError("absorb_threshold must be >= 0")
        if not self.x0 > self.absorb_threshold:
            raise ConfigError("x0 must exceed absorb_threshold")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9))

    def record_indices(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.record_every)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Recorded paths.

    ``values`` has shape (n_paths, len(times)). ``absorbed_at`` holds the
    absorption time per path or NaN if the path survived the horizon;
    ``crossed_at`` likewise for ``SimConfig.crossing_level``.
    """

    times: np.ndarray
    values: np.ndarray
    absorbed_at: np.ndarray
    crossed_at: np.ndarray | None = None
    horizon: float = field(default=float("nan"))

    def __post_init__(self):
        for arr in (self.times, self.values, self.absorbed_at, self.crossed_at):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def absorbed(self) -> np.ndarray:
        return ~np.isnan(self.absorbed_at)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    def alive_mask(self) -> np.ndarray:
        """(n_paths, n_times) mask of samples taken before absorption."""
        a = np.where(np.isnan(self.absorbed_at), np.inf, self.absorbed_at)
        return self.times[None, :] < a[:, None]

    def to_csv(self, path) -> None:
        """One row per time: ``t,path_0,path_1,...``."""
        header = "t," + ",".join(f"path_{i}" for i in range(self.n_paths))
        table = np.column_stack([self.times, self.values.T])
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for row in table:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def to_bytes(self) -> bytes:
        """Binary layout, all little-endian.

        24-byte header: magic ``QEDE``, uint32 version (1), uint64 n_paths,
        uint64 n_steps (recorded times). Then float64 payload, row-major:
        times[n_steps], values[n_paths, n_steps], absorbed_at[n_paths] (NaN = survived).
        """
        n_paths, n_steps = self.values.shape
        head = BINARY_MAGIC + struct.pack("<IQQ", 1, n_paths, n_steps)
        body = np.concatenate([self.times, self.values.ravel(order="C"), self.absorbed_at])
        return head + body.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PathEnsemble":
        if len(blob) < 24 or blob[:4] != BINARY_MAGIC:
            raise ConfigError("not a QEDE ensemble file")
        version, n_paths, n_steps = struct.unpack("<IQQ", blob[4:24])
        if version != 1:
            raise ConfigError(f"unsupported QEDE version {version}")
        data = np.frombuffer(blob, dtype="<f8", offset=24)
        if data.size != n_steps + n_paths * n_steps + n_paths:
            raise ConfigError("QEDE payload size mismatch")
        times = data[:n_steps].copy()
        values = data[n_steps:n_steps + n_paths * n_steps].reshape(n_paths, n_steps).copy()
        absorbed = data[n_steps + n_paths * n_steps:].copy()
        return cls(times, values, absorbed, horizon=float(times[-1]))

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load_binary(cls, path) -> "PathEnsemble":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    """The per-path stream documented in the module docstring."""
    return np.random.Generator(np.random.Philox(key=[int(master_seed), int(path_index)]))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("QEDLAB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return threads


def _simulate_chunk(m: ModelSpec, cfg: SimConfig, start: int, stop: int, rec_idx: np.ndarray):
    n = stop - start
    if n == 1:
        return _simulate_single(m, cfg, path_generator(cfg.master_seed, start), rec_idx)
    n_steps = cfg.n_steps
    dt = cfg.dt
    sqdt = math.sqrt(dt)
    gens = [path_generator(cfg.master_seed, i) for i in range(start, stop)]

    values = np.empty((n, rec_idx.size))
    absorbed_at = np.full(n, np.nan)
    crossed_at = np.full(n, np.nan) if cfg.crossing_level is not None else None

    x = np.full(n, float(cfg.x0))
    alive = np.ones(n, dtype=bool)
    rec_pos = 0
    if rec_idx[0] == 0:
        values[:, 0] = x
        rec_pos = 1
    absorbing = m.multiplicative
    is_micro = isinstance(m, Micro)

    step = 0
    while step < n_steps:
        blk = min(BLOCK_STEPS, n_steps - step)
        eps = np.stack([g.standard_normal(blk) for g in gens])
        for j in range(blk):
            e = eps[:, j]
            if is_micro:
                xn = micro_step_unchecked(m, x, e, dt)
            else:
                xn = x + drift_fn(m, x) * dt + diffusion_fn(m, x) * sqdt * e
            step += 1
            t = step * dt
            if absorbing:
                xn = np.maximum(xn, 0.0)
                hit = alive & (xn <= cfg.absorb_threshold)
                if hit.any():
                    absorbed_at[hit] = t
                    alive &= ~hit
                xn = np.where(alive, xn, 0.0)
            if crossed_at is not None:
                cross = np.isnan(crossed_at) & (xn <= cfg.crossing_level)
                crossed_at[cross] = t
            x = xn
            if rec_pos < rec_idx.size and rec_idx[rec_pos] == step:
                values[:, rec_pos] = x
                rec_pos += 1
        if absorbing and not alive.any():
            # every path is frozen at 0; remaining shocks are irrelevant
            values[:, rec_pos:] = 0.0
            break
    return values, absorbed_at, crossed_at


def _simulate_single(m: ModelSpec, cfg: SimConfig, gen: np.random.Generator,
                     rec_idx: np.ndarray):
    """Scalar loop for one path; same floating-point operations as the array loop."""
    n_steps = cfg.n_steps
    dt = cfg.dt
    sqdt = math.sqrt(dt)
    values = np.empty((1, rec_idx.size))
    absorbed_at = np.full(1, np.nan)
    crossed_at = np.full(1, np.nan) if cfg.crossing_level is not None else None
    level = cfg.crossing_level
    absorbing = m.multiplicative
    is_micro = isinstance(m, Micro)
    rec = rec_idx.tolist()
    rec_pos = 0
    x = float(cfg.x0)
    if rec[0] == 0:
        values[0, 0] = x
        rec_pos = 1
    alive = True
    step = 0
    while step < n_steps:
        blk = min(BLOCK_STEPS * 16, n_steps - step)
        for e in gen.standard_normal(blk).tolist():
            if not alive:
                xn = 0.0
            elif is_micro:
                xn = micro_step_unchecked(m, x, e, dt)
            else:
                xn = x + drift_fn(m, x) * dt + diffusion_fn(m, x) * sqdt * e
            step += 1
            if absorbing and alive:
                if xn < 0.0:
                    xn = 0.0
                if xn <= cfg.absorb_threshold:
                    absorbed_at[0] = step * dt
                    alive = False
                    xn = 0.0
            if level is not None and crossed_at[0] != crossed_at[0] and xn <= level:
                crossed_at[0] = step * dt
            x = xn
            if rec_pos < len(rec) and rec[rec_pos] == step:
                values[0, rec_pos] = x
                rec_pos += 1
        if absorbing and not alive:
            values[0, rec_pos:] = 0.0
            break
    return values, absorbed_at, crossed_at


def simulate(m: ModelSpec, cfg: SimConfig, threads: int | None = None) -> PathEnsemble:
    """Euler-Maruyama ensemble (or the native discrete step for :class:`Micro`).

    Multiplicative models clamp negative proposals to 0, and a path is absorbed
    (frozen at exactly 0) the first time it is at or below ``absorb_threshold``.
    The result does not depend on ``threads``.
    """
    if not isinstance(cfg, SimConfig):
        raise ConfigError("cfg must be a SimConfig")
    threads = resolve_threads(threads)
    rec_idx = cfg.record_indices()
    times = rec_idx * cfg.dt
    bounds = [(s, min(s + CHUNK_PATHS, cfg.n_paths)) for s in range(0, cfg.n_paths, CHUNK_PATHS)]

    def run(b):
        return _simulate_chunk(m, cfg, b[0], b[1], rec_idx)

    if threads == 1 or len(bounds) == 1:
        parts = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))

    values = np.concatenate([p[0] for p in parts])
    absorbed = np.concatenate([p[1] for p in parts])
    crossed = None
    if cfg.crossing_level is not None:
        crossed = np.concatenate([p[2] for p in parts])
    return PathEnsemble(times, values, absorbed, crossed, horizon=cfg.n_steps * cfg.dt)


@dataclass(frozen=True)
class Histogram:
    density: np.ndarray
    edges: np.ndarray
    n_samples: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mode(self) -> float:
        return float(self.centers[int(np.argmax(self.density))])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def quasi_stationary_histogram(e: PathEnsemble, window: tuple[float, float], bins=50,
                               range=None) -> Histogram:
    """Density of surviving-path values at recorded times inside ``window``."""
    t0, t1 = window
    if t0 > t1 or t0 < 0 or t1 > e.times[-1] + 1e-12:
        raise ConfigError(f"window {window} outside [0, {e.times[-1]}]")
    cols = (e.times >= t0) & (e.times <= t1)
    mask = e.alive_mask()[:, cols]
    sample = e.values[:, cols][mask]
    if sample.size == 0:
        raise EmptySample("no surviving path values inside the window")
    density, edges = np.histogram(sample, bins=bins, range=range, density=True)
    return Histogram(density, edges, int(sample.size))
