"""Monte Carlo engines for the rescaled additive functional.

Two independent routes produce samples of the running integral
``int_0^{t/eps} f(X_s) ds`` on a grid of horizon times ``t_i``:

* ``Direct`` -- Euler--Maruyama on the diffusion itself, integrating f along
  the path with the left-endpoint rule.
* ``TimeChange`` -- never simulates X.  A driving Brownian motion W feeds two
  coupled accumulators built from the scale-transformed coefficients: the
  occupation clock A, whose crossing of t_i marks rescaled time t_i, and the
  weighted functional H.  Reading H at the crossing reproduces the law of the
  direct route's integral.

Both engines key their noise by (seed, path index, draw index), so a run is
byte-identical for a fixed seed regardless of thread count or block
scheduling.  The time-change walk takes level-dependent Brownian steps --
fine near the origin where the clock accrues, coarse far away -- which keeps
the heavy-tailed excursions of the clock affordable: the cost of visiting
height h grows like log(h)^2, not like the time spent there.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._rng import TAG_DIRECT, TAG_TIMECHANGE, NormalBuffer, stream
from .asymptotics import LimitLaw
from .errors import (
    ConfigError,
    HorizonExceeded,
    InvalidRequest,
    PathExploded,
)
from .model import DiffusionModel, _vectorized

__all__ = [
    "SCHEMES",
    "SimConfig",
    "FunctionalSample",
    "simulate_path",
    "additive_functional",
    "rescaled_functional",
    "simulate_timechange",
]

SCHEMES = ("Direct", "TimeChange")

_BLOCK = 512              # lockstep block width (paths per worker unit)
_CHUNK = 8192             # noise rows drawn per refill in the direct engine
_GUARD_FACTOR = 10.0      # explosion guard at |X| > guard_factor * domain_cutoff
_MAX_RETRIES = 3          # substitute draws attempted per exploded path
_EXPLODED_TOL = 1e-3      # run fails if more than this fraction of paths explode
_CLIP_RATE = 1e6          # cap on the clock rate dA/du of the time-change walk
_CLIP_TOL = 1e-4          # run fails if more than this fraction of steps clip
_MAGIC = b"SDFSAMP1"
_SCHEMA = 1


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Run parameters shared by both sampling schemes.

    ``horizon_times`` are the rescaled times t_i at which the functional is
    read; the diffusion is simulated up to t_n / epsilon.  ``dt`` is the
    Euler-Maruyama step for the direct scheme and the relative step-size
    parameter of the time-change walk (whose Brownian step is
    ``dt * max(a_eps, |W|)^2``), so halving dt refines either engine.  The
    grid must put at least 100 steps before the first horizon time:
    dt <= t_1 / (100 * epsilon).
    """

    dt: float
    epsilon: float
    horizon_times: tuple
    n_paths: int
    seed: int = 0
    scheme: str = "Direct"

    def __post_init__(self):
        if not isinstance(self.n_paths, (int, np.integer)) or isinstance(self.n_paths, bool):
            raise ConfigError(f"n_paths must be an integer, got {self.n_paths!r}")
        if self.n_paths < 2:
            raise ConfigError(f"need n_paths >= 2, got {self.n_paths}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigError(f"seed must fit in an unsigned 64-bit word, got {self.seed}")
        for name in ("dt", "epsilon"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0.0):
                raise ConfigError(f"{name} must be a finite positive number, got {v!r}")
        times = tuple(float(t) for t in np.atleast_1d(np.asarray(self.horizon_times)).ravel())
        if len(times) == 0:
            raise ConfigError("horizon_times must be non-empty")
        if not all(math.isfinite(t) and t > 0.0 for t in times):
            raise ConfigError(f"horizon_times must be finite and positive, got {times}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError(f"horizon_times must be strictly increasing, got {times}")
        object.__setattr__(self, "horizon_times", times)
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        bound = times[0] / (100.0 * self.epsilon)
        if self.dt > bound * (1.0 + 1e-12):
            raise ConfigError(
                "dt too coarse: at least 100 steps must precede the first horizon "
                f"time, so dt <= t_1/(100*epsilon) = {bound:g}; got dt = {self.dt:g}")

    @property
    def diffusion_horizon(self) -> float:
        """Unrescaled simulation horizon t_n / epsilon of the direct scheme."""
        return self.horizon_times[-1] / self.epsilon

    @property
    def n_steps(self) -> int:
        """Euler-Maruyama steps covering the unrescaled horizon."""
        return int(math.ceil(self.diffusion_horizon / self.dt - 1e-9))


# ---------------------------------------------------------------------------
# sample container and serialization
# ---------------------------------------------------------------------------


@dataclass
class FunctionalSample:
    """Matrix of functional samples plus everything needed to reproduce it.

    ``values[p, i]`` is path p's (normalized, unless ``law`` is None)
    functional at rescaled time ``times[i]``.  ``n_exploded`` counts original
    path keys that hit the explosion guard and were re-drawn under substitute
    keys; ``clip_fraction`` is the fraction of time-change steps whose clock
    rate hit the safety cap (0.0 for the direct scheme).
    """

    values: np.ndarray
    law: LimitLaw | None
    scheme: str
    seed: int
    dt: float
    epsilon: float
    times: tuple
    n_exploded: int = 0
    clip_fraction: float = 0.0
    #: free-form JSON-serializable run description (model/observable names,
    #: stable-law parameters, ...) carried through both file formats
    extra: dict = field(default_factory=dict)

    #: diffusion engines plus the stable-process samplers, which reuse this
    #: container (and its file formats) for their own path matrices
    KNOWN_SCHEMES = SCHEMES + ("excursion", "cms")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.times = tuple(float(t) for t in self.times)
        self.extra = dict(self.extra or {})
        if self.values.ndim != 2 or self.values.shape[1] != len(self.times):
            raise InvalidRequest(
                f"values must be (n_paths, {len(self.times)}), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidRequest("sample values must all be finite")
        if self.scheme not in self.KNOWN_SCHEMES:
            raise InvalidRequest(
                f"scheme must be one of {self.KNOWN_SCHEMES}, got {self.scheme!r}")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def _meta(self) -> dict:
        return {
            "format": "stablediff-functional-sample",
            "schema": _SCHEMA,
            "scheme": self.scheme,
            "seed": int(self.seed),
            "dt": self.dt,
            "epsilon": self.epsilon,
            "times": list(self.times),
            "n_paths": int(self.values.shape[0]),
            "n_times": int(self.values.shape[1]),
            "n_exploded": int(self.n_exploded),
            "clip_fraction": self.clip_fraction,
            "law": None if self.law is None else self.law.to_json(),
            "extra": self.extra,
        }

    @classmethod
    def _from_meta(cls, meta: dict, values: np.ndarray) -> "FunctionalSample":
        if meta.get("format") != "stablediff-functional-sample":
            raise InvalidRequest("not a functional-sample file")
        if meta.get("schema") != _SCHEMA:
            raise InvalidRequest(f"unsupported schema {meta.get('schema')!r}")
        law = None if meta["law"] is None else LimitLaw.from_json(meta["law"])
        return cls(values=values, law=law, scheme=meta["scheme"], seed=meta["seed"],
                   dt=meta["dt"], epsilon=meta["epsilon"], times=tuple(meta["times"]),
                   n_exploded=meta.get("n_exploded", 0),
                   clip_fraction=meta.get("clip_fraction", 0.0),
                   extra=meta.get("extra", {}))

    # -- text format --------------------------------------------------------

    def to_csv(self, path) -> None:
        """One row per path, one column per horizon time.

        Line 1 is a ``#``-prefixed JSON metadata comment; floats are written
        with ``repr`` so a read-back is bit-exact.
        """
        lines = ["# " + json.dumps(self._meta())]
        lines.append("path," + ",".join(f"t={t!r}" for t in self.times))
        for i, row in enumerate(self.values):
            lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "FunctionalSample":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("# "):
            raise InvalidRequest("not a functional-sample file (missing metadata line)")
        meta = json.loads(lines[0][2:])
        body = lines[2:]
        values = np.array([[float(v) for v in ln.split(",")[1:]] for ln in body if ln])
        return cls._from_meta(meta, values)

    # -- binary format -------------------------------------------------------

    def to_binary(self, path) -> None:
        """Magic ``SDFSAMP1``, u32-LE header length, UTF-8 JSON header, then
        the value matrix as little-endian float64 in row-major order."""
        header = json.dumps(self._meta()).encode("utf-8")
        payload = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        Path(path).write_bytes(_MAGIC + struct.pack("<I", len(header)) + header + payload)

    @classmethod
    def from_binary(cls, path) -> "FunctionalSample":
        blob = Path(path).read_bytes()
        if blob[: len(_MAGIC)] != _MAGIC:
            raise InvalidRequest("not a functional-sample file (bad magic)")
        (hlen,) = struct.unpack_from("<I", blob, len(_MAGIC))
        start = len(_MAGIC) + 4
        meta = json.loads(blob[start:start + hlen].decode("utf-8"))
        values = np.frombuffer(blob[start + hlen:], dtype="<f8").astype(np.float64)
        values = values.reshape(meta["n_paths"], meta["n_times"])
        return cls._from_meta(meta, values)


# ---------------------------------------------------------------------------
# single-path simulation and pathwise integration
# ---------------------------------------------------------------------------


def simulate_path(model: DiffusionModel, T: float, dt: float, seed: int = 0):
    """One Euler-Maruyama path from X_0 = 0 on the uniform grid covering T.

    Returns ``(times, X)`` with ``times[k] = k*dt`` (the last point is the
    first grid point at or beyond T).  Noise is keyed by (seed, path 0, step),
    matching path 0 of an ensemble run with the same seed.  Raises
    :class:`PathExploded` (reporting the step) if the path leaves
    ``[-10*domain_cutoff, 10*domain_cutoff]``.
    """
    if not (isinstance(T, (int, float)) and math.isfinite(T) and T > 0.0):
        raise InvalidRequest(f"T must be a finite positive number, got {T!r}")
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and 0.0 < dt <= T):
        raise InvalidRequest(f"dt must lie in (0, T], got {dt!r}")
    model.core()  # runs the coefficient checks (finiteness, sigma > 0)
    n = int(math.ceil(T / dt - 1e-9))
    times = np.arange(n + 1) * dt
    guard = _GUARD_FACTOR * model.domain_cutoff
    sqdt = math.sqrt(dt)
    gen = stream(int(seed), TAG_DIRECT, 0)
    X = np.empty(n + 1)
    X[0] = 0.0
    k = 0
    while k < n:
        m = min(_CHUNK, n - k)
        z = gen.standard_normal(m)
        for r in range(m):
            x = X[k]
            x1 = x + float(model.drift(x)) * dt + float(model.diffusion(x)) * sqdt * z[r]
            k += 1
            X[k] = x1
            if not (abs(x1) <= guard):
                raise PathExploded(
                    f"path left [-{guard:g}, {guard:g}] at step {k} "
                    f"(t = {k * dt:g})", step=k)
    return times, X


def additive_functional(path, f: Callable) -> np.ndarray:
    """Running left-rule integral of f along a simulated path.

    ``path`` is the ``(times, X)`` pair from :func:`simulate_path`; the
    return value ``F`` satisfies ``F[k] = sum_{j<k} f(X_j) * dt``, so for
    f == 1 it reproduces ``times`` bit for bit.
    """
    times, X = path
    times = np.asarray(times, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if times.ndim != 1 or times.shape != X.shape or times.size < 2:
        raise InvalidRequest("path must be a (times, X) pair of equal-length 1-d arrays")
    dt = times[1] - times[0]
    vals = np.asarray(_vectorized(f)(X[:-1]), dtype=np.float64)
    F = np.empty_like(times)
    F[0] = 0.0
    np.cumsum(vals, out=F[1:])
    F[1:] *= dt
    return F


def _em_final(model: DiffusionModel, T: float, dt: float, seed: int,
              n_paths: int, threads: int | None = None) -> np.ndarray:
    """Terminal states of an Euler-Maruyama ensemble (test instrumentation).

    Same discretization and keying as :func:`simulate_path` across path
    indices 0..n_paths-1, without storing the paths.  Deliberately private:
    positions are a means to validate the integrator, not an output product.
    """
    model.core()
    n = int(math.ceil(T / dt - 1e-9))
    guard = _GUARD_FACTOR * model.domain_cutoff
    sqdt = math.sqrt(dt)
    bv = _vectorized(model.drift)
    sv = _vectorized(model.diffusion)
    blocks = [np.arange(lo, min(lo + _BLOCK, n_paths))
              for lo in range(0, n_paths, _BLOCK)]

    def run(idx):
        gens = [stream(int(seed), TAG_DIRECT, int(p)) for p in idx]
        x = np.zeros(len(idx))
        k = 0
        while k < n:
            m = min(_CHUNK, n - k)
            z = np.empty((m, len(idx)))
            for j, g in enumerate(gens):
                z[:, j] = g.standard_normal(m)
            for r in range(m):
                x = x + np.asarray(bv(x), dtype=np.float64) * dt \
                    + np.asarray(sv(x), dtype=np.float64) * sqdt * z[r]
                k += 1
                if not np.all(np.abs(x) <= guard):
                    raise PathExploded(
                        f"ensemble path left the guard interval at step {k}", step=k)
        return x

    if threads is not None and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# direct engine (Euler-Maruyama ensemble)
# ---------------------------------------------------------------------------


def _emission_schedule(cfg: SimConfig) -> dict:
    """step index -> [(column, remainder-time)] for the left-rule read-outs."""
    sched: dict[int, list] = {}
    n_steps = cfg.n_steps
    for i, t in enumerate(cfg.horizon_times):
        pos = t / cfg.epsilon
        k = min(int(pos / cfg.dt + 1e-12), n_steps)
        sched.setdefault(k, []).append((i, max(pos - k * cfg.dt, 0.0)))
    return sched


def _direct_block(bv, sv, fv, cfg: SimConfig, guard: float, sched: dict,
                  indices: np.ndarray):
    """Lockstep ensemble sweep; returns (raw values, explosion step or -1)."""
    width = len(indices)
    dt, sqdt = cfg.dt, math.sqrt(cfg.dt)
    n_steps = cfg.n_steps
    gens = [stream(cfg.seed, TAG_DIRECT, int(p)) for p in indices]
    x = np.zeros(width)
    fsum = np.zeros(width)
    out = np.empty((width, len(cfg.horizon_times)))
    alive = np.ones(width, dtype=bool)
    exploded_step = np.full(width, -1, dtype=np.int64)
    k = 0
    while k < n_steps:
        m = min(_CHUNK, n_steps - k)
        z = np.empty((m, width))
        for j, g in enumerate(gens):
            z[:, j] = g.standard_normal(m)
        for r in range(m):
            fx = np.asarray(fv(x), dtype=np.float64)
            hits = sched.get(k)
            if hits is not None:
                for col, rem in hits:
                    out[:, col] = fsum * dt + rem * fx
            fsum = fsum + fx
            step = np.asarray(bv(x), dtype=np.float64) * dt \
                + np.asarray(sv(x), dtype=np.float64) * sqdt * z[r]
            x = np.where(alive, x + step, x)
            k += 1
            blown = alive & ~(np.abs(x) <= guard)
            if np.any(blown):
                exploded_step[blown] = k
                alive &= ~blown
                x = np.clip(np.nan_to_num(x, nan=guard), -guard, guard)
    fx = np.asarray(fv(x), dtype=np.float64)
    hits = sched.get(n_steps)
    if hits is not None:
        for col, rem in hits:
            out[:, col] = fsum * dt + rem * fx
    return out, exploded_step


def _direct_raw(model: DiffusionModel, f: Callable, cfg: SimConfig,
                threads: int | None):
    """Raw (un-normalized) direct-scheme sample matrix plus explosion count.

    Paths that hit the guard are counted and re-drawn under substitute keys
    ``path + n_paths * retry`` so the matrix stays full; the run fails when
    explosions exceed the tolerated fraction.
    """
    model.core()  # runs the coefficient checks (finiteness, sigma > 0)
    sched = _emission_schedule(cfg)
    guard = _GUARD_FACTOR * model.domain_cutoff
    bv = _vectorized(model.drift)
    sv = _vectorized(model.diffusion)
    fv = _vectorized(f)
    blocks = [np.arange(lo, min(lo + _BLOCK, cfg.n_paths))
              for lo in range(0, cfg.n_paths, _BLOCK)]

    def run(idx):
        return _direct_block(bv, sv, fv, cfg, guard, sched, idx)

    if threads is not None and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    raw = np.vstack([p[0] for p in parts])
    exploded = np.concatenate([p[1] for p in parts])
    bad = np.nonzero(exploded >= 0)[0]
    n_exploded = int(bad.size)
    if n_exploded > _EXPLODED_TOL * cfg.n_paths:
        raise PathExploded(
            f"{n_exploded} of {cfg.n_paths} paths left the guard interval "
            f"(tolerance {_EXPLODED_TOL:.1%}); first failure at step "
            f"{int(exploded[bad[0]])}",
            step=int(exploded[bad[0]]), n_exploded=n_exploded, n_paths=cfg.n_paths)
    for p in bad:
        row = None
        for retry in range(1, _MAX_RETRIES + 1):
            sub = int(p) + cfg.n_paths * retry
            o, ex = _direct_block(bv, sv, fv, cfg, guard, sched, np.array([sub]))
            if ex[0] < 0:
                row = o[0]
                break
        if row is None:
            raise PathExploded(
                f"path {int(p)} exploded under {_MAX_RETRIES} substitute keys",
                step=int(exploded[p]), n_exploded=n_exploded, n_paths=cfg.n_paths)
        raw[p] = row
    return raw, n_exploded


# ---------------------------------------------------------------------------
# time-change engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ClockTables:
    """Scale-image interpolation tables for the clock walk.

    Inverting the scale function point-by-point (bracketed root-finding) is
    far too slow for a per-step kernel, so the walk reads both coefficient
    fields off dense tables in the image variable y = s(x): ``rate1`` holds
    kappa^2 * psi(y)^{-2} and ``fval`` holds f(s^{-1}(y)).  Nodes are placed
    uniformly in asinh(x) -- linear resolution near the origin where the
    clock accrues, constant resolution per octave in the tails.  Queries
    beyond the last node clamp to the edge value, which freezes the
    coefficients at |x| = domain_cutoff exactly like the direct scheme's
    guard interval.
    """

    y: np.ndarray
    rate1: np.ndarray
    fval: np.ndarray


def _clock_tables(model: DiffusionModel, f: Callable, n_nodes: int = 6001) -> _ClockTables:
    ss = model.scale_speed()
    g_top = math.asinh(model.domain_cutoff)
    x = np.sinh(np.linspace(-g_top, g_top, n_nodes))
    x[n_nodes // 2] = 0.0
    y = np.asarray(ss.scale(x), dtype=np.float64)
    psi = np.asarray(ss.scale_deriv(x), dtype=np.float64) \
        * np.asarray(_vectorized(model.diffusion)(x), dtype=np.float64)
    with np.errstate(over="ignore"):
        rate1 = (ss.kappa / psi) ** 2
    fval = np.asarray(_vectorized(f)(x), dtype=np.float64)
    ok = np.isfinite(y) & np.isfinite(rate1) & np.isfinite(fval)
    y, rate1, fval = y[ok], rate1[ok], fval[ok]
    keep = np.concatenate([[True], np.diff(y) > 0.0])
    return _ClockTables(y=y[keep], rate1=rate1[keep], fval=fval[keep])


def _timechange_block(tab: _ClockTables, kappa: float, cfg: SimConfig,
                      indices: np.ndarray, max_extensions: int):
    """Lockstep clock walk; returns (raw values, clipped steps, total steps).

    Per step, with a = eps/kappa and y = W * kappa/eps: the clock gains
    dA = (kappa^2/eps) * psi(y)^{-2} du and the functional
    dH = dA * f(s^{-1}(y))/eps, both left-rule; W then moves by
    sqrt(du) * Z with du = dt * max(a, |W|)^2.  When A crosses t_i, H is
    read by linear interpolation within the step.  The Brownian horizon
    starts at 16*max(1, t_n)^2 and doubles while any unfinished path is
    beyond it, failing after ``max_extensions`` doublings.
    """
    eps = cfg.epsilon
    a = eps / kappa
    y_scale = kappa / eps
    targets = np.asarray(cfg.horizon_times)
    n_t = targets.size
    width = len(indices)
    buf = NormalBuffer(cfg.seed, TAG_TIMECHANGE, indices)
    w = np.zeros(width)
    A = np.zeros(width)
    H = np.zeros(width)
    u = np.zeros(width)
    ti = np.zeros(width, dtype=np.int64)
    out = np.empty((width, n_t))
    horizon = 16.0 * max(1.0, targets[-1]) ** 2
    extensions = 0
    clipped = 0
    total = 0
    iters = 0
    active = np.arange(width)
    while active.size:
        iters += 1
        if iters > 10_000_000:
            raise HorizonExceeded(
                "time-change walk exceeded the iteration safety cap; "
                "dt may be too small for the requested horizon")
        wa = w[active]
        du = cfg.dt * np.maximum(a, np.abs(wa)) ** 2
        y = wa * y_scale
        rate = np.interp(y, tab.y, tab.rate1) / eps
        over = rate > _CLIP_RATE
        if np.any(over):
            clipped += int(np.count_nonzero(over))
            rate = np.where(over, _CLIP_RATE, rate)
        total += active.size
        dA = rate * du
        dH = dA * np.interp(y, tab.y, tab.fval) / eps
        newA = A[active] + dA
        crossing = newA >= targets[ti[active]]
        if np.any(crossing):
            for pos in np.nonzero(crossing)[0]:
                p = active[pos]
                j = ti[p]
                while j < n_t and newA[pos] >= targets[j]:
                    frac = (targets[j] - A[p]) / dA[pos]
                    out[p, j] = H[p] + frac * dH[pos]
                    j += 1
                ti[p] = j
        z = buf.draw(active)
        A[active] = newA
        H[active] += dH
        w[active] = wa + np.sqrt(du) * z
        u[active] += du
        active = active[ti[active] < n_t]
        while active.size and np.any(u[active] >= horizon):
            if extensions >= max_extensions:
                raise HorizonExceeded(
                    f"clock did not reach t = {targets[-1]:g} within the Brownian "
                    f"horizon {horizon:g} after {max_extensions} extensions "
                    f"({int(np.count_nonzero(u[active] >= horizon))} paths pending)")
            horizon *= 2.0
            extensions += 1
    return out, clipped, total


def _timechange_raw(model: DiffusionModel, f: Callable, cfg: SimConfig,
                    threads: int | None, max_extensions: int):
    """Raw time-change sample matrix plus the clock-rate clip fraction."""
    tab = _clock_tables(model, f)
    kappa = model.scale_speed().kappa
    blocks = [np.arange(lo, min(lo + _BLOCK, cfg.n_paths))
              for lo in range(0, cfg.n_paths, _BLOCK)]

    def run(idx):
        return _timechange_block(tab, kappa, cfg, idx, max_extensions)

    if threads is not None and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    raw = np.vstack([p[0] for p in parts])
    clipped = sum(p[1] for p in parts)
    total = sum(p[2] for p in parts)
    clip_fraction = clipped / total if total else 0.0
    if clip_fraction > _CLIP_TOL:
        raise InvalidRequest(
            f"clock rate hit the cap on {clip_fraction:.2%} of steps "
            f"(tolerance {_CLIP_TOL:.2%}); the run is not trustworthy")
    return raw, clip_fraction


# ---------------------------------------------------------------------------
# normalization and public entry points
# ---------------------------------------------------------------------------


def _normalized(raw: np.ndarray, law: LimitLaw, cfg: SimConfig) -> np.ndarray:
    """Apply the regime's rescaling to a raw sample matrix."""
    if law.ell_name != "1":
        raise InvalidRequest(
            "rescaling is implemented for a trivial slowly varying factor only; "
            f"this law carries ell = {law.ell_name!r}")
    eps = cfg.epsilon
    if law.regime == "Diffusive":
        return math.sqrt(eps) * raw
    if law.regime == "CriticalDiffusive":
        return math.sqrt(eps / abs(law.rho_eps(eps))) * raw
    if law.regime == "Levy":
        return eps ** (1.0 / law.alpha) * raw
    if law.regime == "CriticalLevy":
        t = np.asarray(cfg.horizon_times)
        return eps * raw - law.xi_eps(eps) * t[None, :]
    raise InvalidRequest(f"unknown regime {law.regime!r}")


def rescaled_functional(model: DiffusionModel, f: Callable, law: LimitLaw,
                        cfg: SimConfig, *, threads: int | None = None) -> FunctionalSample:
    """Sample the normalized functional under ``cfg.scheme``.

    The raw integrals ``int_0^{t_i/eps} f(X_s) ds`` are rescaled by the
    regime recorded on ``law``: sqrt(eps) (diffusive),
    sqrt(eps/rho_eps) (critical diffusive), eps^(1/alpha) (heavy-tailed), or
    eps * F - xi_eps * t_i (critical heavy-tailed, exact centering).  Runs
    are byte-identical for fixed ``cfg.seed`` whatever ``threads`` is.
    """
    if law is None:
        raise InvalidRequest("rescaled_functional needs a limit law; "
                             "use simulate_timechange for raw values")
    if cfg.scheme == "Direct":
        raw, n_exploded = _direct_raw(model, f, cfg, threads)
        clip = 0.0
    else:
        raw, clip = _timechange_raw(model, f, cfg, threads, max_extensions=48)
        n_exploded = 0
    return FunctionalSample(
        values=_normalized(raw, law, cfg), law=law, scheme=cfg.scheme,
        seed=cfg.seed, dt=cfg.dt, epsilon=cfg.epsilon, times=cfg.horizon_times,
        n_exploded=n_exploded, clip_fraction=clip)


def simulate_timechange(model: DiffusionModel, f: Callable, cfg: SimConfig,
                        law: LimitLaw | None = None, *, threads: int | None = None,
                        max_extensions: int = 48) -> FunctionalSample:
    """Sample the functional through the clock walk, skipping X entirely.

    With ``law=None`` the values are the raw integrals
    ``int_0^{t_i/eps} f(X_s) ds`` (equal in law to the direct scheme's raw
    values); passing a law applies the same normalization as
    :func:`rescaled_functional`.  ``cfg.scheme`` must be ``"TimeChange"``.
    """
    if cfg.scheme != "TimeChange":
        raise ConfigError(
            f"simulate_timechange needs cfg.scheme == 'TimeChange', got {cfg.scheme!r}")
    raw, clip = _timechange_raw(model, f, cfg, threads, max_extensions)
    values = raw if law is None else _normalized(raw, law, cfg)
    return FunctionalSample(
        values=values, law=law, scheme=cfg.scheme, seed=cfg.seed, dt=cfg.dt,
        epsilon=cfg.epsilon, times=cfg.horizon_times,
        n_exploded=0, clip_fraction=clip)
