"""Reference stable laws, two independent ways.

Route one samples a stable law directly from its characteristic function via
the classical trigonometric (CMS) transform of a uniform and an exponential
variate.  Route two builds the same law pathwise from a Brownian motion: an
additive functional of the path (a weighted integral of its local-time field,
compensated at the origin) is read off at inverse-local-time instants, which
turns it into a stable process.  Agreement of the two routes is what the
validation layer checks; neither route knows about diffusions or regimes.

The module also carries the discrete local-time machinery the pathwise route
needs: occupation-based estimates of ``L_t^x`` on a single simulated path
(:class:`BrownianGrid`) and the inverse of the estimated local time at the
origin.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import TAG_CMS, TAG_EXCURSION, TAG_GRID, NormalBuffer, stream
from .asymptotics import EULER_GAMMA, LimitLaw, _lambda_alpha
from .errors import HorizonExceeded, InvalidAlpha, InvalidRequest

__all__ = [
    "BrownianGrid",
    "StableSpec",
    "estimate_local_time",
    "inverse_local_time",
    "local_time_field",
    "sample_limit_law",
    "sample_stable_cf",
    "stable_cf",
    "stable_via_excursions",
]

_BLOCK = 512          # paths per work unit; fixed so results never depend on threads
_HALF_PI = math.pi / 2.0


def _signed_power(x: float, alpha: float) -> float:
    return math.copysign(abs(x) ** alpha, x)


def _xlogx(x: float) -> float:
    return x * math.log(abs(x)) if x != 0.0 else 0.0


@dataclass(frozen=True)
class StableSpec:
    """A stable law written in jump-weight form.

    ``a`` and ``b`` weight the positive and negative jumps.  The derived
    parameters give the characteristic function

        alpha != 1:  exp(-c t |xi|^alpha (1 - i beta tan(pi alpha/2) sgn xi))
        alpha == 1:  exp(-c t |xi| (1 + i beta (2/pi) log|xi| sgn xi) + i tau t xi)

    At ``alpha == 2`` the jump picture degenerates (the skew prefactor is
    singular there), so the convention is ``c = a^2 + b^2`` and the law is the
    centered Gaussian with variance ``2 c t``.

    ``a = b = 0`` is allowed as an explicit degenerate (c = 0, the point mass
    at 0) so that the pathwise construction can be exercised with zero weight.
    """

    alpha: float
    a: float
    b: float
    c: float = field(init=False)
    beta: float = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self) -> None:
        alpha, a, b = self.alpha, self.a, self.b
        if not (math.isfinite(alpha) and 0.0 < alpha <= 2.0):
            raise InvalidAlpha(f"alpha must lie in (0, 2], got {alpha!r}")
        if not (math.isfinite(a) and math.isfinite(b)):
            raise InvalidRequest("jump weights a, b must be finite")
        wsum = abs(a) ** alpha + abs(b) ** alpha
        if alpha == 2.0:
            c = a * a + b * b
        else:
            c = _lambda_alpha(alpha, 1.0) * wsum
        beta = (_signed_power(a, alpha) + _signed_power(b, alpha)) / wsum \
            if wsum > 0.0 else 0.0
        tau = 0.0
        if alpha == 1.0:
            tau = -((a + b) * (2.0 * EULER_GAMMA + math.log(2.0))
                    + _xlogx(a) + _xlogx(b))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "tau", tau)

    def sgn_ab(self, x: np.ndarray) -> np.ndarray:
        """a on (0, inf), b on (-inf, 0), zero at 0."""
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0.0, self.a, np.where(x < 0.0, self.b, 0.0))


def stable_cf(spec: StableSpec, xi, t: float):
    """Characteristic function E exp(i xi S_t) of the law of ``spec``."""
    if not (math.isfinite(t) and t >= 0.0):
        raise InvalidRequest(f"t must be finite and >= 0, got {t!r}")
    xi_arr = np.asarray(xi, dtype=np.float64)
    axi = np.abs(xi_arr)
    sgn = np.sign(xi_arr)
    if spec.alpha == 1.0:
        logt = np.log(np.where(axi > 0.0, axi, 1.0))
        expo = (-spec.c * t * axi * (1.0 + 1j * spec.beta * (2.0 / math.pi) * logt * sgn)
                + 1j * spec.tau * t * xi_arr)
    else:
        skew = 0.0 if spec.alpha == 2.0 else spec.beta * math.tan(_HALF_PI * spec.alpha)
        expo = -spec.c * t * axi ** spec.alpha * (1.0 - 1j * skew * sgn)
    out = np.exp(expo)
    return out if out.ndim else complex(out)


def sample_stable_cf(spec: StableSpec, t: float, n: int, seed: int = 0) -> np.ndarray:
    """n independent samples of S_t by the trigonometric transform.

    With U uniform on (-pi/2, pi/2) and E standard exponential, the standard
    transform produces a unit stable variate in the one-parametrization; the
    output is then scaled by (c t)^{1/alpha}, plus, at alpha = 1, the
    log-of-scale drift correction and the tau shift.
    """
    if not (math.isfinite(t) and t > 0.0):
        raise InvalidRequest(f"t must be positive, got {t!r}")
    if n < 1:
        raise InvalidRequest(f"need n >= 1 samples, got {n}")
    if spec.c == 0.0:
        return np.zeros(n)
    gen = stream(seed, TAG_CMS, 0)
    u = gen.uniform(-_HALF_PI, _HALF_PI, n)
    e = gen.standard_exponential(n)
    alpha, beta = spec.alpha, spec.beta
    if alpha == 1.0:
        bu = _HALF_PI + beta * u
        z = (bu * np.tan(u) - beta * np.log(_HALF_PI * e * np.cos(u) / bu)) / _HALF_PI
        scale = spec.c * t
        return scale * z + (2.0 / math.pi) * beta * scale * math.log(scale) + spec.tau * t
    theta = 0.0 if alpha == 2.0 else math.tan(_HALF_PI * alpha)
    shift = math.atan(beta * theta) / alpha
    s_ab = (1.0 + beta * beta * theta * theta) ** (1.0 / (2.0 * alpha))
    z = (s_ab * np.sin(alpha * (u + shift)) / np.cos(u) ** (1.0 / alpha)
         * (np.cos(u - alpha * (u + shift)) / e) ** ((1.0 - alpha) / alpha))
    return (spec.c * t) ** (1.0 / alpha) * z


def sample_limit_law(law: LimitLaw, t: float, n: int, seed: int = 0) -> np.ndarray:
    """Sample the limiting variable of a classified diffusion at time t.

    Diffusive regimes are Gaussian with variance sigma_alpha^2 t.  The stable
    regimes reduce to the jump-weight law of (alpha, f_plus, f_minus) scaled
    by kappa^{1/alpha}: the characteristic exponents match identically, which
    the test-suite pins at machine precision.
    """
    if not (math.isfinite(t) and t > 0.0):
        raise InvalidRequest(f"t must be positive, got {t!r}")
    if n < 1:
        raise InvalidRequest(f"need n >= 1 samples, got {n}")
    if law.regime in ("Diffusive", "CriticalDiffusive"):
        z = stream(seed, TAG_CMS, 0).standard_normal(n)
        return law.sigma_alpha * math.sqrt(t) * z
    spec = StableSpec(law.alpha, law.f_plus, law.f_minus)
    return law.kappa ** (1.0 / law.alpha) * sample_stable_cf(spec, t, n, seed)


# ---------------------------------------------------------------------------
# Single-path Brownian grid with occupation-based local time
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BrownianGrid:
    """A Brownian path on a uniform time grid with local-time estimators.

    Occupation time is accumulated with the left-endpoint rule: the interval
    [k dt, (k+1) dt) counts toward the window that contains W_k.  Local time
    at level x uses the window (x - delta, x + delta) divided by 2 delta.
    """

    dt: float
    steps: int
    seed: int
    delta: float
    W: np.ndarray
    _l0cum: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def simulate(cls, dt: float, steps: int, seed: int = 0,
                 delta: float | None = None) -> "BrownianGrid":
        if not (math.isfinite(dt) and dt > 0.0):
            raise InvalidRequest(f"dt must be positive, got {dt!r}")
        if steps < 1:
            raise InvalidRequest(f"need steps >= 1, got {steps}")
        if delta is None:
            delta = math.sqrt(dt)
        elif not (math.isfinite(delta) and delta > 0.0):
            raise InvalidRequest(f"delta must be positive, got {delta!r}")
        z = stream(seed, TAG_GRID, 0).standard_normal(steps)
        w = np.empty(steps + 1, dtype=np.float64)
        w[0] = 0.0
        np.cumsum(z * math.sqrt(dt), out=w[1:])
        return cls(dt=dt, steps=steps, seed=seed, delta=float(delta), W=w)

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def _split_time(self, t: float) -> tuple[int, float]:
        """Whole steps before t and the remainder, guarding float roundoff."""
        if not (0.0 <= t <= self.horizon * (1.0 + 1e-12)):
            raise InvalidRequest(
                f"t = {t!r} outside the simulated horizon [0, {self.horizon:.6g}]")
        k = min(int(t / self.dt + 1e-12), self.steps)
        return k, max(t - k * self.dt, 0.0)

    def _l0_running(self) -> np.ndarray:
        if self._l0cum is None:
            w = self.W[:-1]
            inside = (w >= -self.delta) & (w < self.delta)
            cum = np.empty(self.steps + 1, dtype=np.float64)
            cum[0] = 0.0
            np.cumsum(inside * (self.dt / (2.0 * self.delta)), out=cum[1:])
            self._l0cum = cum
        return self._l0cum


def estimate_local_time(grid: BrownianGrid, level: float, t: float) -> float:
    """(1/2 delta) * occupation time of [level - delta, level + delta) up to t.

    The window is half-open so that it coincides with the floor-binning of
    ``local_time_field`` even when a sample sits exactly on a cell edge (the
    deterministic W_0 = 0 does, at levels +-delta).
    """
    k, rem = grid._split_time(t)
    lo, hi = level - grid.delta, level + grid.delta
    w = grid.W
    occ = np.count_nonzero((w[:k] >= lo) & (w[:k] < hi)) * grid.dt
    if rem > 0.0 and lo <= w[k] < hi:
        occ += rem
    return occ / (2.0 * grid.delta)


def local_time_field(grid: BrownianGrid,
                     t: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Estimated L_t^x on the delta-spaced level grid covering the path range.

    Levels sit at integer multiples of delta; the value at level x agrees with
    ``estimate_local_time(grid, x, t)`` (the two share the same half-open
    binning) up to float summation order, computed for all levels in one pass.
    """
    if t is None:
        t = grid.horizon
    k, rem = grid._split_time(t)
    delta = grid.delta
    w = grid.W[:k + 1] if rem > 0.0 else grid.W[:max(k, 1)]
    wts = np.full(w.size, grid.dt)
    if rem > 0.0:
        wts[-1] = rem
    elif k == 0:
        wts[0] = 0.0
    bins = np.floor(w / delta).astype(np.int64)
    jmin, jmax = int(bins.min()), int(bins.max())
    cnt = np.bincount(bins - jmin, weights=wts, minlength=jmax - jmin + 1)
    padded = np.concatenate(([0.0], cnt, [0.0]))
    levels = np.arange(jmin, jmax + 2) * delta
    values = (padded[:-1] + padded[1:]) / (2.0 * delta)
    return levels, values


def inverse_local_time(grid: BrownianGrid, t: float) -> float:
    """First time the running origin local-time estimate exceeds t."""
    if not (math.isfinite(t) and t >= 0.0):
        raise InvalidRequest(f"t must be finite and >= 0, got {t!r}")
    if t == 0.0:
        return 0.0
    l0 = grid._l0_running()
    if t >= l0[-1]:
        raise HorizonExceeded(
            f"origin local time reaches only {l0[-1]:.6g} over the horizon "
            f"{grid.horizon:.6g}; cannot invert at t = {t:.6g}")
    k = int(np.searchsorted(l0, t, side="right"))
    # l0[k] > t >= l0[k-1]; the bracketing step has a strictly positive
    # increment, so the interpolation below is well defined.
    return (k - 1) * grid.dt + (t - l0[k - 1]) / (l0[k] - l0[k - 1]) * grid.dt


# ---------------------------------------------------------------------------
# Pathwise construction: K evaluated at inverse local time
# ---------------------------------------------------------------------------


class _EngineTables:
    """Per-(spec, dt) precomputation for the excursion engine.

    For alpha >= 1 the weight |x|^{1/alpha - 2} is not integrable through 0,
    so K splits into a near field on [-1, 1] (binned local-time estimates
    against exact cell integrals of the weight, compensated by L^0) and a far
    field |x| > 1 evaluated as a running time integral via the occupation
    identity, with its L^0 compensator in closed form.  For alpha < 1 the
    whole of K is the running time integral of an integrable weight.
    """

    def __init__(self, spec: StableSpec, dt: float):
        self.spec = spec
        self.p = 1.0 / spec.alpha - 2.0
        self.q = self.p + 1.0
        self.sqdt = math.sqrt(dt)
        self.near = spec.alpha >= 1.0
        if not self.near:
            return
        n_half = max(4, round(1.0 / self.sqdt))
        self.delta = 1.0 / n_half     # divides 1 exactly: +-1 and 0 are cell edges
        self.n_cells = 2 * (n_half + 1)
        self.edges = (np.arange(self.n_cells + 1) - (n_half + 1)) * self.delta
        el, er = self.edges[:-1], self.edges[1:]
        w = np.zeros(self.n_cells)
        a, b, q = spec.a, spec.b, self.q
        pos = el >= 0.0
        neg = er <= 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            if spec.alpha == 1.0:
                w[pos] = a * np.log(er[pos] / np.where(el[pos] > 0, el[pos], 1.0))
                w[neg] = b * np.log(np.abs(el[neg]) / np.where(er[neg] < 0, np.abs(er[neg]), 1.0))
            else:
                w[pos] = a * (er[pos] ** q - el[pos] ** q) / q
                w[neg] = b * (np.abs(el[neg]) ** q - np.abs(er[neg]) ** q) / q
        # outermost cells lie beyond [-1, 1] (bandwidth padding only) and the
        # two cells touching 0 are dropped with their compensator mass
        w[[0, self.n_cells - 1, n_half, n_half + 1]] = 0.0
        self.weights = w
        cfar = (a + b) / abs(q) if spec.alpha > 1.0 else 0.0
        self.compensator = w.sum() + cfar

    def far_anti(self, x: np.ndarray) -> np.ndarray:
        """Antiderivative of sgn_ab(x)|x|^p 1{|x|>1}; identically 0 on [-1,1]."""
        a, b, q = self.spec.a, self.spec.b, self.q
        ax = np.maximum(np.abs(x), 1.0)
        if self.spec.alpha == 1.0:
            core = np.log(ax)
        else:
            core = (ax ** q - 1.0) / q
        return np.where(x >= 0.0, a * core, -b * core)

    def full_anti(self, x: np.ndarray) -> np.ndarray:
        """Antiderivative of sgn_ab(x)|x|^p, alpha < 1 (q > 0, continuous at 0)."""
        a, b, q = self.spec.a, self.spec.b, self.q
        core = np.abs(x) ** q / q
        return np.where(x >= 0.0, a * core, -b * core)

    def anti(self, x: np.ndarray) -> np.ndarray:
        return self.far_anti(x) if self.near else self.full_anti(x)

    def point_weight(self, x: np.ndarray) -> np.ndarray:
        """Integrand value for degenerate (zero-span) steps, singularity floored."""
        ax = np.maximum(np.abs(x), self.sqdt)
        val = ax ** self.p
        if self.near:
            val = np.where(np.abs(x) > 1.0, val, 0.0)
        return self.spec.sgn_ab(x) * val


def _near_field(diff_rows: np.ndarray, corr_rows: np.ndarray,
                tab: _EngineTables) -> np.ndarray:
    """Weighted near-field integral for each given row's current bins."""
    occ = np.cumsum(diff_rows[:, :-1], axis=1) * tab.delta + corr_rows
    padded = np.pad(occ, ((0, 0), (1, 1)))
    # window of width 2 delta centred on each cell: the cell plus half of
    # each neighbour, matching the origin estimator's bandwidth
    fld = (padded[:, 1:-1] + 0.5 * (padded[:, :-2] + padded[:, 2:])) / (2.0 * tab.delta)
    return fld @ tab.weights


def _excursion_block(spec: StableSpec, tab: _EngineTables, t_arr: np.ndarray,
                     dt: float, seed: int, path_lo: int, m: int,
                     step_cap: int) -> np.ndarray:
    nt = t_arr.size
    out = np.empty((m, nt), dtype=np.float64)
    buf = NormalBuffer(seed, TAG_EXCURSION, np.arange(path_lo, path_lo + m))
    w_cur = np.zeros(m)
    l0 = np.zeros(m)
    kfar = np.zeros(m)
    ti = np.zeros(m, dtype=np.int64)
    iters = 0
    delta0 = tab.sqdt                      # origin bandwidth = sqrt(dt)
    if tab.near:
        diff = np.zeros((m, tab.n_cells + 1))
        corr = np.zeros((m, tab.n_cells))
        e0 = tab.edges[0]
        top = tab.edges[-1]
    active = np.arange(m)
    while active.size:
        wa = w_cur[active]
        # level-dependent step: fine near the origin, coarse far away, so a
        # step is never large relative to the distance to 0
        step = np.maximum(dt, (0.1 * np.abs(wa)) ** 2)
        z = buf.draw(active)
        w1 = wa + np.sqrt(step) * z
        lo = np.minimum(wa, w1)
        hi = np.maximum(wa, w1)
        span = hi - lo
        tiny = span <= 1e-9
        span_safe = np.where(tiny, 1.0, span)
        # origin local time: linear-bridge overlap with (-delta0, delta0)
        overlap = np.clip(np.minimum(hi, delta0) - np.maximum(lo, -delta0), 0.0, None)
        frac0 = np.where(tiny, np.abs(wa) < delta0, overlap / span_safe)
        dl = step * frac0 / (2.0 * delta0)
        # running time-integral part of K (all of K when alpha < 1)
        dk = step * np.where(
            tiny,
            tab.point_weight(wa),
            (tab.anti(w1) - tab.anti(wa)) / np.where(tiny, 1.0, w1 - wa))
        if tab.near:
            lo_c = np.maximum(lo, e0)
            hi_c = np.minimum(hi, top)
            reg = (hi_c > lo_c) & ~tiny
            if np.any(reg):
                rows = active[reg]
                dens = step[reg] / span[reg]
                il = np.clip(((lo_c[reg] - e0) / tab.delta).astype(np.int64),
                             0, tab.n_cells - 1)
                ih = np.clip(((hi_c[reg] - e0) / tab.delta).astype(np.int64),
                             0, tab.n_cells - 1)
                # rows are unique within a step, so fancy-indexed += is safe
                diff[rows, il] += dens
                diff[rows, ih + 1] -= dens
                corr[rows, il] -= dens * (lo_c[reg] - (e0 + il * tab.delta))
                corr[rows, ih] -= dens * ((e0 + (ih + 1) * tab.delta) - hi_c[reg])
            pm = tiny & (np.abs(wa) < top)
            if np.any(pm):
                rows = active[pm]
                ic = np.clip(((wa[pm] - e0) / tab.delta).astype(np.int64),
                             0, tab.n_cells - 1)
                corr[rows, ic] += step[pm]
        l0n = l0[active] + dl
        tia = ti[active].copy()
        while True:
            crossed = (tia < nt) & (l0n > t_arr[np.minimum(tia, nt - 1)])
            if not np.any(crossed):
                break
            rl = np.nonzero(crossed)[0]
            rows = active[rl]
            frac = (t_arr[tia[rl]] - l0[rows]) / dl[rl]
            val = kfar[rows] + frac * dk[rl]
            if tab.near:
                # near field and its compensator are taken at the end of the
                # crossing step; the single-step mismatch with the fractional
                # time part is far below the estimator noise
                val = val + _near_field(diff[rows], corr[rows], tab) \
                    - l0n[rl] * tab.compensator
            out[rows, tia[rl]] = val
            tia[rl] += 1
        w_cur[active] = w1
        l0[active] = l0n
        kfar[active] += dk
        ti[active] = tia
        iters += 1
        if iters > step_cap:
            raise HorizonExceeded(
                f"a path exceeded {step_cap} steps before its local-time target; "
                f"dt = {dt:g} is too small relative to the requested horizon")
        active = active[tia < nt]
    return out


def stable_via_excursions(spec: StableSpec, t_points, dt: float, n_paths: int,
                          seed: int = 0, *, threads: int | None = None) -> np.ndarray:
    """Samples of K at inverse-local-time instants, one row per path.

    K is the weighted Brownian local-time functional whose law, read at the
    inverse local time of the origin, is the stable law of ``spec``; the
    branch (running time integral, compensated field on [-1, 1] plus far-field
    time integral, or the log-weight truncated form) follows alpha.  Returns
    an (n_paths, len(t_points)) array; column j holds K at tau_{t_j}.
    """
    if not (0.0 < spec.alpha < 2.0):
        raise InvalidAlpha(
            f"the pathwise construction covers alpha in (0, 2), got {spec.alpha}; "
            "alpha = 2 is Gaussian and needs no construction")
    t_arr = np.atleast_1d(np.asarray(t_points, dtype=np.float64)).ravel()
    if t_arr.size == 0 or not np.all(np.isfinite(t_arr)) or t_arr[0] <= 0.0 \
            or np.any(np.diff(t_arr) <= 0.0):
        raise InvalidRequest("t_points must be strictly increasing and positive")
    if not (math.isfinite(dt) and 0.0 < dt <= 0.25):
        raise InvalidRequest(f"dt must lie in (0, 0.25], got {dt!r}")
    if n_paths < 1:
        raise InvalidRequest(f"need n_paths >= 1, got {n_paths}")
    tab = _EngineTables(spec, dt)
    step_cap = max(20_000_000, int(2000.0 * (t_arr[-1] + 1.0) / tab.sqdt))
    blocks = [(lo, min(lo + _BLOCK, n_paths)) for lo in range(0, n_paths, _BLOCK)]

    def run(block: tuple[int, int]) -> np.ndarray:
        lo, hi = block
        return _excursion_block(spec, tab, t_arr, dt, seed, lo, hi - lo, step_cap)

    if threads is not None and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return np.vstack(parts)
