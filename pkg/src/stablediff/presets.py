"""Built-in model families and observable presets.

Three model families cover the qualitatively different tail behaviors:

* ``heavy_tailed(theta)`` — drift -((theta+1)/2) sgn(x)|x|^theta, unit noise.
  Scale grows like int e^{|v|^{theta+1}}, invariant density ~ e^{-|x|^{theta+1}}.
* ``kinetic(beta, c_plus, c_minus)`` — drift (beta/2)(log Theta)' with
  Theta(v) = h(v)/sqrt(1+v^2), h(v) = (c_+ + c_-)/2 + ((c_+ - c_-)/2) v/sqrt(1+v^2),
  so s' = Theta^-beta and the invariant density is proportional to Theta^beta
  with tail weights c_+^beta, c_-^beta.  With f = id the additive functional
  is the particle position and the limit index is alpha = (beta+1)/3.
* ``driftless(beta, gamma)`` — b = 0, sigma = (1+|x|)^{beta/2}; the scale is
  the identity and all tail behavior sits in the speed measure.

Models can also be loaded from a coefficient table (CSV columns x, b, sigma)
with linear interpolation between rows.

Observables: ``id``, ``centered_id`` (id minus its invariant mean),
``power(p)`` (x^p for integer p, sgn(x)|x|^p otherwise), ``table:<path>``
(CSV columns x, f with linear interpolation).
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError
from .model import DiffusionModel, invariant_integral

__all__ = [
    "heavy_tailed",
    "kinetic",
    "driftless",
    "from_table",
    "model_from_spec",
    "observable_from_spec",
    "kinetic_tail_limits",
    "PRESET_DOC",
]


def heavy_tailed(theta: float) -> DiffusionModel:
    """Polynomial inward drift with exp(-|x|^{theta+1}) invariant density."""
    if theta <= 0:
        raise ConfigError("heavy_tailed requires theta > 0")
    c = 0.5 * (theta + 1.0)

    def drift(x):
        x = np.asarray(x, dtype=np.float64)
        return -c * np.sign(x) * np.abs(x) ** theta

    # keep the exponent |x|^{theta+1} inside double range (overflow policy)
    cutoff = min(50.0, 676.0 ** (1.0 / (theta + 1.0)))
    return DiffusionModel(
        drift=drift,
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=np.float64)),
        domain_cutoff=cutoff,
        name=f"heavy_tailed({theta:g})",
    )


def _kinetic_funcs(beta: float, c_plus: float, c_minus: float):
    avg = 0.5 * (c_plus + c_minus)
    dif = 0.5 * (c_plus - c_minus)

    def h(v):
        return avg + dif * v / np.sqrt(1.0 + v * v)

    def h_prime(v):
        return dif * (1.0 + v * v) ** -1.5

    def theta(v):
        return h(v) / np.sqrt(1.0 + v * v)

    def dlog_theta(v):
        return h_prime(v) / h(v) - v / (1.0 + v * v)

    return theta, dlog_theta


def kinetic(beta: float, c_plus: float = 1.0, c_minus: float = 1.0) -> DiffusionModel:
    """Kinetic-family velocity process; alpha = (beta+1)/3 with f = id."""
    if beta <= 1:
        raise ConfigError("kinetic requires beta > 1 for positive recurrence")
    if c_plus <= 0 or c_minus <= 0:
        raise ConfigError("kinetic tail weights c_plus, c_minus must be positive")
    _, dlog_theta = _kinetic_funcs(beta, c_plus, c_minus)

    def drift(v):
        v = np.asarray(v, dtype=np.float64)
        return 0.5 * beta * dlog_theta(v)

    return DiffusionModel(
        drift=drift,
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=np.float64)),
        domain_cutoff=600.0,
        name=f"kinetic({beta:g},{c_plus:g},{c_minus:g})"
        if (c_plus, c_minus) != (1.0, 1.0) else f"kinetic({beta:g})",
    )


def kinetic_tail_limits(beta: float, c_plus: float = 1.0, c_minus: float = 1.0):
    """(alpha, f_plus, f_minus) for the kinetic family with f = id.

    The tail-ratio limit evaluates to f_± = ±(beta+1)^{1/alpha-2} c_±^{beta/alpha}
    once c_± is rescaled by Theta(0) = (c_+ + c_-)/2, which accounts for the
    s'(0) = 1 normalization of the scale function (|x| * Theta(x)/Theta(0)
    tends to c_±/Theta(0)).
    """
    alpha = (beta + 1.0) / 3.0
    theta0 = 0.5 * (c_plus + c_minus)
    lead = (beta + 1.0) ** (1.0 / alpha - 2.0)
    f_plus = lead * (c_plus / theta0) ** (beta / alpha)
    f_minus = -lead * (c_minus / theta0) ** (beta / alpha)
    return alpha, f_plus, f_minus


def driftless(beta: float, gamma: float) -> DiffusionModel:
    """Zero drift, sigma = (1+|x|)^{beta/2}; scale is the identity."""
    if beta <= 1:
        raise ConfigError("driftless requires beta > 1 for an integrable speed measure")

    def diffusion(x):
        x = np.asarray(x, dtype=np.float64)
        return (1.0 + np.abs(x)) ** (0.5 * beta)

    m = DiffusionModel(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        diffusion=diffusion,
        domain_cutoff=2000.0,
        name=f"driftless({beta:g},{gamma:g})",
    )
    return m


def driftless_observable(gamma: float) -> Callable:
    """The observable f(x) = x/(1+|x|)^{1-gamma} paired with ``driftless``."""

    def f(x):
        x = np.asarray(x, dtype=np.float64)
        return x / (1.0 + np.abs(x)) ** (1.0 - gamma)

    return f


def from_table(path: str | Path) -> DiffusionModel:
    """Model from a CSV coefficient table with columns x, b, sigma."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"coefficient table not found: {path}")
    xs, bs, ss = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip().lower() for c in header[:3]] != ["x", "b", "sigma"]:
            raise ConfigError("coefficient table must have header x,b,sigma")
        for row in reader:
            if not row:
                continue
            xs.append(float(row[0])); bs.append(float(row[1])); ss.append(float(row[2]))
    x = np.asarray(xs); b = np.asarray(bs); s = np.asarray(ss)
    order = np.argsort(x)
    x, b, s = x[order], b[order], s[order]
    if x.size < 2:
        raise ConfigError("coefficient table needs at least two rows")
    if np.any(s <= 0):
        raise ConfigError("coefficient table has non-positive sigma entries")
    cutoff = float(min(-x[0], x[-1]))
    if cutoff <= 0:
        raise ConfigError("coefficient table must bracket x = 0")
    return DiffusionModel(
        drift=lambda q: np.interp(q, x, b),
        diffusion=lambda q: np.interp(q, x, s),
        domain_cutoff=cutoff,
        name=f"table:{path.name}",
    )


# -- spec-string parsing (shared by the CLI and by tests) --------------------

_CALL_RE = re.compile(r"^([a-z_]+)\(([^)]*)\)$")


def _parse_args(argstr: str) -> list[float]:
    argstr = argstr.strip()
    if not argstr:
        return []
    return [float(a) for a in argstr.split(",")]


def model_from_spec(spec: str) -> DiffusionModel:
    """Parse strings like ``kinetic(3)``, ``heavy_tailed(1)``, ``table:m.csv``."""
    spec = spec.strip()
    if spec.startswith("table:"):
        return from_table(spec[len("table:"):])
    m = _CALL_RE.match(spec)
    if not m:
        raise ConfigError(f"unrecognized model spec: {spec!r}")
    fam, args = m.group(1), _parse_args(m.group(2))
    if fam == "heavy_tailed" and len(args) == 1:
        return heavy_tailed(*args)
    if fam == "kinetic" and len(args) in (1, 3):
        return kinetic(*args)
    if fam == "driftless" and len(args) == 2:
        return driftless(*args)
    raise ConfigError(f"unrecognized model spec: {spec!r}")


def observable_from_spec(spec: str, model: DiffusionModel | None = None) -> Callable:
    """Parse observable presets; ``centered_id`` needs the model for its mean."""
    spec = spec.strip()
    if spec == "id":
        return lambda x: np.asarray(x, dtype=np.float64)
    if spec == "centered_id":
        if model is None:
            raise ConfigError("centered_id requires a model to compute the invariant mean")
        mu_id = invariant_integral(model, lambda x: np.asarray(x, dtype=np.float64))
        return lambda x: np.asarray(x, dtype=np.float64) - mu_id
    if spec.startswith("table:"):
        path = Path(spec[len("table:"):])
        if not path.exists():
            raise ConfigError(f"observable table not found: {path}")
        data = np.genfromtxt(path, delimiter=",", names=True)
        xs = np.asarray(data["x"], dtype=np.float64)
        fs = np.asarray(data["f"], dtype=np.float64)
        order = np.argsort(xs)
        xs, fs = xs[order], fs[order]
        return lambda q: np.interp(q, xs, fs)
    m = _CALL_RE.match(spec)
    if m and m.group(1) == "power":
        (p,) = _parse_args(m.group(2))
        if float(p).is_integer():
            return lambda x: np.asarray(x, dtype=np.float64) ** int(p)
        return lambda x: np.sign(x) * np.abs(np.asarray(x, dtype=np.float64)) ** p
    raise ConfigError(f"unrecognized observable spec: {spec!r}")


PRESET_DOC = {
    "models": {
        "heavy_tailed(theta)": "polynomial inward drift, invariant density ~ exp(-|x|^(theta+1))",
        "kinetic(beta[,c_plus,c_minus])": "kinetic family, alpha=(beta+1)/3 with f=id; "
        "optional asymmetric tail weights",
        "driftless(beta,gamma)": "zero drift, sigma=(1+|x|)^(beta/2), identity scale",
        "table:<path>": "CSV coefficient table x,b,sigma (linear interpolation)",
    },
    "observables": {
        "id": "f(x) = x",
        "centered_id": "f(x) = x - mu(x)",
        "power(p)": "f(x) = x^p (integer p) or sgn(x)|x|^p",
        "table:<path>": "CSV table x,f (linear interpolation)",
    },
    "stable_presets": {
        "one_sided_half": "alpha=1/2, (a,b)=(1,0)",
        "compensated_three_half": "alpha=3/2, (a,b)=(1,-1)",
        "symmetric_cauchy_pair": "alpha=1, (a,b)=(1,1)",
    },
}
