"""Five-parameter Fisher-Bingham (Kent) distribution on the unit sphere.

Density::

    f(u) = exp(kappa * g1.u + beta * ((g2.u)^2 - (g3.u)^2)) / c(kappa, beta)

with ``0 <= 2 beta <= kappa``.  The normalizer uses the Bessel series

    c = 2 pi sum_j Gamma(j + 1/2) / Gamma(j + 1) beta^(2j) (kappa/2)^(-2j-1/2) I_(2j+1/2)(kappa)

evaluated in log space, with a one-dimensional quadrature fallback.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

log = logging.getLogger(__name__)

KAPPA_MAX = 700.0
KAPPA_MIN = 1e-8
MAX_BETA_RATIO = 0.98
SERIES_TERMS = 200


@dataclass
class Fb5Params:
    kappa: float
    beta: float
    gamma1: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    gamma2: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    gamma3: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    log_c: float = field(init=False)

    def __post_init__(self):
        self.kappa = float(min(max(self.kappa, KAPPA_MIN), KAPPA_MAX))
        self.beta = float(self.beta)
        if self.beta < 0 or 2 * self.beta > self.kappa * (1 + 1e-12):
            raise ValueError(f"need 0 <= 2*beta <= kappa (kappa={self.kappa}, beta={self.beta})")
        frame = np.array([self.gamma1, self.gamma2, self.gamma3], dtype=float)
        if not np.allclose(frame @ frame.T, np.eye(3), atol=1e-9):
            raise ValueError("gamma1, gamma2, gamma3 must be orthonormal")
        self.gamma1, self.gamma2, self.gamma3 = frame
        self.log_c = log_normalizer(self.kappa, self.beta)

    @property
    def frame(self) -> np.ndarray:
        return np.array([self.gamma1, self.gamma2, self.gamma3])

    def to_line(self) -> str:
        vals = [self.kappa, self.beta, *self.gamma1, *self.gamma2, *self.gamma3]
        return " ".join(repr(float(v)) for v in vals)

    @classmethod
    def from_line(cls, line: str) -> "Fb5Params":
        vals = [float(x) for x in line.split()]
        if len(vals) != 11:
            raise ValueError(f"expected 11 numbers, got {len(vals)}")
        return cls(vals[0], vals[1], np.array(vals[2:5]), np.array(vals[5:8]), np.array(vals[8:11]))


def _log_series(kappa: float, beta: float) -> tuple[float, bool]:
    if beta == 0:
        # von Mises-Fisher: c = 4 pi sinh(kappa) / kappa
        return math.log(2 * math.pi) + kappa + math.log(-math.expm1(-2 * kappa)) - math.log(kappa), True
    j = np.arange(SERIES_TERMS)
    v = 2 * j + 0.5
    with np.errstate(divide="ignore"):
        log_i = np.log(special.ive(v, kappa)) + kappa
        terms = (
            special.gammaln(j + 0.5)
            - special.gammaln(j + 1)
            + 2 * j * math.log(beta)
            - v * math.log(kappa / 2)
            + log_i
        )
    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        return math.nan, False
    total = special.logsumexp(terms)
    converged = terms.size < 2 or terms[-1] - total < -36.0
    return math.log(2 * math.pi) + float(total), converged


def _log_quadrature(kappa: float, beta: float) -> float:
    # c = 2 pi int_0^2 exp(-kappa s) I0(beta s (2 - s)) ds * exp(kappa), s = 1 - t
    def g(s):
        z = beta * s * (2 - s)
        return math.exp(-kappa * s + z) * special.i0e(z)

    val, _ = integrate.quad(g, 0.0, 2.0, points=[min(1.0, 10.0 / kappa)], limit=400,
                            epsabs=0, epsrel=1e-13)
    return math.log(2 * math.pi) + kappa + math.log(val)


def log_normalizer(kappa: float, beta: float) -> float:
    val, ok = _log_series(kappa, beta)
    if ok and math.isfinite(val):
        return val
    return _log_quadrature(kappa, beta)


def log_density(p: Fb5Params, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    proj = u @ p.frame.T
    return p.kappa * proj[..., 0] + p.beta * (proj[..., 1] ** 2 - proj[..., 2] ** 2) - p.log_c


def density(p: Fb5Params, u) -> np.ndarray:
    return np.exp(log_density(p, u))


def sample(p: Fb5Params, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` unit vectors (n x 3).

    With ``s = 1 - g1.u`` and the azimuth ``phi`` measured from ``g2``, the
    density factorises into a marginal for ``s`` proportional to
    ``exp(-kappa s) I0(beta s (2 - s))`` and a von Mises law for ``2 phi``
    with concentration ``beta s (2 - s)``.  ``s`` is drawn by rejection from
    a truncated exponential with rate ``kappa - 2 beta``; acceptance is
    ``exp(-beta s^2) * i0e(z)``.
    """
    kappa, beta = p.kappa, p.beta
    rate = kappa - 2 * beta
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        x = rng.random(m)
        if rate > 1e-12:
            s = -np.log1p(x * np.expm1(-2.0 * rate)) / rate
        else:
            s = 2.0 * x
        z = beta * s * (2.0 - s)
        acc = rng.random(m) < np.exp(-beta * s * s) * special.i0e(z)
        s = s[acc][: n - filled]
        out[filled : filled + s.size] = s
        filled += s.size
    s = out
    z = beta * s * (2.0 - s)
    two_phi = np.where(z > 0, rng.vonmises(0.0, np.maximum(z, 1e-300)), rng.uniform(-np.pi, np.pi, n))
    phi = 0.5 * two_phi + np.pi * (rng.random(n) < 0.5)
    t = 1.0 - s
    r = np.sqrt(np.clip(s * (2.0 - s), 0.0, None))
    local = np.stack([t, r * np.cos(phi), r * np.sin(phi)], axis=1)
    u = local @ p.frame
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _moment_stats(u: np.ndarray):
    mean = u.mean(axis=0)
    r1 = np.linalg.norm(mean)
    scatter = u.T @ u / len(u)
    return mean, r1, scatter


def _complete_frame(g1: np.ndarray) -> np.ndarray:
    a = np.array([1.0, 0.0, 0.0]) if abs(g1[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e2 = a - (a @ g1) * g1
    e2 /= np.linalg.norm(e2)
    return np.array([g1, e2, np.cross(g1, e2)])


def fit_moments(samples) -> Fb5Params:
    """Moment fit of an FB5 distribution.

    Axes come from the mean direction and the eigenvectors of the scatter
    projected on the tangent plane.  Kent's closed-form approximations give
    starting values for (kappa, beta), which are then refined to solve the
    exact moment equations ``E[g1.u] = r1`` and
    ``E[(g2.u)^2 - (g3.u)^2] = r2`` under ``2 beta <= 0.98 kappa``.
    """
    u = np.asarray(samples, dtype=float)
    if u.ndim != 2 or u.shape[1] != 3 or len(u) < 10:
        raise ValueError("need at least 10 unit vectors")
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    mean, r1, scatter = _moment_stats(u)
    evals, evecs = np.linalg.eigh(scatter)
    if r1 > 1e-12:
        g1 = mean / r1
    else:
        g1 = evecs[:, -1]
    base = _complete_frame(g1)
    tangent = base[1:] @ scatter @ base[1:].T
    tv, tvec = np.linalg.eigh(tangent)
    g2 = tvec[:, 1] @ base[1:]
    g3 = tvec[:, 0] @ base[1:]
    g2 /= np.linalg.norm(g2)
    g3 = np.cross(g1, g2)
    r2 = float(tv[1] - tv[0])
    degenerate = evals[0] < 1e-12 * max(evals[-1], 1e-300)
    if degenerate:
        warnings.warn("rank-deficient scatter: beta set to 0", RuntimeWarning, stacklevel=2)
        r2 = 0.0
    r1 = min(float(r1), 1 - 1e-12)

    def negll(x):
        k = float(np.exp(x[0]))
        b = 0.0 if degenerate else float(x[1]) * k / 2
        return -(k * r1 + b * r2 - log_normalizer(k, b))

    # Kent (1982) large-concentration approximations as a start
    d1 = 2 - 2 * r1 - r2
    d2 = 2 - 2 * r1 + r2
    k0 = 1 / max(d1, 1e-12) + 1 / max(d2, 1e-12)
    b0 = 0.5 * (1 / max(d1, 1e-12) - 1 / max(d2, 1e-12))
    k0 = float(np.clip(k0, 1e-3, KAPPA_MAX))
    rho0 = float(np.clip(2 * b0 / k0, 0.0, MAX_BETA_RATIO))
    if r1 < 0.3:
        # near-uniform: vMF mean resultant ~ kappa / 3
        k0 = max(3 * r1, 1e-6)
    res = optimize.minimize(
        negll,
        x0=[math.log(k0), rho0],
        method="L-BFGS-B",
        bounds=[(math.log(KAPPA_MIN), math.log(KAPPA_MAX)), (0.0, MAX_BETA_RATIO)],
        options={"ftol": 1e-14, "gtol": 1e-10},
    )
    kappa = float(np.exp(res.x[0]))
    beta = 0.0 if degenerate else float(res.x[1]) * kappa / 2
    return Fb5Params(kappa, beta, g1, g2, g3)


def angles_to_unit(theta, tau) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(tau), st * np.sin(tau), np.cos(theta)], axis=-1)


def unit_to_angles(u) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`angles_to_unit`; tau is 0 at the poles."""
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
    tau = np.arctan2(u[..., 1], u[..., 0])
    tau = np.where(np.sin(theta) < 1e-12, 0.0, tau)
    tau = np.where(tau <= -np.pi, np.pi, tau)
    return theta, tau
