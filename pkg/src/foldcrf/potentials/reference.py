"""Reference distance distribution of two random points in a uniform sphere.

For a sphere of radius ``a = sqrt(5/3) r_g``::

    q(d) = 3 d^2 (d - 2a)^2 (d + 4a) / (16 a^6),   0 <= d <= 2a

which expands to ``3 (d^5 - 12 a^2 d^3 + 16 a^3 d^2) / (16 a^6)`` and has the
antiderivative ``Q(d) = 3 (d^6/6 - 3 a^2 d^4 + 16 a^3 d^3 / 3) / (16 a^6)``
with ``Q(2a) = 1``.
"""

from __future__ import annotations

import numpy as np

from foldcrf.pnn import estimate_rg

__all__ = ["sphere_radius", "reference_state_density", "reference_cdf", "bin_masses", "estimate_rg"]


def sphere_radius(rg: float) -> float:
    if rg <= 0:
        raise ValueError("radius of gyration must be positive")
    return float(np.sqrt(5.0 / 3.0) * rg)


def reference_state_density(d, rg: float):
    a = sphere_radius(rg)
    d = np.asarray(d, dtype=float)
    q = 3.0 * d**2 * (d - 2 * a) ** 2 * (d + 4 * a) / (16.0 * a**6)
    out = np.where((d >= 0) & (d <= 2 * a), q, 0.0)
    return float(out) if out.ndim == 0 else out


def reference_cdf(d, rg: float):
    """P(distance <= d) under the reference state."""
    a = sphere_radius(rg)
    x = np.clip(np.asarray(d, dtype=float), 0.0, 2 * a)
    big_q = 3.0 * (x**6 / 6.0 - 3.0 * a**2 * x**4 + 16.0 * a**3 * x**3 / 3.0) / (16.0 * a**6)
    out = np.clip(big_q, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def bin_masses(edges, rg: float) -> np.ndarray:
    """Reference mass of each bin delimited by interior ``edges``.

    The first bin starts at 0 and the last one runs to the sphere
    diameter, so the masses sum to 1.
    """
    cdf = reference_cdf(np.concatenate([[0.0], np.asarray(edges, dtype=float), [np.inf]]), rg)
    return np.diff(cdf)
