"""Angle-state library: FB5 clusters over pseudo-angle unit vectors."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from foldcrf import fb5
from foldcrf.geometry import InternalCoords, internal_from_trace

log = logging.getLogger(__name__)

# smallest cluster fitted from its own members
MIN_CLUSTER = 10


@dataclass
class AngleStateLibrary:
    states: list[fb5.Fb5Params]

    def __len__(self):
        return len(self.states)

    def log_densities(self, u: np.ndarray) -> np.ndarray:
        """(m, n_states) FB5 log densities of unit vectors ``u``."""
        u = np.atleast_2d(u)
        return np.stack([fb5.log_density(s, u) for s in self.states], axis=1)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# {len(self.states)} FB5 states: kappa beta g1(3) g2(3) g3(3)\n")
            for s in self.states:
                fh.write(s.to_line() + "\n")

    @classmethod
    def read(cls, path) -> "AngleStateLibrary":
        states = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    states.append(fb5.Fb5Params.from_line(line))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        return cls(states)


def interior_vectors(ic: InternalCoords) -> np.ndarray:
    """Unit vectors of residues that have both theta and tau (indices 2..n-2)."""
    return fb5.angles_to_unit(ic.theta[1:], ic.tau)


def spherical_kmeans(x: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cosine k-means with k-means++ seeding; returns (centres, assignment)."""
    m = len(x)
    centres = np.empty((k, 3))
    centres[0] = x[rng.integers(m)]
    dist = 1.0 - x @ centres[0]
    for c in range(1, k):
        p = np.clip(dist, 0, None)
        p = p / p.sum() if p.sum() > 0 else np.full(m, 1.0 / m)
        centres[c] = x[rng.choice(m, p=p)]
        dist = np.minimum(dist, 1.0 - x @ centres[c])
    assign = np.full(m, -1)
    for _ in range(n_iter):
        sim = x @ centres.T
        new = np.argmax(sim, axis=1)
        for c in range(k):
            members = new == c
            if not members.any():
                far = int(np.argmin(sim[np.arange(m), new]))
                log.debug("empty cluster %d reseeded from point %d", c, far)
                centres[c] = x[far]
                new[far] = c
                sim[far] = x[far] @ centres.T
                continue
            mu = x[members].sum(axis=0)
            norm = np.linalg.norm(mu)
            if norm > 0:
                centres[c] = mu / norm
        if np.array_equal(new, assign):
            break
        assign = new
    return centres, assign


def estimate_state_library(traces, k: int = 100, seed: int = 0) -> AngleStateLibrary:
    vecs = np.vstack([interior_vectors(internal_from_trace(t)) for t in traces])
    if len(vecs) < 50 * k:
        raise ValueError(f"need at least {50 * k} angle observations, got {len(vecs)}")
    rng = np.random.default_rng(seed)
    centres, assign = spherical_kmeans(vecs, k, rng)
    states = []
    for c in range(k):
        members = vecs[assign == c]
        if len(members) < MIN_CLUSTER:
            # too few points for a moment fit: use the vectors nearest the centre instead
            warnings.warn(f"state {c} has {len(members)} members; fitting its {MIN_CLUSTER} nearest vectors",
                          RuntimeWarning, stacklevel=2)
            members = vecs[np.argsort(-(vecs @ centres[c]), kind="stable")[:MIN_CLUSTER]]
        states.append(fb5.fit_moments(members))
    return AngleStateLibrary(states)


def assign_labels(ic: InternalCoords, lib: AngleStateLibrary) -> np.ndarray:
    """Most likely state per residue; termini copy the nearest interior label."""
    n = ic.n_residues
    if n < 4:
        raise ValueError("need at least 4 residues for a full (theta, tau) pair")
    dens = lib.log_densities(interior_vectors(ic))
    inner = np.argmax(dens, axis=1)  # argmax keeps the lowest id on ties
    labels = np.empty(n, dtype=int)
    labels[2 : n - 1] = inner
    labels[:2] = inner[0]
    labels[n - 1] = inner[-1]
    return labels
