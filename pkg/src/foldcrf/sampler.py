"""Drawing label sequences and real-valued angles from a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from foldcrf import fb5
from foldcrf.anglemodel import lattice
from foldcrf.anglemodel.library import AngleStateLibrary
from foldcrf.anglemodel.model import AngleModel, Observation, potentials
from foldcrf.geometry import InternalCoords

MAX_SEGMENT = 15
SS_WEIGHTS = (1.0, 5.0, 3.0)  # helix, strand, loop
THETA_EPS = 1e-6


@dataclass(frozen=True)
class SegmentChoice:
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length


def _pot(model_or_pot, obs):
    if isinstance(model_or_pot, lattice.Potentials):
        return model_or_pot
    return potentials(model_or_pot, obs)


def sample_labels_full(model, obs: Observation | None, rng: np.random.Generator, size: int | None = None):
    """Exact draw(s) from P(S | obs).

    ``model`` may also be precomputed :class:`lattice.Potentials`.  With
    ``size=None`` a single 1-D label array is returned.
    """
    pot = _pot(model, obs)
    out = lattice.sample(pot, rng, 1 if size is None else size)
    return out[0] if size is None else out


def resample_labels_segment(model, obs, labels, seg: SegmentChoice, rng: np.random.Generator, size: int | None = None):
    """Redraw ``labels[seg]`` from its exact conditional given the other labels.

    Only the window that interacts with the segment (two extra positions on
    each side for second-order models) is put on the lattice; flanking
    positions are clamped to their current labels.
    """
    pot = _pot(model, obs)
    labels = np.asarray(labels)
    n = pot.n
    if seg.start < 0 or seg.stop > n or seg.length < 1:
        raise ValueError("segment outside the chain")
    reach = 2 if pot.trip is not None else 1
    lo = max(seg.start - reach, 0)
    hi = min(seg.stop + reach, n)
    sub = pot.window(lo, hi)
    allowed = np.ones((hi - lo, pot.n_states), dtype=bool)
    for i in range(lo, hi):
        if not seg.start <= i < seg.stop:
            allowed[i - lo] = False
            allowed[i - lo, labels[i]] = True
    draws = lattice.sample(sub.masked(allowed), rng, 1 if size is None else size)
    out = np.broadcast_to(labels, (len(draws), n)).copy()
    out[:, seg.start : seg.stop] = draws[:, seg.start - lo : seg.stop - lo]
    return out[0] if size is None else out


def draw_unit_vectors(labels, lib: AngleStateLibrary, rng: np.random.Generator) -> np.ndarray:
    """One FB5 draw per position.

    Positions sharing a state are drawn in one batch, states in ascending
    id order, positions in chain order within a state.
    """
    labels = np.asarray(labels)
    out = np.empty((len(labels), 3))
    for s in np.unique(labels):
        idx = np.flatnonzero(labels == s)
        out[idx] = fb5.sample(lib.states[s], rng, len(idx))
    return out


def draw_angles(labels, lib: AngleStateLibrary, rng: np.random.Generator):
    """(theta, tau) per position drawn from the labelled FB5 states."""
    theta, tau = fb5.unit_to_angles(draw_unit_vectors(labels, lib, rng))
    return np.clip(theta, THETA_EPS, np.pi - THETA_EPS), tau


def draw_angles_for_labels(labels, lib: AngleStateLibrary, rng: np.random.Generator, bond_length: float = 3.8) -> InternalCoords:
    """Internal coordinates for a full label sequence.

    Residue ``r`` contributes its theta (1 <= r <= n-2) and tau
    (2 <= r <= n-2); residues 1..n-2 are drawn, the termini carry no angles.
    """
    labels = np.asarray(labels)
    n = len(labels)
    theta, tau = draw_angles(labels[1 : n - 1], lib, rng)
    return InternalCoords(theta, tau[1:], bond_length)


def redraw_angles(ic: InternalCoords, labels, lib: AngleStateLibrary, seg: SegmentChoice, rng: np.random.Generator) -> InternalCoords:
    """Copy of ``ic`` with the angles of residues in ``seg`` redrawn."""
    n = ic.n_residues
    out = ic.copy()
    lo = max(seg.start, 1)
    hi = min(seg.stop, n - 1)
    if hi <= lo:
        return out
    theta, tau = draw_angles(np.asarray(labels)[lo:hi], lib, rng)
    for k, r in enumerate(range(lo, hi)):
        out.theta[r - 1] = theta[k]
        if r >= 2:
            out.tau[r - 2] = tau[k]
    return out


def choose_segment(ss: np.ndarray, rng: np.random.Generator, biased: bool = True, weights=SS_WEIGHTS,
                   length: int | None = None) -> SegmentChoice:
    """Pick a segment to resample.

    The length is uniform on 1..15 (clamped to the chain) unless given.  In biased mode
    the start is drawn with probability proportional to the summed weight of
    the segment's positions, each weighted by its most likely
    secondary-structure class.
    """
    ss = np.asarray(ss)
    n = len(ss)
    if length is None:
        length = int(rng.integers(1, MAX_SEGMENT + 1))
    length = min(length, n)
    if length < 1:
        raise ValueError("segment length must be positive")
    n_starts = n - length + 1
    if not biased:
        return SegmentChoice(int(rng.integers(n_starts)), length)
    pos_w = np.asarray(weights, dtype=float)[np.argmax(ss, axis=1)]
    csum = np.concatenate([[0.0], np.cumsum(pos_w)])
    seg_w = csum[length:] - csum[:n_starts]
    cdf = np.cumsum(seg_w)
    start = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return SegmentChoice(min(start, n_starts - 1), length)
