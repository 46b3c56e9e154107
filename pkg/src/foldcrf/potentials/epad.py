"""Position-specific distance potential driven by the PNN."""

from __future__ import annotations

import numpy as np

from foldcrf import pnn
from foldcrf.potentials.reference import bin_masses
from foldcrf.potentials.tables import (
    MIN_SEPARATION,
    ConditionalTable,
    PairPotential,
    _dmax,
    conditional_nonca_distribution,
    eligible_pairs,
    log_ratio_scores,
    pair_key,
    scheme_edges,
    site_type,
)


def pair_distributions(model: pnn.PnnModel, profile: np.ndarray, min_sep: int = MIN_SEPARATION):
    """Index arrays (i, j) with i < j and the PNN Cα bin probabilities of each pair."""
    n = len(profile)
    i, j = eligible_pairs(n, True, min_sep)
    if len(i) == 0:
        return i, j, np.zeros((0, pnn.N_BINS))
    x = pnn.pair_features(profile, np.column_stack([i, j]), n)
    return i, j, pnn.forward_distribution(model, x)


def epad_potential(model: pnn.PnnModel, profile: np.ndarray, rg: float | None = None,
                   min_sep: int = MIN_SEPARATION) -> PairPotential:
    """Per-pair ``-ln P_pnn(bin) / qbar(bin)`` for every Cα pair with ``j - i >= 3``."""
    rg = pnn.estimate_rg(len(profile)) if rg is None else rg
    edges, _ = scheme_edges("ca")
    i, j, p = pair_distributions(model, profile, min_sep)
    scores = log_ratio_scores(p, bin_masses(edges, rg)[None, :])
    return PairPotential(i, j, scores, edges, _dmax("ca", rg))


def epad_energy(model: pnn.PnnModel, profile: np.ndarray, conf, rg: float | None = None) -> float:
    return epad_potential(model, profile, rg).energy(conf)


def epad_nonca_potential(model: pnn.PnnModel, profile: np.ndarray, sequence, cond: ConditionalTable,
                         rg: float | None = None, min_sep: int = MIN_SEPARATION) -> PairPotential:
    """Non-Cα pair energies from PNN Cα distributions mixed through conditional rows.

    Ordered residue pairs whose type pair has no conditional row score 0.
    """
    rg = pnn.estimate_rg(len(profile)) if rg is None else rg
    atoms = cond.atoms
    i_u, j_u, p_ca = pair_distributions(model, profile, min_sep)
    lookup = {(a, b): k for k, (a, b) in enumerate(zip(i_u, j_u))}
    i, j = eligible_pairs(len(profile), atoms[0] == atoms[1], min_sep)
    edges, _ = scheme_edges("nonca")
    qbar = bin_masses(edges, rg)
    scores = np.zeros((len(i), len(edges) + 1))
    for k, (a, b) in enumerate(zip(i, j)):
        row = cond.lookup(site_type(sequence[a], atoms[0]), site_type(sequence[b], atoms[1]))
        if row is None:
            continue
        p = conditional_nonca_distribution(row, p_ca[lookup[(min(a, b), max(a, b))]])
        scores[k] = log_ratio_scores(p, qbar)
    return PairPotential(i, j, scores, edges, _dmax("nonca", rg), tuple(atoms))


__all__ = ["epad_energy", "epad_nonca_potential", "epad_potential", "pair_distributions", "pair_key"]
