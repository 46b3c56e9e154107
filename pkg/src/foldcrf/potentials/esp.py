"""Environment potential on Cα coordination counts.

``ESP(aa, n, R) = -ln P(n | R, aa) / P(n | R)`` where ``n`` counts Cα atoms
within 8.5 Å of a residue's Cα (itself excluded, capped at 40) and ``R`` is
the radius of gyration binned as below.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from foldcrf.geometry import radius_of_gyration
from foldcrf.residues import AMINO_ACIDS

CONTACT_RADIUS = 8.5
MAX_COUNT = 40
R_MIN, R_MAX = 7.0, 39.0
# 1 Å bins over [7, 39] with [7, 9), [34, 36) and [37, 39] merged
R_EDGES = np.array([7.0, 9.0, *np.arange(10.0, 35.0), 36.0, 37.0, 39.0])
N_RBINS = len(R_EDGES) - 1


def coordination_counts(trace: np.ndarray) -> np.ndarray:
    x = np.asarray(trace, dtype=float)
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    n = np.sum(d2 < CONTACT_RADIUS**2, axis=1) - 1
    return np.minimum(n, MAX_COUNT)


def r_bin(rg: float, warn: bool = True) -> int:
    if (rg < R_MIN or rg > R_MAX) and warn:
        # constant text so the default filter reports it once per call site
        warnings.warn(f"radius of gyration outside [{R_MIN:g}, {R_MAX:g}]; using the nearest bin",
                      RuntimeWarning, stacklevel=2)
    return int(np.clip(np.searchsorted(R_EDGES, rg, side="right") - 1, 0, N_RBINS - 1))


@dataclass
class EspTable:
    energy: np.ndarray  # (20, 41, N_RBINS), amino acids in AMINO_ACIDS order

    def __post_init__(self):
        self.energy = np.asarray(self.energy, dtype=float)
        if self.energy.shape != (len(AMINO_ACIDS), MAX_COUNT + 1, N_RBINS):
            raise ValueError("ESP table has the wrong shape")
        if not np.all(np.isfinite(self.energy)):
            raise ValueError("non-finite ESP entry")

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# coordination: Calpha within {CONTACT_RADIUS} A, capped at {MAX_COUNT}\n")
            fh.write("# rbin edges (A): " + " ".join(f"{e:g}" for e in R_EDGES) + "\n")
            fh.write("aa\tn\trbin\tenergy\n")
            for a, aa in enumerate(AMINO_ACIDS):
                for n in range(MAX_COUNT + 1):
                    for r in range(N_RBINS):
                        fh.write(f"{aa}\t{n}\t{r}\t{float(self.energy[a, n, r])!r}\n")

    @classmethod
    def read(cls, path) -> "EspTable":
        e = np.full((len(AMINO_ACIDS), MAX_COUNT + 1, N_RBINS), np.nan)
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if line.startswith("#") or not line.strip() or line.startswith("aa\t"):
                    continue
                parts = line.rstrip("\n").split("\t")
                try:
                    aa, n, r, val = parts[0], int(parts[1]), int(parts[2]), float(parts[3])
                    e[AMINO_ACIDS.index(aa), n, r] = val
                except (ValueError, IndexError):
                    raise ValueError(f"{path}:{lineno}: malformed ESP row") from None
        if np.isnan(e).any():
            raise ValueError(f"{path}: ESP table is incomplete")
        return cls(e)


def esp_counts(confs) -> np.ndarray:
    counts = np.zeros((len(AMINO_ACIDS), MAX_COUNT + 1, N_RBINS))
    for conf in confs:
        r = r_bin(radius_of_gyration(conf.trace))
        for aa, n in zip(conf.sequence, coordination_counts(conf.trace)):
            if aa in AMINO_ACIDS:
                counts[AMINO_ACIDS.index(aa), n, r] += 1
    return counts


def esp_from_counts(counts: np.ndarray, pseudocount: float = 1.0) -> EspTable:
    """Energies from raw counts; the pooled distribution sums the smoothed per-type counts."""
    c = np.asarray(counts, dtype=float) + pseudocount
    p_aa = c / c.sum(axis=1, keepdims=True)
    pooled = c.sum(axis=0)
    p_all = pooled / pooled.sum(axis=0, keepdims=True)
    return EspTable(-np.log(p_aa / p_all[None]))


def esp_build(confs, pseudocount: float = 1.0) -> EspTable:
    return esp_from_counts(esp_counts(confs), pseudocount)


def esp_energy(table: EspTable, conf) -> float:
    """Sum of per-residue ESP terms; residues of unknown type score 0."""
    r = r_bin(radius_of_gyration(conf.trace))
    total = 0.0
    for aa, n in zip(conf.sequence, coordination_counts(conf.trace)):
        if aa in AMINO_ACIDS:
            total += table.energy[AMINO_ACIDS.index(aa), n, r]
    return float(total)
