"""Backbone N–H···O=C hydrogen-bond geometry and a table-driven energy.

For donor residue ``i`` (N–H) and acceptor residue ``j`` (C=O):

* ``distance``: between the midpoints of the N–H and C=O bonds
* ``theta``: angle N–H···O at the hydrogen (pi when collinear)
* ``psi``: angle C=O···H at the oxygen (pi when collinear)
* ``chi``: dihedral H–O–C–Cα(j) about the acceptor base bond
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from foldcrf.geometry import BackboneAtoms, bond_angle, dihedral

CENTER_CUTOFF = 5.0
MIN_SEPARATION = 2
DESCRIPTORS = ("distance", "theta", "psi", "chi")


@dataclass(frozen=True)
class HbondGeometry:
    donor: int
    acceptor: int
    distance: float
    theta: float
    psi: float
    chi: float


def hbond_arrays(bb: BackboneAtoms, cutoff: float = CENTER_CUTOFF, min_sep: int = MIN_SEPARATION):
    """Descriptor arrays ``(donor, acceptor, distance, theta, psi, chi)`` of candidate pairs."""
    has_h = np.all(np.isfinite(bb.HN), axis=1)
    donors = np.flatnonzero(has_h)
    n = len(bb)
    dmid = 0.5 * (bb.N[donors] + bb.HN[donors])
    amid = 0.5 * (bb.C + bb.O)
    dist = np.linalg.norm(dmid[:, None, :] - amid[None, :, :], axis=-1)
    sep = np.abs(donors[:, None] - np.arange(n)[None, :])
    di, aj = np.nonzero((dist < cutoff) & (sep >= min_sep))
    i, j = donors[di], aj
    h, o = bb.HN[i], bb.O[j]
    theta = bond_angle(bb.N[i], h, o)
    psi = bond_angle(bb.C[j], o, h)
    chi = dihedral(h, o, bb.C[j], bb.CA[j])
    return i, j, dist[di, aj], theta, psi, chi


def hbond_descriptors(bb: BackboneAtoms, cutoff: float = CENTER_CUTOFF) -> list[HbondGeometry]:
    """Candidate pairs with bond-centre distance below ``cutoff`` and ``|i - j| >= 2``.

    Donors without a placed hydrogen are skipped.
    """
    cols = hbond_arrays(bb, cutoff)
    return [HbondGeometry(int(a), int(b), float(c), float(d), float(e), float(f)) for a, b, c, d, e, f in zip(*cols)]


@dataclass
class HbondTable:
    """Energies over a (distance, theta, psi, chi) grid.

    ``edges[k]`` are the full bin boundaries of descriptor ``k``; values
    outside the outer edges do not score.
    """

    edges: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    energy: np.ndarray

    def __post_init__(self):
        self.edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        self.energy = np.asarray(self.energy, dtype=float)
        shape = tuple(len(e) - 1 for e in self.edges)
        if len(self.edges) != 4 or self.energy.shape != shape:
            raise ValueError(f"energy grid must have shape {shape}")
        if not np.all(np.isfinite(self.energy)):
            raise ValueError("non-finite hydrogen-bond energy")

    def pair_energies(self, distance, theta, psi, chi) -> np.ndarray:
        vals = (distance, theta, psi, chi)
        idx = []
        ok = np.ones(len(distance), dtype=bool)
        for e, v in zip(self.edges, vals):
            k = np.searchsorted(e, v, side="right") - 1
            ok &= (k >= 0) & (k < len(e) - 1)
            idx.append(np.clip(k, 0, len(e) - 2))
        return np.where(ok, self.energy[tuple(idx)], 0.0)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for name, e in zip(DESCRIPTORS, self.edges):
                fh.write(f"# edges {name} " + " ".join(repr(float(x)) for x in e) + "\n")
            fh.write("distance_bin\ttheta_bin\tpsi_bin\tchi_bin\tenergy\n")
            for idx in np.ndindex(self.energy.shape):
                fh.write("\t".join(str(k) for k in idx) + f"\t{float(self.energy[idx])!r}\n")

    @classmethod
    def read(cls, path) -> "HbondTable":
        edges = {}
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if line.startswith("# edges"):
                    parts = line.split()
                    edges[parts[2]] = np.array([float(x) for x in parts[3:]])
                    continue
                if line.startswith("#") or not line.strip() or line.startswith("distance_bin"):
                    continue
                parts = line.split()
                if len(parts) != 5:
                    raise ValueError(f"{path}:{lineno}: expected 5 fields")
                try:
                    rows.append((tuple(int(p) for p in parts[:4]), float(parts[4])))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad number") from None
        missing = [d for d in DESCRIPTORS if d not in edges]
        if missing:
            raise ValueError(f"{path}: missing edges for {', '.join(missing)}")
        e = tuple(edges[d] for d in DESCRIPTORS)
        grid = np.full(tuple(len(x) - 1 for x in e), np.nan)
        for idx, val in rows:
            if any(not 0 <= k < m for k, m in zip(idx, grid.shape)):
                raise ValueError(f"{path}: bin index {idx} outside the grid")
            grid[idx] = val
        if np.isnan(grid).any():
            raise ValueError(f"{path}: hydrogen-bond table is incomplete")
        return cls(e, grid)


def hbond_energy(table: HbondTable, bb: BackboneAtoms) -> float:
    _, _, d, t, p, c = hbond_arrays(bb)
    return float(table.pair_energies(d, t, p, c).sum())
