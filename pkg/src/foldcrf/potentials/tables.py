"""Distance-dependent pair potentials built from counted tables.

Two bin schemes are supported:

``ca``     13 Cα–Cα bins, edges 4, 5, ..., 15 Å; distances below 3 Å fold
           into the first bin and the last bin is open.
``nonca``  26 bins of 0.5 Å over [2, 15) Å, edges 2.5, 3.0, ..., 14.5;
           distances below 2 Å fold into the first bin, pairs at 15 Å or
           more are not scored.

Energies are ``-ln P(bin) / qbar(bin)`` with ``qbar`` the reference-state
mass of the bin (kT = 1).  Pairs farther apart than the reference sphere
diameter, or in a bin of zero reference mass, score 0.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from foldcrf.potentials.reference import bin_masses, sphere_radius

MIN_SEPARATION = 3

SCHEMES = {
    "ca": (np.arange(4.0, 16.0), np.inf),
    "nonca": (np.arange(2.5, 15.0, 0.5), 15.0),
}


def scheme_edges(scheme: str) -> tuple[np.ndarray, float]:
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown bin scheme {scheme!r}") from None


def n_bins(scheme: str) -> int:
    return len(scheme_edges(scheme)[0]) + 1


def site_type(residue: str, atom: str) -> str:
    """Table key of an atom: the residue type for Cα, ``<res>:<atom>`` otherwise."""
    return str(residue) if atom == "CA" else f"{residue}:{atom}"


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def atom_coords(conf, atom: str) -> np.ndarray:
    if atom == "CA":
        return np.asarray(conf.trace)
    bb = conf.backbone
    if bb is None:
        raise ValueError(f"atom {atom} needs backbone coordinates")
    return bb.atoms(atom)


def eligible_pairs(n: int, same_atom: bool, min_sep: int = MIN_SEPARATION) -> tuple[np.ndarray, np.ndarray]:
    """Residue index pairs with ``|i - j| >= min_sep``; ordered pairs when atoms differ."""
    i, j = np.triu_indices(n, k=min_sep)
    if same_atom:
        return i, j
    return np.concatenate([i, j]), np.concatenate([j, i])


@dataclass
class PairPotential:
    """Precomputed per-pair bin energies for one atom-name pair.

    ``scores[k, b]`` is the energy of pair ``k`` (residues ``i[k]``, ``j[k]``)
    when its distance falls into bin ``b``.
    """

    i: np.ndarray
    j: np.ndarray
    scores: np.ndarray
    edges: np.ndarray
    d_max: float
    atoms: tuple[str, str] = ("CA", "CA")

    def pair_energies(self, conf) -> np.ndarray:
        xa = atom_coords(conf, self.atoms[0])[self.i]
        xb = atom_coords(conf, self.atoms[1])[self.j]
        d = np.linalg.norm(xa - xb, axis=1)
        out = self.scores[np.arange(len(d)), np.searchsorted(self.edges, d, side="right")]
        ok = (d <= self.d_max) & np.isfinite(d)
        return np.where(ok, out, 0.0)

    def energy(self, conf) -> float:
        return float(self.pair_energies(conf).sum())

    __call__ = energy


def log_ratio_scores(prob: np.ndarray, qbar: np.ndarray) -> np.ndarray:
    """``-ln(prob / qbar)`` with 0 wherever the reference mass is 0."""
    prob = np.asarray(prob, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -np.log(prob / qbar)
    return np.where(qbar > 0, s, 0.0)


def _dmax(scheme: str, rg: float) -> float:
    return min(2 * sphere_radius(rg), scheme_edges(scheme)[1] - 1e-12)


@dataclass
class DistanceTable:
    """P(d | a, b) per unordered type pair over a bin scheme."""

    scheme: str
    probs: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        nb = n_bins(self.scheme)
        for key, p in list(self.probs.items()):
            p = np.asarray(p, dtype=float)
            if p.shape != (nb,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"row {key} is not a {nb}-bin distribution")
            self.probs[pair_key(*key)] = p

    def lookup(self, a: str, b: str) -> np.ndarray | None:
        return self.probs.get(pair_key(a, b))

    def write(self, path) -> None:
        edges, cut = scheme_edges(self.scheme)
        with open(path, "w") as fh:
            fh.write(f"# scheme={self.scheme} bins={len(edges) + 1}\n")
            fh.write("# interior bin edges (A): " + " ".join(f"{e:g}" for e in edges) + "\n")
            fh.write(f"# pairs at or beyond {cut:g} A are not scored\n")
            fh.write("a\tb\tbin\tprobability\n")
            for (a, b) in sorted(self.probs):
                for k, p in enumerate(self.probs[(a, b)]):
                    fh.write(f"{a}\t{b}\t{k}\t{float(p)!r}\n")

    @classmethod
    def read(cls, path) -> "DistanceTable":
        scheme = None
        rows: dict[tuple[str, str], dict[int, float]] = defaultdict(dict)
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if line.startswith("#"):
                    for tok in line[1:].split():
                        if tok.startswith("scheme="):
                            scheme = tok.split("=", 1)[1]
                    continue
                if not line.strip() or line.startswith("a\tb\t"):
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
                try:
                    rows[(parts[0], parts[1])][int(parts[2])] = float(parts[3])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad number") from None
        if scheme is None:
            raise ValueError(f"{path}: missing '# scheme=' header")
        nb = n_bins(scheme)
        probs = {}
        for key, bins in rows.items():
            if sorted(bins) != list(range(nb)):
                raise ValueError(f"{path}: pair {key} does not list bins 0..{nb - 1}")
            probs[key] = np.array([bins[k] for k in range(nb)])
        return cls(scheme, probs)


def _site_types(conf, atom: str) -> list[str]:
    return [site_type(r, atom) for r in conf.sequence]


def count_pairs(confs, scheme: str = "ca", atoms=("CA", "CA"), min_sep: int = MIN_SEPARATION):
    """Raw bin counts per unordered type pair."""
    edges, cut = scheme_edges(scheme)
    counts: dict[tuple[str, str], np.ndarray] = defaultdict(lambda: np.zeros(len(edges) + 1))
    for conf in confs:
        n = len(conf.sequence)
        i, j = eligible_pairs(n, atoms[0] == atoms[1], min_sep)
        d = np.linalg.norm(atom_coords(conf, atoms[0])[i] - atom_coords(conf, atoms[1])[j], axis=1)
        keep = d < cut
        b = np.searchsorted(edges, d[keep], side="right")
        ta, tb = _site_types(conf, atoms[0]), _site_types(conf, atoms[1])
        for ii, jj, bb in zip(i[keep], j[keep], b):
            counts[pair_key(ta[ii], tb[jj])][bb] += 1
    return dict(counts)


def build_distance_table(confs, scheme: str = "ca", pseudocount: float = 1.0, atoms=("CA", "CA"),
                         min_sep: int = MIN_SEPARATION) -> DistanceTable:
    """``P(d|a,b) = (count + eps) / (sum_d count + eps * n_bins)`` from observed structures.

    A pair type never observed and ``eps = 0`` has no defined distribution
    and is left out of the table.
    """
    if pseudocount < 0:
        raise ValueError("pseudocount must be non-negative")
    confs = list(confs)
    if not confs:
        raise ValueError("need at least one structure")
    probs = {}
    for key, c in count_pairs(confs, scheme, atoms, min_sep).items():
        total = c.sum() + pseudocount * len(c)
        if total > 0:
            probs[key] = (c + pseudocount) / total
    return DistanceTable(scheme, probs)


def table_potential(table: DistanceTable, sequence, rg: float, atoms=("CA", "CA"),
                    min_sep: int = MIN_SEPARATION) -> PairPotential:
    """Compile a table into per-pair scores for one sequence; unknown type pairs score 0."""
    edges, _ = scheme_edges(table.scheme)
    qbar = bin_masses(edges, rg)
    n = len(sequence)
    i, j = eligible_pairs(n, atoms[0] == atoms[1], min_sep)
    ta = [site_type(r, atoms[0]) for r in sequence]
    tb = [site_type(r, atoms[1]) for r in sequence]
    scores = np.zeros((len(i), len(edges) + 1))
    cache: dict[tuple[str, str], np.ndarray] = {}
    for k, (ii, jj) in enumerate(zip(i, j)):
        key = pair_key(ta[ii], tb[jj])
        if key not in cache:
            p = table.probs.get(key)
            cache[key] = np.zeros(len(qbar)) if p is None else log_ratio_scores(p, qbar)
        scores[k] = cache[key]
    return PairPotential(i, j, scores, edges, _dmax(table.scheme, rg), tuple(atoms))


def table_energy(table: DistanceTable, conf, rg: float, atoms=("CA", "CA")) -> float:
    return table_potential(table, conf.sequence, rg, atoms).energy(conf)


@dataclass
class ConditionalTable:
    """P_ab(d | d_CA) rows: (13 Cα bins) x (26 non-Cα bins) per type pair."""

    atoms: tuple[str, str]
    rows: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def lookup(self, a: str, b: str) -> np.ndarray | None:
        return self.rows.get(pair_key(a, b))


def build_conditional_table(confs, atoms=("N", "O"), pseudocount: float = 1.0,
                            min_sep: int = MIN_SEPARATION) -> ConditionalTable:
    """Count non-Cα distances of ``atoms`` against the Cα bin of the same residue pair."""
    ca_edges, _ = scheme_edges("ca")
    nc_edges, nc_cut = scheme_edges("nonca")
    counts: dict[tuple[str, str], np.ndarray] = defaultdict(lambda: np.zeros((len(ca_edges) + 1, len(nc_edges) + 1)))
    for conf in confs:
        n = len(conf.sequence)
        i, j = eligible_pairs(n, atoms[0] == atoms[1], min_sep)
        ca = np.asarray(conf.trace)
        d_ca = np.linalg.norm(ca[i] - ca[j], axis=1)
        d = np.linalg.norm(atom_coords(conf, atoms[0])[i] - atom_coords(conf, atoms[1])[j], axis=1)
        keep = d < nc_cut
        bc = np.searchsorted(ca_edges, d_ca[keep], side="right")
        bn = np.searchsorted(nc_edges, d[keep], side="right")
        ta, tb = _site_types(conf, atoms[0]), _site_types(conf, atoms[1])
        for ii, jj, x, y in zip(i[keep], j[keep], bc, bn):
            counts[pair_key(ta[ii], tb[jj])][x, y] += 1
    rows = {}
    for key, c in counts.items():
        c = c + pseudocount
        tot = c.sum(axis=1, keepdims=True)
        rows[key] = np.divide(c, tot, out=np.full_like(c, 1.0 / c.shape[1]), where=tot > 0)
    return ConditionalTable(tuple(atoms), rows)


def conditional_nonca_distribution(cond: np.ndarray, p_ca: np.ndarray) -> np.ndarray:
    """Mixture ``sum_c cond[c, :] p_ca[c]`` of non-Cα rows weighted by Cα bin probabilities."""
    cond = np.asarray(cond, dtype=float)
    p_ca = np.asarray(p_ca, dtype=float)
    if cond.shape != (n_bins("ca"), n_bins("nonca")) or p_ca.shape != (n_bins("ca"),):
        raise ValueError("expected a (13, 26) table and 13 Cα probabilities")
    out = p_ca @ cond
    return out / out.sum()
