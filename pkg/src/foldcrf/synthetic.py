"""Synthetic proteins with ideal backbone geometry.

Used for desk-scale experiments: torsion angles are drawn around the usual
Ramachandran basins, the backbone is built with Engh-Huber bond geometry,
and matching sequence profiles / secondary-structure likelihoods are made up
so that they carry information about the local structure.
"""

from __future__ import annotations

import math

import numpy as np

from foldcrf.geometry import BackboneAtoms, ideal_cb, place_atom
from foldcrf.residues import AMINO_ACIDS

N_CA = 1.458
CA_C = 1.525
C_N = 1.329
C_O = 1.231
ANG_N_CA_C = math.radians(111.2)
ANG_CA_C_N = math.radians(116.2)
ANG_C_N_CA = math.radians(121.7)
ANG_CA_C_O = math.radians(120.5)

# (phi, psi) basin centres and spreads, degrees
BASINS = {
    "H": ((-63.0, -42.0), 7.0),
    "E": ((-120.0, 130.0), 12.0),
    "C": None,
}
LOOP_CENTRES = [(-63.0, -42.0), (-120.0, 130.0), (-75.0, 150.0), (60.0, 40.0), (-90.0, 0.0)]

# residues favoured in each secondary-structure class
SS_PREFERENCE = {"H": "AELMQKR", "E": "VIYFWT", "C": "GPNDS"}


def ideal_backbone(phi, psi, omega=None, sequence: str | None = None) -> BackboneAtoms:
    """Backbone atoms from torsions in degrees.  ``phi[0]`` is unused."""
    phi = np.radians(np.asarray(phi, dtype=float))
    psi = np.radians(np.asarray(psi, dtype=float))
    n = len(phi)
    omega = np.full(n, math.pi) if omega is None else np.radians(np.asarray(omega, dtype=float))
    if sequence is None:
        sequence = "A" * n
    N = np.zeros((n, 3))
    CA = np.zeros((n, 3))
    C = np.zeros((n, 3))
    CA[0] = [N_CA, 0.0, 0.0]
    C[0] = CA[0] + CA_C * np.array([-math.cos(ANG_N_CA_C), math.sin(ANG_N_CA_C), 0.0])
    for i in range(n - 1):
        N[i + 1] = place_atom(N[i], CA[i], C[i], C_N, ANG_CA_C_N, psi[i])
        CA[i + 1] = place_atom(CA[i], C[i], N[i + 1], N_CA, ANG_C_N_CA, omega[i])
        C[i + 1] = place_atom(C[i], N[i + 1], CA[i + 1], CA_C, ANG_N_CA_C, phi[i + 1])
    O = np.array(
        [place_atom(N[i], CA[i], C[i], C_O, ANG_CA_C_O, psi[i] + math.pi) for i in range(n)]
    )
    return BackboneAtoms(N, CA, C, O, ideal_cb(N, CA, C), sequence)


def random_ss_string(n: int, rng: np.random.Generator) -> str:
    out = []
    while len(out) < n:
        kind = rng.choice(["H", "E", "C"], p=[0.4, 0.3, 0.3])
        length = {"H": rng.integers(6, 15), "E": rng.integers(4, 9), "C": rng.integers(2, 6)}[kind]
        out.extend(kind * int(length))
    return "".join(out[:n])


def random_protein(n: int, rng: np.random.Generator, ss: str | None = None):
    """Return (backbone, ss_string) for a random chain of ``n`` residues."""
    ss = random_ss_string(n, rng) if ss is None else ss
    phi = np.zeros(n)
    psi = np.zeros(n)
    seq = []
    for i, s in enumerate(ss):
        if BASINS[s] is None:
            centre = LOOP_CENTRES[rng.integers(len(LOOP_CENTRES))]
            spread = 15.0
        else:
            centre, spread = BASINS[s]
        phi[i] = centre[0] + spread * rng.standard_normal()
        psi[i] = centre[1] + spread * rng.standard_normal()
        pool = SS_PREFERENCE[s] if rng.random() < 0.7 else AMINO_ACIDS
        seq.append(pool[rng.integers(len(pool))])
    return ideal_backbone(phi, psi, sequence="".join(seq)), ss


def fake_profile(sequence: str, rng: np.random.Generator, noise: float = 1.0) -> np.ndarray:
    """PSSM-like scores: +5 on the native residue, Gaussian noise elsewhere."""
    prof = noise * rng.standard_normal((len(sequence), 20)) - 1.0
    for i, aa in enumerate(sequence):
        if aa in AMINO_ACIDS:
            prof[i, AMINO_ACIDS.index(aa)] += 6.0
    return prof


def fake_ss_likelihoods(ss: str, rng: np.random.Generator, confidence: float = 0.75) -> np.ndarray:
    """Three-state likelihoods favouring the true class (order H, E, C)."""
    out = np.empty((len(ss), 3))
    for i, s in enumerate(ss):
        row = rng.dirichlet(np.ones(3))
        row *= 1.0 - confidence
        row["HEC".index(s)] += confidence
        out[i] = row / row.sum()
    return out


def write_dataset(directory, n_proteins: int, length: int, rng: np.random.Generator, list_name: str = "train.txt"):
    """Write backbone PDBs, profiles and ss files plus a ``profile ss native`` list; return the list path."""
    from pathlib import Path

    from foldcrf import io

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for k in range(n_proteins):
        bb, ss = random_protein(length, rng)
        name = f"p{k + 1:03d}"
        io.write_pdb(d / f"{name}.pdb", bb)
        io.write_matrix(d / f"{name}.profile", fake_profile(bb.sequence, rng))
        io.write_matrix(d / f"{name}.ss", fake_ss_likelihoods(ss, rng))
        lines.append(f"{name}.profile {name}.ss {name}.pdb\n")
    path = d / list_name
    path.write_text("".join(lines))
    return path
