"""Cα-trace geometry: pseudo-angle internal coordinates and backbone building.

Residues are indexed from 0 in code.  For a trace of ``n`` points:

* ``theta[k]`` is the pseudo bond angle at residue ``k + 1`` (vertex of
  ``P[k], P[k+1], P[k+2]``), so there are ``n - 2`` of them;
* ``tau[k]`` is the pseudo dihedral at residue ``k + 2`` (``P[k] .. P[k+3]``),
  so there are ``n - 3`` of them.

Point ``i + 1`` (``i >= 2``) is placed from ``theta`` and ``tau`` at residue ``i``.
The first three points live in a canonical frame: origin, ``+x`` and the
``z = 0`` half-plane with positive ``y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

log = logging.getLogger(__name__)

CA_BOND = 3.8
CIS_PRO_BOND = 3.2
DEGENERATE_SIN = 1e-8
BIN_WIDTH = math.radians(10.0)
N_THETA_BINS = 18
N_TAU_BINS = 36
TABLE_ATOMS = ("N", "C", "O", "CB")


class GeometryError(ValueError):
    """Raised for invalid angles or degenerate point configurations."""


@dataclass
class InternalCoords:
    theta: np.ndarray
    tau: np.ndarray
    bond_length: float = CA_BOND
    bond_lengths: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        if self.theta.ndim != 1 or self.tau.ndim != 1:
            raise GeometryError("theta and tau must be 1-D")
        if self.tau.size != max(self.theta.size - 1, 0):
            raise GeometryError(
                f"expected {max(self.theta.size - 1, 0)} tau values, got {self.tau.size}"
            )
        if self.bond_lengths is not None:
            self.bond_lengths = np.asarray(self.bond_lengths, dtype=float)
            if self.bond_lengths.shape != (self.n_residues - 1,):
                raise GeometryError("bond_lengths must have n_residues - 1 entries")

    @property
    def n_residues(self) -> int:
        return self.theta.size + 2

    def bonds(self) -> np.ndarray:
        if self.bond_lengths is not None:
            return self.bond_lengths
        return np.full(self.n_residues - 1, float(self.bond_length))

    def validate(self) -> None:
        if np.any(~np.isfinite(self.theta)) or np.any(~np.isfinite(self.tau)):
            raise GeometryError("non-finite angle")
        if np.any(self.theta <= 0) or np.any(self.theta >= math.pi):
            raise GeometryError("theta must lie strictly inside (0, pi)")
        if np.any(np.abs(np.sin(self.theta)) < DEGENERATE_SIN):
            raise GeometryError("theta too close to 0 or pi (collinear)")
        if np.any(self.tau <= -math.pi) or np.any(self.tau > math.pi):
            raise GeometryError("tau must lie in (-pi, pi]")

    def copy(self) -> "InternalCoords":
        return InternalCoords(
            self.theta.copy(),
            self.tau.copy(),
            self.bond_length,
            None if self.bond_lengths is None else self.bond_lengths.copy(),
        )


@dataclass
class BackboneAtoms:
    """Backbone and Cβ coordinates, one row per residue.

    ``HN`` rows are NaN where the hydrogen is absent (residue 0, prolines,
    degenerate geometry).
    """

    N: np.ndarray
    CA: np.ndarray
    C: np.ndarray
    O: np.ndarray
    CB: np.ndarray
    sequence: str
    HN: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.HN is None:
            self.HN = np.full_like(self.CA, np.nan)

    def __len__(self):
        return len(self.CA)

    def atoms(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def translated(self, shift) -> "BackboneAtoms":
        shift = np.asarray(shift, dtype=float)
        return BackboneAtoms(
            self.N + shift, self.CA + shift, self.C + shift, self.O + shift,
            self.CB + shift, self.sequence, self.HN + shift,
        )

    def transformed(self, rot: np.ndarray, shift) -> "BackboneAtoms":
        f = lambda x: x @ rot.T + shift  # noqa: E731
        return BackboneAtoms(
            f(self.N), f(self.CA), f(self.C), f(self.O), f(self.CB),
            self.sequence, f(self.HN),
        )


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def bond_angle(a, b, c) -> np.ndarray:
    """Angle at vertex ``b``; works row-wise on stacked points."""
    u = np.asarray(a, dtype=float) - b
    v = np.asarray(c, dtype=float) - b
    cos = np.sum(u * v, axis=-1) / (np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1))
    return np.arccos(np.clip(cos, -1.0, 1.0))


def dihedral(p0, p1, p2, p3) -> np.ndarray:
    """Signed dihedral angle (right-hand rule) in (-pi, pi]."""
    p0, p1, p2, p3 = (np.asarray(p, dtype=float) for p in (p0, p1, p2, p3))
    b0 = p0 - p1
    b1 = _unit(p2 - p1)
    b2 = p3 - p2
    v = b0 - np.sum(b0 * b1, axis=-1, keepdims=True) * b1
    w = b2 - np.sum(b2 * b1, axis=-1, keepdims=True) * b1
    x = np.sum(v * w, axis=-1)
    y = np.sum(np.cross(b1, v) * w, axis=-1)
    ang = np.arctan2(y, x)
    return np.where(ang <= -math.pi, math.pi, ang)


def place_atom(a, b, c, length: float, angle: float, torsion: float) -> np.ndarray:
    """Position ``d`` with ``|cd| = length``, angle ``b-c-d`` and dihedral ``a-b-c-d``."""
    bc = _unit(c - b)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    local = length * np.array(
        [-math.cos(angle), math.sin(angle) * math.cos(torsion), math.sin(angle) * math.sin(torsion)]
    )
    return c + local[0] * bc + local[1] * m + local[2] * n


def ideal_cb(N, CA, C) -> np.ndarray:
    """Virtual Cβ from ideal tetrahedral geometry at Cα (row-wise)."""
    b = np.asarray(CA) - N
    c = np.asarray(C) - CA
    a = np.cross(b, c)
    return -0.58273431 * a + 0.56802827 * b - 0.54067466 * c + CA


def build_trace_from_internal(ic: InternalCoords) -> np.ndarray:
    """Cα coordinates (n x 3) in the canonical frame."""
    ic.validate()
    n = ic.n_residues
    bonds = ic.bonds().tolist()
    theta = ic.theta.tolist()
    tau = ic.tau.tolist()
    pts = [(0.0, 0.0, 0.0), (bonds[0], 0.0, 0.0)]
    t = theta[0]
    pts.append((bonds[0] - bonds[1] * math.cos(t), bonds[1] * math.sin(t), 0.0))
    # scalar NeRF placement; same construction as place_atom, without array overhead
    for i in range(2, n - 1):
        ax, ay, az = pts[i - 2]
        bx, by, bz = pts[i - 1]
        cx, cy, cz = pts[i]
        ux, uy, uz = cx - bx, cy - by, cz - bz
        r = 1.0 / math.sqrt(ux * ux + uy * uy + uz * uz)
        ux, uy, uz = ux * r, uy * r, uz * r
        vx, vy, vz = bx - ax, by - ay, bz - az
        nx, ny, nz = vy * uz - vz * uy, vz * ux - vx * uz, vx * uy - vy * ux
        r = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
        nx, ny, nz = nx * r, ny * r, nz * r
        mx, my, mz = ny * uz - nz * uy, nz * ux - nx * uz, nx * uy - ny * ux
        th, to, length = theta[i - 1], tau[i - 2], bonds[i]
        c0 = -length * math.cos(th)
        c1 = length * math.sin(th) * math.cos(to)
        c2 = length * math.sin(th) * math.sin(to)
        pts.append((
            cx + c0 * ux + c1 * mx + c2 * nx,
            cy + c0 * uy + c1 * my + c2 * ny,
            cz + c0 * uz + c1 * mz + c2 * nz,
        ))
    return np.array(pts[:n])


def internal_from_trace(trace, bond_length: float | None = None) -> InternalCoords:
    """Pseudo angles of a Cα trace.

    Bond lengths are taken from the trace; if they all match ``bond_length``
    (default 3.8 Å) to 1e-6 the scalar form is stored.
    """
    p = np.asarray(trace, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 3:
        raise GeometryError("trace must be an (n>=3, 3) array")
    bonds = np.linalg.norm(np.diff(p, axis=0), axis=1)
    if np.any(bonds < 1e-9):
        raise GeometryError("coincident consecutive points")
    theta = bond_angle(p[:-2], p[1:-1], p[2:])
    if np.any(np.abs(np.sin(theta)) < DEGENERATE_SIN):
        raise GeometryError("collinear consecutive triple")
    tau = dihedral(p[:-3], p[1:-2], p[2:-1], p[3:]) if len(p) >= 4 else np.zeros(0)
    ref = CA_BOND if bond_length is None else bond_length
    if np.allclose(bonds, ref, atol=1e-6, rtol=0):
        return InternalCoords(theta, tau, ref)
    return InternalCoords(theta, tau, ref, bonds)


def radius_of_gyration(trace) -> float:
    p = np.asarray(trace, dtype=float).reshape(-1, 3)
    return float(np.sqrt(np.mean(np.sum((p - p.mean(axis=0)) ** 2, axis=1))))


# --- backbone building -------------------------------------------------------


def _extend_trace(p: np.ndarray, n_extra: int = 2) -> np.ndarray:
    """Pad a trace with virtual points at both ends, continuing the local geometry."""

    def forward(q):
        q = list(q)
        th = bond_angle(q[-3], q[-2], q[-1])
        tu = float(dihedral(q[-4], q[-3], q[-2], q[-1])) if len(q) >= 4 else math.pi
        for _ in range(n_extra):
            bond = np.linalg.norm(q[-1] - q[-2])
            q.append(place_atom(q[-3], q[-2], q[-1], bond, th, tu))
        return np.array(q)

    out = forward(p)
    out = forward(out[::-1])[::-1]
    return out


def _peptide_frames(ext: np.ndarray) -> np.ndarray:
    """Frames for each consecutive Cα pair of an extended trace.

    Frame ``k`` is anchored at ``ext[k]`` with x along ``ext[k] -> ext[k+1]``
    and y in the plane spanned by the outward neighbour vectors.
    Returns an array (m, 3, 3) whose rows are the axes; defined for
    ``1 <= k <= len(ext) - 3``; other rows are NaN.
    """
    m = len(ext) - 1
    frames = np.full((m, 3, 3), np.nan)
    k = np.arange(1, m - 1)
    x = _unit(ext[k + 1] - ext[k])
    w = (ext[k - 1] - ext[k]) + (ext[k + 2] - ext[k + 1])
    y = w - np.sum(w * x, axis=1, keepdims=True) * x
    for j in np.flatnonzero(np.linalg.norm(y, axis=1) < 1e-9):
        alt = np.cross(x[j], [0.0, 0.0, 1.0])
        if np.linalg.norm(alt) < 1e-9:
            alt = np.cross(x[j], [0.0, 1.0, 0.0])
        y[j] = alt
    y = _unit(y)
    z = np.cross(x, y)
    frames[k] = np.stack([x, y, z], axis=1)
    return frames


def _residue_frames(ext: np.ndarray) -> np.ndarray:
    """Frames centred on each Cα of an extended trace from its two neighbours."""
    m = len(ext)
    frames = np.full((m, 3, 3), np.nan)
    k = np.arange(1, m - 1)
    x = _unit(ext[k + 1] - ext[k - 1])
    v = ext[k] - 0.5 * (ext[k - 1] + ext[k + 1])
    y = _unit(v - np.sum(v * x, axis=1, keepdims=True) * x)
    z = np.cross(x, y)
    frames[k] = np.stack([x, y, z], axis=1)
    return frames


def _bin_keys(ext: np.ndarray) -> np.ndarray:
    """(theta_bin, tau_bin) for each peptide unit of the extended trace.

    The key of unit ``k`` (between ext[k] and ext[k+1]) uses the pseudo bond
    angle at ext[k+1] and the dihedral ext[k-1..k+2].
    """
    m = len(ext) - 1
    keys = np.zeros((m, 2), dtype=int)
    k = np.arange(1, m - 1)
    th = bond_angle(ext[k], ext[k + 1], ext[k + 2])
    tu = dihedral(ext[k - 1], ext[k], ext[k + 1], ext[k + 2])
    keys[k, 0], keys[k, 1] = angle_bins(th, tu)
    return keys


def angle_bins(theta, tau):
    tb = np.clip(np.floor(np.asarray(theta) / BIN_WIDTH).astype(int), 0, N_THETA_BINS - 1)
    ub = np.clip(np.floor((np.asarray(tau) + math.pi) / BIN_WIDTH).astype(int), 0, N_TAU_BINS - 1)
    return tb, ub


@dataclass
class QuadrilateralTable:
    """Mean local-frame offsets of backbone atoms keyed by (theta_bin, tau_bin).

    ``N`` offsets of residue ``i+1`` and ``C``/``O`` offsets of residue ``i``
    are stored in the peptide frame of the Cα pair ``(i, i+1)``; ``CB``
    offsets in the residue frame of ``i``, keyed by the unit ``(i, i+1)``.
    """

    offsets: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def lookup(self, key: tuple[int, int]) -> dict:
        key = (int(key[0]), int(key[1]))
        if key in self.offsets:
            return self.offsets[key]
        if not self.offsets:
            return _default_offsets()
        best, best_d = None, None
        for k in self.offsets:
            dt = abs(k[0] - key[0])
            du = abs(k[1] - key[1])
            du = min(du, N_TAU_BINS - du)
            d = (dt * dt + du * du, k)
            if best_d is None or d < best_d:
                best, best_d = k, d
        return self.offsets[best]

    @classmethod
    def from_backbones(cls, backbones) -> "QuadrilateralTable":
        sums: dict = {}
        counts: dict = {}
        for bb in backbones:
            ext = _extend_trace(bb.CA)
            pf = _peptide_frames(ext)
            rf = _residue_frames(ext)
            keys = _bin_keys(ext)
            n = len(bb)
            # ext index of residue i is i + 2; peptide unit (i, i+1) is index i + 2
            for i in range(n - 1):
                u = i + 2
                key = (int(keys[u, 0]), int(keys[u, 1]))
                rows = {
                    "N": pf[u] @ (bb.N[i + 1] - ext[u]),
                    "C": pf[u] @ (bb.C[i] - ext[u]),
                    "O": pf[u] @ (bb.O[i] - ext[u]),
                    "CB": rf[u] @ (bb.CB[i] - ext[u]),
                }
                acc = sums.setdefault(key, {a: np.zeros(3) for a in TABLE_ATOMS})
                for a, v in rows.items():
                    acc[a] += v
                counts[key] = counts.get(key, 0) + 1
        offsets = {k: {a: v / counts[k] for a, v in acc.items()} for k, acc in sums.items()}
        return cls(offsets, counts)


@lru_cache(maxsize=1)
def _default_offsets() -> dict:
    from foldcrf.synthetic import ideal_backbone

    bbs = [ideal_backbone(np.full(12, -60.0), np.full(12, -45.0)),
           ideal_backbone(np.full(12, -120.0), np.full(12, 130.0))]
    table = QuadrilateralTable.from_backbones(bbs)
    total = {a: np.zeros(3) for a in TABLE_ATOMS}
    n = 0
    for k, offs in table.offsets.items():
        c = table.counts[k]
        for a in TABLE_ATOMS:
            total[a] += c * offs[a]
        n += c
    return {a: v / n for a, v in total.items()}


def build_backbone_atoms(trace, sequence: str, table: QuadrilateralTable) -> BackboneAtoms:
    p = np.asarray(trace, dtype=float)
    n = len(p)
    if len(sequence) != n:
        raise GeometryError("sequence length must match trace length")
    ext = _extend_trace(p)
    pf = _peptide_frames(ext)
    rf = _residue_frames(ext)
    keys = _bin_keys(ext)
    N = np.zeros((n, 3))
    C = np.zeros((n, 3))
    O = np.zeros((n, 3))
    CB = np.zeros((n, 3))
    for i in range(-1, n):
        u = i + 2
        off = table.lookup(keys[u])
        if i + 1 < n:
            N[i + 1] = ext[u] + off["N"] @ pf[u]
        if i >= 0:
            C[i] = ext[u] + off["C"] @ pf[u]
            O[i] = ext[u] + off["O"] @ pf[u]
            CB[i] = ext[u] + off["CB"] @ rf[u]
    return BackboneAtoms(N, p.copy(), C, O, CB, sequence)


def place_hn(bb: BackboneAtoms) -> BackboneAtoms:
    """Add amide hydrogens at unit distance from N, opposite the bisector of N->C(prev), N->CA."""
    hn = np.full_like(bb.CA, np.nan)
    for i in range(1, len(bb)):
        if bb.sequence[i] == "P":
            continue
        a = bb.C[i - 1] - bb.N[i]
        b = bb.CA[i] - bb.N[i]
        s = a / np.linalg.norm(a) + b / np.linalg.norm(b)
        norm = np.linalg.norm(s)
        if norm < 1e-9:
            log.warning("residue %d: antiparallel N bonds, HN skipped", i)
            continue
        hn[i] = bb.N[i] - s / norm
    return BackboneAtoms(bb.N, bb.CA, bb.C, bb.O, bb.CB, bb.sequence, hn)


def write_table(table: QuadrilateralTable, path) -> None:
    with open(path, "w") as fh:
        fh.write("# theta_bin tau_bin atom dx dy dz  (10 deg bins; tau offset by +180 deg)\n")
        for key in sorted(table.offsets):
            for a in TABLE_ATOMS:
                dx, dy, dz = table.offsets[key][a]
                fh.write(f"{key[0]} {key[1]} {a} {dx:.6f} {dy:.6f} {dz:.6f}\n")


def read_table(path) -> QuadrilateralTable:
    offsets: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6 or parts[2] not in TABLE_ATOMS:
                raise ValueError(f"{path}:{lineno}: malformed table row")
            key = (int(parts[0]), int(parts[1]))
            offsets.setdefault(key, {})[parts[2]] = np.array([float(x) for x in parts[3:]])
    for key, offs in offsets.items():
        if set(offs) != set(TABLE_ATOMS):
            raise ValueError(f"{path}: bin {key} is missing atoms")
    return QuadrilateralTable(offsets, {k: 1 for k in offsets})
