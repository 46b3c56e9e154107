"""Plain-text readers and writers: profiles, SS likelihoods, PDB records, model files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from foldcrf.anglemodel.model import AngleModel
from foldcrf.geometry import BackboneAtoms, ideal_cb
from foldcrf.residues import ONE_TO_THREE, THREE_TO_ONE


class ParseError(ValueError):
    pass


def _numeric_rows(path, width: int, what: str, with_lines: bool = False):
    rows = []
    linenos = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != width:
                raise ParseError(f"{path}:{lineno}: {what} row needs {width} values, found {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric {what} value") from None
            if not all(np.isfinite(rows[-1])):
                raise ParseError(f"{path}:{lineno}: non-finite {what} value")
            linenos.append(lineno)
    if not rows:
        raise ParseError(f"{path}: no {what} rows")
    out = np.array(rows)
    return (out, linenos) if with_lines else out


def parse_profile(path) -> np.ndarray:
    """N x 20 profile, columns ARNDCQEGHILKMFPSTWYV; blank lines and ``#`` comments skipped."""
    return _numeric_rows(path, 20, "profile")


def parse_ss(path) -> np.ndarray:
    """N x 3 secondary-structure likelihoods (H E C), rows renormalized to sum 1."""
    x, linenos = _numeric_rows(path, 3, "ss", with_lines=True)
    bad = np.flatnonzero(np.any(x < 0, axis=1) | (x.sum(axis=1) <= 0))
    if len(bad):
        raise ParseError(f"{path}:{linenos[bad[0]]}: ss likelihoods must be non-negative with a positive sum")
    return x / x.sum(axis=1, keepdims=True)


def write_matrix(path, x: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in np.atleast_2d(x):
            fh.write(" ".join(f"{v:.6g}" for v in row) + "\n")


# --- PDB ---------------------------------------------------------------------


def _pdb_atoms(path):
    """(name, altloc, resname, chain, resseq+icode, xyz) of ATOM records in the first model."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            rec = line[:6]
            if rec.startswith("ENDMDL"):
                return
            if rec != "ATOM  ":
                continue
            try:
                xyz = np.array([float(line[30:38]), float(line[38:46]), float(line[46:54])])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad coordinates") from None
            yield line[12:16].strip(), line[16], line[17:20].strip(), line[21], line[22:27], xyz


def _first_chain_residues(path) -> list[tuple[str, dict]]:
    residues: list[tuple[str, dict]] = []
    index: dict[str, int] = {}
    chain = None
    for name, _alt, resname, ch, resid, xyz in _pdb_atoms(path):
        if chain is None:
            chain = ch
        if ch != chain:
            continue
        if resid not in index:
            index[resid] = len(residues)
            residues.append((resname, {}))
        atoms = residues[index[resid]][1]
        atoms.setdefault(name, xyz)  # first alternate location wins
    return residues


def parse_ca_pdb(path) -> tuple[np.ndarray, str]:
    """Cα trace and one-letter sequence of the first chain in the first model."""
    res = [(rn, atoms["CA"]) for rn, atoms in _first_chain_residues(path) if "CA" in atoms]
    if not res:
        raise ParseError(f"{path}: no CA atoms in ATOM records")
    seq = "".join(THREE_TO_ONE.get(rn, "X") for rn, _ in res)
    return np.array([xyz for _, xyz in res]), seq


def parse_backbone_pdb(path) -> BackboneAtoms:
    """Backbone atoms of the first chain; residues lacking N, CA, C or O are dropped.

    Missing Cβ (glycine) gets the ideal virtual position; ``H``/``HN`` is read
    when present.
    """
    keep = [(rn, a) for rn, a in _first_chain_residues(path) if all(k in a for k in ("N", "CA", "C", "O"))]
    if not keep:
        raise ParseError(f"{path}: no residue with a complete N, CA, C, O backbone")
    get = lambda k: np.array([a[k] for _, a in keep])  # noqa: E731
    N, CA, C, O = get("N"), get("CA"), get("C"), get("O")
    cb = ideal_cb(N, CA, C)
    for r, (_, a) in enumerate(keep):
        if "CB" in a:
            cb[r] = a["CB"]
    hn = np.full_like(CA, np.nan)
    for r, (_, a) in enumerate(keep):
        h = a.get("H", a.get("HN"))
        if h is not None:
            hn[r] = h
    seq = "".join(THREE_TO_ONE.get(rn, "X") for rn, _ in keep)
    return BackboneAtoms(N, CA, C, O, cb, seq, hn)


def _atom_line(serial: int, name: str, resname: str, chain: str, resseq: int, xyz) -> str:
    padded = name if len(name) == 4 else f" {name:<3}"
    return (f"ATOM  {serial:5d} {padded:4s} {resname:>3s} {chain:1s}{resseq:4d}    "
            f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {name[0]:>2s}  ")


def pdb_lines(structure, sequence: str | None = None, chain: str = "A") -> list[str]:
    """ATOM records for a Cα trace (n x 3 array) or a :class:`BackboneAtoms`."""
    if isinstance(structure, BackboneAtoms):
        seq = structure.sequence
        order = ("N", "CA", "C", "O", "CB", "HN")
        coords = {a: structure.atoms(a) for a in order}
        n = len(structure)
    else:
        coords = {"CA": np.asarray(structure, dtype=float)}
        order = ("CA",)
        n = len(coords["CA"])
        seq = sequence if sequence is not None else "X" * n
    if not isinstance(seq, str) or len(seq) != n:
        seq = "X" * n
    lines = []
    serial = 1
    for i in range(n):
        resname = ONE_TO_THREE.get(seq[i], "UNK")
        for a in order:
            xyz = coords[a][i]
            if not np.all(np.isfinite(xyz)) or (a == "CB" and seq[i] == "G"):
                continue
            lines.append(_atom_line(serial, "H" if a == "HN" else a, resname, chain, i + 1, xyz).rstrip())
            serial += 1
    return lines


def write_pdb(path, structure, sequence: str | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(pdb_lines(structure, sequence)) + "\n")


# --- model files -------------------------------------------------------------


def write_angle_model(path, model: AngleModel) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"ANGLEMODEL v1 kind={model.kind} states={model.n_states} w={model.w} gates={model.n_gates}\n")
        for v in model.params:
            fh.write(f"{float(v)!r}\n")


def read_angle_model(path) -> AngleModel:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["ANGLEMODEL", "v1"]:
            raise ParseError(f"{path}:1: not an ANGLEMODEL v1 file")
        try:
            f = dict(kv.split("=", 1) for kv in header[2:])
            kind, states, w, gates = f["kind"], int(f["states"]), int(f["w"]), int(f["gates"])
        except (KeyError, ValueError):
            raise ParseError(f"{path}:1: header needs kind=, states=, w=, gates=") from None
        vals = []
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad parameter {line.strip()!r}") from None
    try:
        return AngleModel(kind, states, w, gates, np.array(vals))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


# --- dataset lists and decoy manifests ----------------------------------------


@dataclass
class Entry:
    name: str
    profile: np.ndarray
    ss: np.ndarray
    trace: np.ndarray
    sequence: str


def read_dataset(path) -> list[Entry]:
    """Whitespace-separated ``profile ss native_pdb`` per line, paths relative to the list file."""
    base = Path(path).parent
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 'profile ss native_pdb'")
            prof, ss, pdb = (base / p for p in parts)
            profile, sslik = parse_profile(prof), parse_ss(ss)
            trace, seq = parse_ca_pdb(pdb)
            if not len(profile) == len(sslik) == len(trace):
                raise ParseError(f"{path}:{lineno}: profile, ss and native lengths differ "
                                 f"({len(profile)}, {len(sslik)}, {len(trace)})")
            out.append(Entry(pdb.stem, profile, sslik, trace, seq))
    if not out:
        raise ParseError(f"{path}: empty dataset list")
    return out


MANIFEST_COLUMNS = ("decoy_id", "energy", "e_epad", "e_table", "e_hbond", "e_esp", "rg")


def _num(x) -> str:
    return "NA" if x is None else f"{x:.6f}"


def write_decoy_manifest(path, rows) -> None:
    """``rows`` are dicts keyed by :data:`MANIFEST_COLUMNS`; missing values print as NA."""
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(MANIFEST_COLUMNS) + "\n")
        for r in rows:
            fh.write("\t".join([r["decoy_id"]] + [_num(r.get(c)) for c in MANIFEST_COLUMNS[1:]]) + "\n")


def read_decoy_manifest(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != MANIFEST_COLUMNS:
            raise ParseError(f"{path}:1: expected header {' '.join(MANIFEST_COLUMNS)}")
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(MANIFEST_COLUMNS):
                raise ParseError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields")
            row: dict = {"decoy_id": parts[0]}
            for c, v in zip(MANIFEST_COLUMNS[1:], parts[1:]):
                try:
                    row[c] = None if v == "NA" else float(v)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad {c} value {v!r}") from None
            rows.append(row)
    return rows
