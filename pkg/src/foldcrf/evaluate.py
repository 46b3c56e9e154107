"""Decoy-set metrics: superposed RMSD, good-decoy statistics, native discrimination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TOP_PERCENTS = (1, 2, 5, 10)
METRICS_HEADER = ("target", "n_decoys", "best_rmsd", "good_frac", "top1", "top2", "top5", "top10",
                  "native_rank", "zscore", "pearson_cc")


class MetricError(ValueError):
    pass


def kabsch_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Proper rotation R minimizing ``|(a - mean a) R^T - (b - mean b)|``."""
    pa = a - a.mean(axis=0)
    pb = b - b.mean(axis=0)
    u, _, vt = np.linalg.svd(pa.T @ pb)
    d = np.sign(np.linalg.det(u @ vt))
    return (u @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ vt).T


def rmsd_superposed(a, b) -> float:
    """RMSD after optimal rigid superposition; plain RMS distance below 3 points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MetricError("structures differ in length")
    if len(a) < 3:
        return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))
    rot = kabsch_rotation(a, b)
    pa = (a - a.mean(axis=0)) @ rot.T
    pb = b - b.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum((pa - pb) ** 2, axis=1))))


@dataclass
class DecoyStats:
    n_decoys: int
    best_rmsd: float
    good_frac: float  # percent of decoys at or under the cutoff
    top: dict[int, float] = field(default_factory=dict)  # percent -> mean RMSD


def decoy_statistics(rmsds, cutoff: float = 6.0) -> DecoyStats:
    """Statistics over decoy RMSDs to the native.

    ``top[x]`` averages the ``ceil(x% of n)`` (at least one) lowest RMSDs.
    """
    r = np.sort(np.asarray(rmsds, dtype=float))
    if len(r) == 0:
        raise MetricError("empty decoy set")
    top = {}
    for pct in TOP_PERCENTS:
        k = max(1, math.ceil(len(r) * pct / 100 - 1e-9))
        top[pct] = float(r[:k].mean())
    return DecoyStats(len(r), float(r[0]), 100.0 * float(np.mean(r <= cutoff)), top)


def decoy_rmsds(decoys, native) -> np.ndarray:
    return np.array([rmsd_superposed(d, native) for d in decoys])


@dataclass
class Discrimination:
    rank: int
    zscore: float
    defined: bool = True


def native_discrimination(energies, native_energy: float) -> Discrimination:
    """Rank (1 + decoys strictly lower) and population z-score of the native energy."""
    e = np.asarray(energies, dtype=float)
    if len(e) < 2:
        raise MetricError("need at least two decoy energies")
    rank = 1 + int(np.sum(e < native_energy))
    sd = float(e.std())
    if sd == 0:
        return Discrimination(rank, 0.0, False)
    return Discrimination(rank, float((native_energy - e.mean()) / sd))


def pearson_cc(x, y) -> float:
    """Pearson correlation; NaN when either variable has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or len(x) < 2:
        raise MetricError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0:
        return float("nan")
    return float(np.clip((dx @ dy) / den, -1.0, 1.0))


def normalize_energies(energies) -> tuple[np.ndarray, bool]:
    """Z-scored energies (population stdev) and a flag that is False for constant input."""
    e = np.asarray(energies, dtype=float)
    if len(e) < 2:
        raise MetricError("need at least two energies")
    sd = float(e.std())
    if sd == 0:
        return np.zeros_like(e), False
    return (e - e.mean()) / sd, True


def q3(predicted: str, true: str) -> float:
    if len(predicted) != len(true):
        raise MetricError("secondary-structure strings differ in length")
    if not true:
        raise MetricError("empty secondary-structure strings")
    return 100.0 * sum(a == b for a, b in zip(predicted, true)) / len(true)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.4f}"


def metrics_row(target: str, decoys, native, energies=None, native_energy: float | None = None,
                cutoff: float = 6.0) -> dict:
    """One metrics record; energy-based fields are NA when energies are missing."""
    r = decoy_rmsds(decoys, native)
    st = decoy_statistics(r, cutoff)
    rank = z = cc = None
    if energies is not None:
        energies = np.asarray(energies, dtype=float)
        if native_energy is not None and len(energies) >= 2:
            disc = native_discrimination(energies, native_energy)
            rank, z = disc.rank, disc.zscore if disc.defined else None
        if len(energies) >= 2:
            cc = pearson_cc(energies, r)
    return {
        "target": target, "n_decoys": st.n_decoys, "best_rmsd": st.best_rmsd, "good_frac": st.good_frac,
        "top1": st.top[1], "top2": st.top[2], "top5": st.top[5], "top10": st.top[10],
        "native_rank": rank, "zscore": z, "pearson_cc": cc,
    }


def format_metrics(rows) -> str:
    lines = ["\t".join(METRICS_HEADER)]
    for row in rows:
        lines.append("\t".join(row["target"] if k == "target" else _fmt(row[k]) for k in METRICS_HEADER))
    return "\n".join(lines) + "\n"


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_metrics(rows))
