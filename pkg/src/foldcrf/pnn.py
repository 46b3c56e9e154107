"""Probabilistic neural network for Cα–Cα distance distributions.

The network maps a pair feature vector ``x = [S_i | S_j | r_g]`` to 13 bin
probabilities through two sigmoid layers::

    phi(x, d) = sum_a W0[d, a] h( sum_b W1[a, b] h(<W2[b], x>) )
    p(d | x) = softmax_d phi(x, d)

with ``h(x) = 1 / (1 + exp(x))``.  ``W2`` sees the input (``h2`` rows),
``W0`` feeds the output (``h1`` columns).  No bias terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax

from foldcrf.optim import lbfgs

N_BINS = 13
# bin k covers [3 + k, 4 + k) for k < 12; bin 12 is [15, inf)
CA_BIN_EDGES = np.arange(4.0, 16.0)
WINDOW = 15
HALF_WINDOW = WINDOW // 2
PROFILE_SCALE = 0.1
RG_SCALE = 0.1
N_FEATURES = 2 * 20 * WINDOW + 1  # 601
DEFAULT_H1 = 100
DEFAULT_H2 = 40


class PnnTrainingError(RuntimeError):
    pass


def estimate_rg(n_residues: int) -> float:
    """Empirical radius of gyration of a compact chain, 2.2 N^0.38 Å."""
    if n_residues < 1:
        raise ValueError("need at least one residue")
    return 2.2 * float(n_residues) ** 0.38


def distance_bin(d):
    """13-bin index of Cα–Cα distances (below 3 Å folds into bin 0)."""
    return np.searchsorted(CA_BIN_EDGES, np.asarray(d, dtype=float), side="right")


def _h(x):
    return expit(-x)


def profile_windows(profile: np.ndarray) -> np.ndarray:
    """(n, 300) scaled 15-column profile contexts, zero-padded past the ends."""
    profile = np.asarray(profile, dtype=float) * PROFILE_SCALE
    n = len(profile)
    padded = np.zeros((n + 2 * HALF_WINDOW, 20))
    padded[HALF_WINDOW : HALF_WINDOW + n] = profile
    return np.stack([padded[o : o + n] for o in range(WINDOW)], axis=1).reshape(n, -1)


def build_features(profile: np.ndarray, i: int, j: int, n_residues: int | None = None) -> np.ndarray:
    """Feature vector of the residue pair (i, j), 0-based with i < j."""
    n = len(profile) if n_residues is None else n_residues
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < {n}, got i={i}, j={j}")
    return pair_features(profile, np.array([[i, j]]), n)[0]


def pair_features(profile: np.ndarray, pairs: np.ndarray, n_residues: int | None = None) -> np.ndarray:
    """Stacked features for an (m, 2) array of ordered pairs."""
    n = len(profile) if n_residues is None else n_residues
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if np.any(pairs[:, 0] >= pairs[:, 1]) or pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise ValueError("pairs must satisfy 0 <= i < j < n")
    win = profile_windows(profile)
    rg = np.full((len(pairs), 1), estimate_rg(n) * RG_SCALE)
    return np.hstack([win[pairs[:, 0]], win[pairs[:, 1]], rg])


@dataclass
class PnnModel:
    w0: np.ndarray  # (13, h1)
    w1: np.ndarray  # (h1, h2)
    w2: np.ndarray  # (h2, n_in)

    def __post_init__(self):
        self.w0, self.w1, self.w2 = (np.asarray(a, dtype=float) for a in (self.w0, self.w1, self.w2))
        h1, h2 = self.w1.shape
        if self.w0.shape != (N_BINS, h1) or self.w2.shape[0] != h2:
            raise ValueError("inconsistent layer shapes")
        if not all(np.all(np.isfinite(a)) for a in (self.w0, self.w1, self.w2)):
            raise ValueError("non-finite network weight")

    @property
    def n_in(self) -> int:
        return self.w2.shape[1]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.n_in, self.w1.shape[0], self.w1.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w0.ravel(), self.w1.ravel(), self.w2.ravel()])

    @classmethod
    def zeros(cls, n_in: int = N_FEATURES, h1: int = DEFAULT_H1, h2: int = DEFAULT_H2) -> "PnnModel":
        return cls(np.zeros((N_BINS, h1)), np.zeros((h1, h2)), np.zeros((h2, n_in)))

    @classmethod
    def from_flat(cls, flat: np.ndarray, n_in: int, h1: int = DEFAULT_H1, h2: int = DEFAULT_H2) -> "PnnModel":
        flat = np.asarray(flat, dtype=float)
        a, b = N_BINS * h1, N_BINS * h1 + h1 * h2
        if flat.size != b + h2 * n_in:
            raise ValueError(f"expected {b + h2 * n_in} weights, got {flat.size}")
        return cls(flat[:a].reshape(N_BINS, h1), flat[a:b].reshape(h1, h2), flat[b:].reshape(h2, n_in))

    def write(self, path) -> None:
        n_in, h1, h2 = self.sizes
        with open(path, "w") as fh:
            fh.write(f"PNN v1 in={n_in} h1={h1} h2={h2} out={N_BINS}\n")
            for v in self.flat():
                fh.write(f"{float(v)!r}\n")

    @classmethod
    def read(cls, path) -> "PnnModel":
        with open(path) as fh:
            header = fh.readline().split()
            if header[:2] != ["PNN", "v1"]:
                raise ValueError(f"{path}:1: not a PNN v1 file")
            fields = dict(kv.split("=", 1) for kv in header[2:])
            if int(fields.get("out", N_BINS)) != N_BINS:
                raise ValueError(f"{path}:1: expected out={N_BINS}")
            vals = []
            for lineno, line in enumerate(fh, 2):
                if line.strip():
                    try:
                        vals.append(float(line))
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: bad weight {line.strip()!r}") from None
        return cls.from_flat(np.array(vals), int(fields["in"]), int(fields["h1"]), int(fields["h2"]))


def _forward(m: PnnModel, x: np.ndarray):
    h2 = _h(x @ m.w2.T)  # (k, h2)
    h1 = _h(h2 @ m.w1.T)  # (k, h1)
    logits = h1 @ m.w0.T  # (k, 13)
    return h2, h1, logits


def log_distribution(m: PnnModel, x: np.ndarray) -> np.ndarray:
    return log_softmax(_forward(m, np.atleast_2d(x))[2], axis=1)


def forward_distribution(m: PnnModel, x: np.ndarray) -> np.ndarray:
    """Bin probabilities for one feature vector (13,) or a stack (k, 13)."""
    x = np.asarray(x, dtype=float)
    p = np.exp(log_distribution(m, x))
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if x.ndim == 1 else p


def nll_and_gradient(m: PnnModel, x: np.ndarray, bins, lam: float = 0.0, bin_weights=None):
    """``sum_k -w[d_k] log p(d_k | x_k) + lam |theta|^2`` and its gradient.

    The gradient is returned as a flat array in :meth:`PnnModel.flat` order.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    bins = np.asarray(bins, dtype=int)
    wk = np.ones(len(bins)) if bin_weights is None else np.asarray(bin_weights, dtype=float)[bins]
    h2, h1, logits = _forward(m, x)
    logp = log_softmax(logits, axis=1)
    rows = np.arange(len(bins))
    flat = m.flat()
    loss = -float(np.sum(wk * logp[rows, bins])) + lam * float(flat @ flat)

    d_logits = np.exp(logp)
    d_logits[rows, bins] -= 1.0
    d_logits *= wk[:, None]
    g0 = d_logits.T @ h1
    d_a1 = (d_logits @ m.w0) * (-h1 * (1.0 - h1))
    g1 = d_a1.T @ h2
    d_a2 = (d_a1 @ m.w1) * (-h2 * (1.0 - h2))
    g2 = d_a2.T @ x
    grad = np.concatenate([g0.ravel(), g1.ravel(), g2.ravel()]) + 2.0 * lam * flat
    return loss, grad


def train_pnn(
    x: np.ndarray,
    bins,
    lam: float = 1e-3,
    max_iter: int = 500,
    seed: int = 0,
    h1: int = DEFAULT_H1,
    h2: int = DEFAULT_H2,
    bin_weights=None,
    n_restarts: int = 1,
) -> PnnModel:
    """Fit the network by L-BFGS from uniform(-0.1, 0.1) starts; best restart wins."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    bins = np.asarray(bins, dtype=int)
    if len(x) == 0 or len(x) != len(bins):
        raise ValueError("need a non-empty dataset with one bin per feature row")
    if bins.min() < 0 or bins.max() >= N_BINS:
        raise ValueError("bin index outside 0..12")
    n_in = x.shape[1]
    rng = np.random.default_rng(seed)
    best = None
    for r in range(n_restarts):
        x0 = rng.uniform(-0.1, 0.1, size=PnnModel.zeros(n_in, h1, h2).flat().size)

        def fg(flat):
            return nll_and_gradient(PnnModel.from_flat(flat, n_in, h1, h2), x, bins, lam, bin_weights)

        res = lbfgs(fg, x0, max_iter, PnnTrainingError, f"PNN restart {r}: ")
        if best is None or res.fun < best.fun:
            best = res
    return PnnModel.from_flat(best.x, n_in, h1, h2)
