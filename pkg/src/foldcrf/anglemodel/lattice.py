"""Exact inference on linear-chain label lattices of order one or two.

A sequence ``S`` of length ``n`` over ``C`` states scores

    sum_i node[i, S_i] + sum_{i>=1} trans[i, S_{i-1}, S_i]
        + sum_{1<=i<=n-2} trip[S_{i-1}, S_i, S_{i+1}]

and ``P(S) = exp(score) / Z``.  Second-order chains run on the pair-state
lattice; ``alpha[i][a, b]`` is the log-sum over prefixes ending with
``S_{i-1} = a, S_i = b``.  All quantities are kept in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Potentials:
    node: np.ndarray  # (n, C)
    trans: np.ndarray  # (n, C, C); trans[0] is unused
    trip: np.ndarray | None = None  # (C, C, C)

    @property
    def n(self) -> int:
        return self.node.shape[0]

    @property
    def n_states(self) -> int:
        return self.node.shape[1]

    @property
    def second_order(self) -> bool:
        return self.trip is not None and self.n >= 3

    def masked(self, allowed: np.ndarray) -> "Potentials":
        """Copy with disallowed (position, state) cells set to -inf."""
        node = np.where(allowed, self.node, -np.inf)
        return Potentials(node, self.trans, self.trip)

    def window(self, lo: int, hi: int) -> "Potentials":
        """Sub-lattice over positions lo..hi-1."""
        trans = self.trans[lo:hi].copy()
        trans[0] = 0.0
        return Potentials(self.node[lo:hi], trans, self.trip)


def _lse(x, axis):
    """log-sum-exp along one axis; all -inf slices give -inf."""
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(x - m), axis=axis)) + np.squeeze(m, axis=axis)


def score(p: Potentials, labels) -> float:
    s = np.asarray(labels)
    idx = np.arange(p.n)
    total = p.node[idx, s].sum()
    if p.n > 1:
        total += p.trans[idx[1:], s[:-1], s[1:]].sum()
    if p.second_order:
        total += p.trip[s[:-2], s[1:-1], s[2:]].sum()
    return float(total)


def forward(p: Potentials):
    """Forward tables and log Z.

    First order: list of (C,) arrays.  Second order: ``alpha[0]`` is the
    (C,) node vector and ``alpha[i]`` (i >= 1) are (C, C) pair tables.
    """
    n = p.n
    if not p.second_order:
        alpha = [p.node[0]]
        for i in range(1, n):
            alpha.append(_lse(alpha[-1][:, None] + p.trans[i], axis=0) + p.node[i])
        return alpha, float(_lse(alpha[-1], axis=0))
    alpha = [p.node[0], p.node[0][:, None] + p.node[1][None, :] + p.trans[1]]
    for i in range(2, n):
        prev = _lse(alpha[-1][:, :, None] + p.trip, axis=0)
        alpha.append(prev + p.node[i][None, :] + p.trans[i])
    return alpha, float(_lse(alpha[-1].ravel(), axis=0))


def backward(p: Potentials):
    n = p.n
    C = p.n_states
    if not p.second_order:
        beta = [np.zeros(C) for _ in range(n)]
        for i in range(n - 2, -1, -1):
            beta[i] = _lse(p.trans[i + 1] + (p.node[i + 1] + beta[i + 1])[None, :], axis=1)
        return beta
    beta = [None] + [np.zeros((C, C)) for _ in range(n - 1)]
    for i in range(n - 2, 0, -1):
        nxt = p.trip + (p.node[i + 1][None, :] + p.trans[i + 1] + beta[i + 1])[None, :, :]
        beta[i] = _lse(nxt, axis=2)
    return beta


def log_partition(p: Potentials) -> float:
    return forward(p)[1]


@dataclass
class Marginals:
    node: np.ndarray  # (n, C)
    pair: np.ndarray  # (n, C, C); pair[0] is zero
    trip: np.ndarray | None  # (C, C, C) summed over centres
    log_z: float


def marginals(p: Potentials) -> Marginals:
    n, C = p.n, p.n_states
    alpha, log_z = forward(p)
    beta = backward(p)
    pair = np.zeros((n, C, C))
    if not p.second_order:
        node = np.exp(np.array(alpha) + np.array(beta) - log_z)
        for i in range(1, n):
            pair[i] = np.exp(
                alpha[i - 1][:, None] + p.trans[i] + (p.node[i] + beta[i])[None, :] - log_z
            )
        trip = np.zeros((C, C, C)) if p.trip is not None else None
        return Marginals(node, pair, trip, log_z)
    for i in range(1, n):
        pair[i] = np.exp(alpha[i] + beta[i] - log_z)
    node = np.empty((n, C))
    node[0] = pair[1].sum(axis=1)
    node[1:] = pair[1:].sum(axis=1)
    trip = np.zeros((C, C, C))
    for i in range(1, n - 1):
        trip += np.exp(
            alpha[i][:, :, None]
            + p.trip
            + (p.node[i + 1][None, :] + p.trans[i + 1] + beta[i + 1])[None, :, :]
            - log_z
        )
    return Marginals(node, pair, trip, log_z)


def viterbi(p: Potentials) -> np.ndarray:
    """Most probable label sequence (ties resolved towards lower ids)."""
    n, C = p.n, p.n_states
    if n == 1:
        return np.array([int(np.argmax(p.node[0]))])
    if not p.second_order:
        delta = p.node[0]
        back = []
        for i in range(1, n):
            cand = delta[:, None] + p.trans[i]
            back.append(np.argmax(cand, axis=0))
            delta = cand.max(axis=0) + p.node[i]
        out = [int(np.argmax(delta))]
        for bp in reversed(back):
            out.append(int(bp[out[-1]]))
        return np.array(out[::-1])
    delta = p.node[0][:, None] + p.node[1][None, :] + p.trans[1]
    back = []
    for i in range(2, n):
        cand = delta[:, :, None] + p.trip
        back.append(np.argmax(cand, axis=0))  # (b, c) -> a
        delta = cand.max(axis=0) + p.node[i][None, :] + p.trans[i]
    a, b = np.unravel_index(int(np.argmax(delta)), (C, C))
    out = [int(b), int(a)]
    for bp in reversed(back):
        out.append(int(bp[out[-1], out[-2]]))
    return np.array(out[::-1])


def _draw(logw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw per row of (m, K) log weights, categories in index order."""
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    cdf = np.cumsum(w, axis=1)
    u = rng.random(len(w)) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, w.shape[1] - 1)


def _draw_shared(logw: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` inverse-CDF draws from one vector of log weights (same stream as :func:`_draw`)."""
    w = np.exp(logw - logw.max())
    cdf = np.cumsum(w)
    u = rng.random(size) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(w) - 1)


def sample(p: Potentials, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Exact draws from P(S); returns an int array (size, n).

    Last label (or label pair) first, then backwards, each conditional drawn
    by inverse CDF over states in ascending id order.
    """
    n, C = p.n, p.n_states
    alpha, _ = forward(p)
    out = np.zeros((size, n), dtype=int)
    if not p.second_order:
        out[:, n - 1] = _draw_shared(alpha[n - 1], rng, size)
        for i in range(n - 2, -1, -1):
            logw = alpha[i][None, :] + p.trans[i + 1][:, out[:, i + 1]].T
            out[:, i] = _draw(logw, rng)
        return out
    flat = _draw_shared(alpha[n - 1].ravel(), rng, size)
    out[:, n - 2], out[:, n - 1] = np.divmod(flat, C)
    for i in range(n - 3, -1, -1):
        b = out[:, i + 1]
        c = out[:, i + 2]
        # alpha[i + 1][a, b] covers S_i = a, S_{i+1} = b
        logw = alpha[i + 1][:, b].T + p.trip[:, b, c].T
        out[:, i] = _draw(logw, rng)
    return out
