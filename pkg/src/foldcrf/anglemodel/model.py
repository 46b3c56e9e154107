"""CRF1 / CRF2 / CNF conditional models of angle-state sequences.

Observation features at residue ``j`` are the profile row ``M_j`` (scaled by
0.1), the secondary-structure likelihoods ``X_j`` and their same-position
outer product, 83 numbers per column; windows of ``2w + 1`` columns are
zero-padded past the chain ends.

Flat parameter layout (row-major blocks, in this order):

=========  ======================  =============================================
kind       block                   shape
=========  ======================  =============================================
all        ``edge``                (C, C)        lambda(h', h'')
CRF1/CRF2  ``label``               (D, C)        window features -> node score
CRF2       ``trip``                (C, C, C)     lambda(h', h'', h''')
CRF2       ``label_pair``          (D, C*C)      window features -> transition
CNF        ``trip``                (C, C, C)
CNF        ``gates``               (K, 23(2w+1) + 1)   gate weights, last column bias
CNF        ``out``                 (C + 1, C, K) w[s', s, g]; row C is the chain start
=========  ======================  =============================================

with ``D = 83 (2w + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from foldcrf.anglemodel import lattice

PROFILE_SCALE = 0.1
N_AA = 20
N_SS = 3
COL_FEATURES = N_AA * N_SS + N_SS + N_AA  # 83
GATE_COL = N_AA + N_SS  # 23
KINDS = ("CRF1", "CRF2", "CNF")


@dataclass
class Observation:
    profile: np.ndarray  # (n, 20), column order ARNDCQEGHILKMFPSTWYV
    ss: np.ndarray  # (n, 3), H E C
    name: str = ""

    def __post_init__(self):
        self.profile = np.asarray(self.profile, dtype=float)
        ss = np.asarray(self.ss, dtype=float)
        if self.profile.ndim != 2 or self.profile.shape[1] != N_AA:
            raise ValueError("profile must be (n, 20)")
        if ss.shape != (len(self.profile), N_SS):
            raise ValueError("ss must be (n, 3) matching the profile")
        sums = ss.sum(axis=1, keepdims=True)
        if np.any(ss < 0) or np.any(sums <= 0):
            raise ValueError("ss likelihoods must be non-negative with positive row sums")
        self.ss = ss / sums

    def __len__(self):
        return len(self.profile)


@dataclass
class TrainingExample:
    observation: Observation
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.shape != (len(self.observation),):
            raise ValueError("one label per residue required")


def _window(cols: np.ndarray, w: int) -> np.ndarray:
    n, d = cols.shape
    padded = np.zeros((n + 2 * w, d))
    padded[w : w + n] = cols
    return np.stack([padded[o : o + n] for o in range(2 * w + 1)], axis=1).reshape(n, -1)


def crf_features(obs: Observation, w: int) -> np.ndarray:
    m = obs.profile * PROFILE_SCALE
    x = obs.ss
    cross = (x[:, :, None] * m[:, None, :]).reshape(len(obs), -1)
    return _window(np.hstack([cross, x, m]), w)


def gate_inputs(obs: Observation, w: int) -> np.ndarray:
    f = _window(np.hstack([obs.profile * PROFILE_SCALE, obs.ss]), w)
    return np.hstack([f, np.ones((len(obs), 1))])


def block_shapes(kind: str, n_states: int, w: int, n_gates: int) -> list[tuple[str, tuple]]:
    C = n_states
    D = COL_FEATURES * (2 * w + 1)
    if kind == "CRF1":
        return [("edge", (C, C)), ("label", (D, C))]
    if kind == "CRF2":
        return [("edge", (C, C)), ("label", (D, C)), ("trip", (C, C, C)), ("label_pair", (D, C * C))]
    if kind == "CNF":
        G = GATE_COL * (2 * w + 1) + 1
        return [("edge", (C, C)), ("trip", (C, C, C)), ("gates", (n_gates, G)), ("out", (C + 1, C, n_gates))]
    raise ValueError(f"unknown model kind {kind!r}")


def n_params(kind: str, n_states: int, w: int = 4, n_gates: int = 0) -> int:
    return sum(int(np.prod(s)) for _, s in block_shapes(kind, n_states, w, n_gates))


@dataclass
class AngleModel:
    kind: str
    n_states: int = 100
    w: int = 4
    n_gates: int = 0
    params: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "CNF" and self.n_gates < 1:
            raise ValueError("CNF needs at least one gate")
        if self.kind != "CNF":
            self.n_gates = 0
        size = n_params(self.kind, self.n_states, self.w, self.n_gates)
        if self.params is None:
            self.params = np.zeros(size)
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (size,):
            raise ValueError(f"{self.kind} expects {size} parameters, got {self.params.size}")
        if not np.all(np.isfinite(self.params)):
            raise ValueError("non-finite model parameter")

    def blocks(self, params: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Named views into the flat parameter vector."""
        flat = self.params if params is None else params
        out = {}
        pos = 0
        for name, shape in block_shapes(self.kind, self.n_states, self.w, self.n_gates):
            size = int(np.prod(shape))
            out[name] = flat[pos : pos + size].reshape(shape)
            pos += size
        return out

    def with_params(self, params: np.ndarray) -> "AngleModel":
        return AngleModel(self.kind, self.n_states, self.w, self.n_gates, np.array(params, dtype=float))


@dataclass
class _Cache:
    feats: np.ndarray
    gates: np.ndarray | None = None


def _potentials(model: AngleModel, obs: Observation, params=None):
    b = model.blocks(params)
    n, C = len(obs), model.n_states
    trans = np.zeros((n, C, C))
    trans[1:] = b["edge"]
    if model.kind == "CNF":
        f = gate_inputs(obs, model.w)
        g = expit(f @ b["gates"].T)  # (n, K)
        node = np.zeros((n, C))
        node[0] = b["out"][C] @ g[0]
        trans[1:] += np.einsum("abk,ik->iab", b["out"][:C], g[1:])
        return lattice.Potentials(node, trans, b["trip"]), _Cache(f, g)
    phi = crf_features(obs, model.w)
    node = phi @ b["label"]
    trip = None
    if model.kind == "CRF2":
        trans[1:] += (phi[1:] @ b["label_pair"]).reshape(n - 1, C, C)
        trip = b["trip"]
    return lattice.Potentials(node, trans, trip), _Cache(phi)


def potentials(model: AngleModel, obs: Observation) -> lattice.Potentials:
    return _potentials(model, obs)[0]


def sequence_log_prob(model: AngleModel, obs: Observation, labels) -> float:
    pot = potentials(model, obs)
    return lattice.score(pot, labels) - lattice.log_partition(pot)


def label_feature_value(model: AngleModel, obs: Observation, i: int, s_prev: int | None, s: int) -> float:
    """Observation-dependent part of the score for ``S_{i-1} = s_prev, S_i = s``.

    ``s_prev`` is ignored at ``i = 0`` and by CRF1.
    """
    b = model.blocks()
    C = model.n_states
    if model.kind == "CNF":
        g = expit(gate_inputs(obs, model.w)[i] @ b["gates"].T)
        row = C if i == 0 or s_prev is None else s_prev
        return float(b["out"][row, s] @ g)
    phi = crf_features(obs, model.w)[i]
    val = float(phi @ b["label"][:, s])
    if model.kind == "CRF2" and i > 0 and s_prev is not None:
        val += float(phi @ b["label_pair"][:, s_prev * C + s])
    return val


def log_likelihood_grad(model: AngleModel, ex: TrainingExample, params=None) -> tuple[float, np.ndarray]:
    """log P(labels | obs) and its gradient with respect to the flat parameters.

    The gradient is the empirical minus expected feature count, pushed
    through the linear (CRF) or gated (CNF) map from parameters to scores.
    """
    params = model.params if params is None else params
    pot, cache = _potentials(model, ex.observation, params)
    marg = lattice.marginals(pot)
    s = ex.labels
    n, C = pot.n, pot.n_states
    ll = lattice.score(pot, s) - marg.log_z

    g_node = -marg.node
    g_node[np.arange(n), s] += 1.0
    g_pair = -marg.pair
    if n > 1:
        np.add.at(g_pair, (np.arange(1, n), s[:-1], s[1:]), 1.0)
    g_pair[0] = 0.0
    g_trip = None
    if pot.trip is not None:
        g_trip = np.zeros((C, C, C)) if marg.trip is None else -marg.trip
        if n >= 3:
            np.add.at(g_trip, (s[:-2], s[1:-1], s[2:]), 1.0)

    grad = np.zeros_like(params)
    gb = model.blocks(grad)
    b = model.blocks(params)
    gb["edge"][...] = g_pair[1:].sum(axis=0)
    if model.kind in ("CRF1", "CRF2"):
        gb["label"][...] = cache.feats.T @ g_node
    if model.kind == "CRF2":
        gb["trip"][...] = g_trip
        gb["label_pair"][...] = cache.feats[1:].T @ g_pair[1:].reshape(n - 1, C * C)
    if model.kind == "CNF":
        gb["trip"][...] = g_trip
        g = cache.gates
        gb["out"][:C] = np.einsum("iab,ik->abk", g_pair[1:], g[1:])
        gb["out"][C] = np.outer(g_node[0], g[0])
        d_gate = np.zeros_like(g)
        d_gate[1:] = np.einsum("iab,abk->ik", g_pair[1:], b["out"][:C])
        d_gate[0] = g_node[0] @ b["out"][C]
        gb["gates"][...] = (d_gate * g * (1.0 - g)).T @ cache.feats
    return float(ll), grad
