# ---
# jupytext:
#   text_representation:
#     extension: .py
#     format_name: percent
# ---

# %% [markdown]
# # Reference state and distance potentials
#
# Pairwise potentials score a distance d against a reference density for
# two points placed uniformly in a sphere whose radius follows from the
# radius of gyration, a = sqrt(5/3) r_g.

# %%
import math

import numpy as np
from scipy import integrate

from foldcrf import synthetic
from foldcrf.geometry import build_trace_from_internal, internal_from_trace, radius_of_gyration
from foldcrf.potentials import (
    bin_masses,
    build_distance_table,
    reference_state_density,
    table_potential,
)
from foldcrf.potentials.energy import Conformation
from foldcrf.potentials.tables import scheme_edges

# %%
rg = math.sqrt(3 / 5)  # sphere radius 1
print("q(1) with a = 1:", reference_state_density(1.0, rg), "expected", 15 / 16)
for rg in (5.0, 12.0):
    a = math.sqrt(5 / 3) * rg
    val, _ = integrate.quad(lambda d: reference_state_density(d, rg), 0, 2 * a)
    print(f"rg {rg}: integral over [0, 2a] = {val:.12f}")

# %% [markdown]
# Bin masses of the reference state over the Cα distance bins.

# %%
edges, cut = scheme_edges("ca")
print(np.round(bin_masses(edges, 10.0), 4))

# %% [markdown]
# ## A table potential from a structure family
# Counts come from a native and 19 copies with every pseudo angle jittered
# by 0.05 rad. With a single structure the pseudocounts would dominate:
# most pairs of an extended chain fall in the open last bin, where the
# reference mass is close to 0.9 and one observation cannot outweigh it.

# %%
rng = np.random.default_rng(1)
bb, _ = synthetic.random_protein(40, rng)
ic0 = internal_from_trace(bb.CA)
family = []
for _ in range(20):
    ic = ic0.copy()
    ic.theta = np.clip(ic.theta + 0.05 * rng.standard_normal(ic.theta.size), 0.01, np.pi - 0.01)
    ic.tau = np.angle(np.exp(1j * (ic.tau + 0.05 * rng.standard_normal(ic.tau.size))))
    family.append(Conformation(build_trace_from_internal(ic), bb.sequence))
pot = table_potential(build_distance_table(family, pseudocount=0.1), bb.sequence, radius_of_gyration(bb.CA))
other, _ = synthetic.random_protein(40, rng)
print("native energy", pot.energy(Conformation(bb.CA, bb.sequence)))
print("unrelated trace energy", pot.energy(Conformation(other.CA, bb.sequence)))
