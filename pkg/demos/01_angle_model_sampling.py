# ---
# jupytext:
#   text_representation:
#     extension: .py
#     format_name: percent
# ---

# %% [markdown]
# # Angle states, FB5 directions and exact chain sampling
#
# A conformation is a chain of Cα pseudo angles. Each residue carries a
# hidden angle state, and each state owns an FB5 (Kent) distribution over
# unit directions. This notebook draws directions from one state, then
# draws whole label sequences from a small random CRF and compares the
# empirical frequencies with brute-force enumeration.

# %%
import itertools
import math

import numpy as np

from foldcrf import fb5, sampler
from foldcrf.anglemodel import AngleModel, Observation, sequence_log_prob

rng = np.random.default_rng(0)

# %% [markdown]
# ## One FB5 state
# With β = 0 the FB5 density reduces to von Mises-Fisher, whose mean
# resultant length is coth(κ) − 1/κ.

# %%
u = fb5.sample(fb5.Fb5Params(4.0, 0.0), rng, 100_000)
print("mean resultant length", np.linalg.norm(u.mean(axis=0)), "expected", 1 / math.tanh(4) - 0.25)

fitted = fb5.fit_moments(fb5.sample(fb5.Fb5Params(10.0, 2.0), rng, 100_000))
print(f"moment fit: kappa {fitted.kappa:.2f} (10), beta {fitted.beta:.2f} (2)")

# %% [markdown]
# ## Forward filtering, backward sampling
# Five residues and four states give 4^5 = 1024 labelings, few enough to
# enumerate.

# %%
obs = Observation(rng.normal(size=(5, 20)) * 3, rng.dirichlet(np.ones(3), 5))
model = AngleModel("CRF2", 4, 2)
model = model.with_params(rng.standard_normal(model.params.size))

seqs = np.array(list(itertools.product(range(4), repeat=5)))
exact = np.array([math.exp(sequence_log_prob(model, obs, s)) for s in seqs])
draws = sampler.sample_labels_full(model, obs, rng, size=200_000)
freq = np.bincount(draws @ (4 ** np.arange(5)[::-1]), minlength=1024) / len(draws)
print("sum of exact probabilities", exact.sum())
print("total variation", 0.5 * np.abs(freq - exact).sum())

# %%
top = np.argsort(exact)[::-1][:5]
for k in top:
    print(seqs[k], f"exact {exact[k]:.4f}  sampled {freq[k]:.4f}")
