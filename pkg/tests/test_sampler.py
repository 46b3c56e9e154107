import itertools
import math

import numpy as np
import pytest
from scipy import stats

from foldcrf import fb5, sampler
from foldcrf.anglemodel import AngleModel, AngleStateLibrary, potentials, sequence_log_prob
from foldcrf.sampler import SegmentChoice

from conftest import random_model, random_observation


def exact_distribution(model, obs, n, c):
    seqs = np.array(list(itertools.product(range(c), repeat=n)))
    p = np.array([math.exp(sequence_log_prob(model, obs, s)) for s in seqs])
    return seqs, p


def codes(samples, c):
    return samples @ (c ** np.arange(samples.shape[1])[::-1])


def total_variation(samples, p, c):
    freq = np.bincount(codes(samples, c), minlength=len(p)) / len(samples)
    return 0.5 * np.abs(freq - p).sum()


def chi2_fit_pvalue(samples, p, c, min_expected=5.0):
    """Goodness-of-fit p-value; cells expected below ``min_expected`` are pooled."""
    obs = np.bincount(codes(samples, c), minlength=len(p)).astype(float)
    exp = p * len(samples)
    small = exp < min_expected
    o = np.append(obs[~small], obs[small].sum())
    e = np.append(exp[~small], exp[small].sum())
    keep = e > 0
    return stats.chisquare(o[keep], e[keep] * o[keep].sum() / e[keep].sum()).pvalue


def test_uniform_model_position_frequencies():
    obs = random_observation(3, np.random.default_rng(0))
    s = sampler.sample_labels_full(AngleModel("CRF1", 100), obs, np.random.default_rng(1), size=100_000)
    counts = np.stack([np.bincount(s[:, i], minlength=100) for i in range(3)])
    sigma = math.sqrt(1000 * 0.99)
    # 3-sigma bands: about 0.3% of cells may fall outside by chance
    assert np.mean(np.abs(counts - 1000) > 3 * sigma) < 0.01
    for row in counts:
        assert stats.chisquare(row).pvalue > 0.001


@pytest.mark.parametrize("kind", ["CRF1", "CRF2", "CNF"])
def test_full_sampling_matches_enumeration(kind):
    rng = np.random.default_rng(2)
    obs = random_observation(5, rng)
    m = random_model(kind, 4, rng, w=2)
    _, p = exact_distribution(m, obs, 5, 4)
    s = sampler.sample_labels_full(m, obs, np.random.default_rng(3), size=200_000)
    assert chi2_fit_pvalue(s, p, 4) > 0.001
    assert total_variation(s, p, 4) < 0.04


def test_sampling_determinism(rng):
    obs = random_observation(7, rng)
    m = random_model("CRF2", 5, rng, w=1)
    a = sampler.sample_labels_full(m, obs, np.random.default_rng(4))
    b = sampler.sample_labels_full(m, obs, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kind", ["CRF1", "CRF2", "CNF"])
def test_segment_conditional_matches_enumeration(kind):
    rng = np.random.default_rng(5)
    n, c = 6, 3
    obs = random_observation(n, rng)
    m = random_model(kind, c, rng, w=1)
    seqs, p = exact_distribution(m, obs, n, c)
    labels = np.array([2, 0, 1, 1, 0, 2])
    seg = SegmentChoice(2, 2)
    keep = np.all(np.delete(seqs, [2, 3], axis=1) == np.delete(labels, [2, 3]), axis=1)
    cond = p[keep] / p[keep].sum()
    draws = sampler.resample_labels_segment(m, obs, labels, seg, np.random.default_rng(6), size=100_000)
    np.testing.assert_array_equal(np.delete(draws, [2, 3], axis=1), np.broadcast_to(np.delete(labels, [2, 3]), (100_000, 4)))
    inner = draws[:, 2] * c + draws[:, 3]
    want = seqs[keep][:, 2] * c + seqs[keep][:, 3]
    freq = np.bincount(inner, minlength=c * c)[want] / len(draws)
    assert 0.5 * np.abs(freq - cond).sum() < 0.01


def test_whole_chain_segment_equals_full(rng):
    obs = random_observation(5, rng)
    m = random_model("CRF2", 4, rng, w=1)
    _, p = exact_distribution(m, obs, 5, 4)
    s = sampler.resample_labels_segment(m, obs, np.zeros(5, int), SegmentChoice(0, 5), np.random.default_rng(7), size=200_000)
    assert chi2_fit_pvalue(s, p, 4) > 0.001


def test_length_one_segment_uniform_model():
    obs = random_observation(4, np.random.default_rng(0))
    labels = np.array([5, 17, 42, 99])
    s = sampler.resample_labels_segment(AngleModel("CRF2", 100), obs, labels, SegmentChoice(1, 1),
                                        np.random.default_rng(8), size=100_000)
    assert stats.chisquare(np.bincount(s[:, 1], minlength=100)).pvalue > 0.001
    assert np.all(s[:, [0, 2, 3]] == labels[[0, 2, 3]])


def test_segment_outside_chain_rejected(rng):
    obs = random_observation(4, rng)
    with pytest.raises(ValueError):
        sampler.resample_labels_segment(AngleModel("CRF1", 3, 1), obs, np.zeros(4, int), SegmentChoice(3, 2), rng)


def test_gibbs_block_update_is_stationary():
    rng = np.random.default_rng(9)
    n, c = 4, 3
    obs = random_observation(n, rng)
    m = random_model("CRF2", c, rng, w=1, scale=1.0)
    pot = potentials(m, obs)
    _, p = exact_distribution(m, obs, n, c)
    start = sampler.sample_labels_full(pot, None, rng, size=50_000)
    moved = np.empty_like(start)
    for k, lab in enumerate(start):
        seg = sampler.choose_segment(np.ones((n, 3)), rng, biased=False, length=int(rng.integers(1, 3)))
        moved[k] = sampler.resample_labels_segment(pot, None, lab, seg, rng)
    tv_start = total_variation(start, p, c)
    tv_moved = total_variation(moved, p, c)
    assert tv_moved < 0.04 and tv_start < 0.04


def _state(kappa, theta, tau):
    g1 = fb5.angles_to_unit(theta, tau)
    a = np.cross(g1, [0.0, 0.0, 1.0])
    g2 = a / np.linalg.norm(a)
    return fb5.Fb5Params(kappa, 0.0, g1, g2, np.cross(g1, g2))


def test_concentrated_state_angles():
    lib = AngleStateLibrary([_state(700.0, 1.9, 0.8), _state(700.0, 1.2, -2.0)])
    labels = np.array([0, 1] * 20)
    ic = sampler.draw_angles_for_labels(labels, lib, np.random.default_rng(10))
    assert ic.n_residues == 40
    th_want = np.where(labels[1:-1] == 0, 1.9, 1.2)
    ta_want = np.where(labels[2:-1] == 0, 0.8, -2.0)
    assert np.max(np.abs(ic.theta - th_want)) < 0.05 * 3
    assert np.max(np.abs(np.angle(np.exp(1j * (ic.tau - ta_want))))) < 0.05 * 5
    assert np.mean(np.abs(ic.theta - th_want)) < 0.05


def test_draws_delegate_to_fb5_stream():
    st = _state(5.0, 1.5, 0.3)
    lib = AngleStateLibrary([st])
    a = sampler.draw_unit_vectors(np.zeros(50, int), lib, np.random.default_rng(11))
    b = fb5.sample(st, np.random.default_rng(11), 50)
    np.testing.assert_array_equal(a, b)


def test_theta_clamped_away_from_poles():
    lib = AngleStateLibrary([_state(700.0, 1e-4, 0.0)])
    th, _ = sampler.draw_angles(np.zeros(200, int), lib, np.random.default_rng(12))
    assert np.all(th >= sampler.THETA_EPS)


def test_redraw_touches_only_segment(rng):
    lib = AngleStateLibrary([_state(3.0, 1.5, 0.3), _state(3.0, 2.0, -1.0)])
    labels = rng.integers(0, 2, 20)
    ic = sampler.draw_angles_for_labels(labels, lib, rng)
    out = sampler.redraw_angles(ic, labels, lib, SegmentChoice(5, 4), rng)
    changed_t = np.flatnonzero(out.theta != ic.theta) + 1
    changed_u = np.flatnonzero(out.tau != ic.tau) + 2
    assert set(changed_t) <= set(range(5, 9)) and set(changed_u) <= set(range(5, 9))
    assert len(changed_t) == 4


def test_choose_segment_helix_uniform_starts():
    rng = np.random.default_rng(13)
    ss = np.tile([1.0, 0, 0], (30, 1))
    starts = [sampler.choose_segment(ss, rng, True, length=5).start for _ in range(50_000)]
    assert stats.chisquare(np.bincount(starts, minlength=26)).pvalue > 0.001


def test_choose_segment_weight_ratio():
    rng = np.random.default_rng(14)
    ss = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    starts = np.array([sampler.choose_segment(ss, rng, True, length=1).start for _ in range(60_000)])
    p = np.mean(starts == 1)
    assert abs(p - 5 / 6) < 3 * math.sqrt(5 / 36 / 60_000) + 1e-3


def test_choose_segment_unbiased_uniform():
    rng = np.random.default_rng(15)
    ss = np.tile([0, 1.0, 0], (20, 1))
    segs = [sampler.choose_segment(ss, rng, biased=False) for _ in range(100_000)]
    lengths = np.array([s.length for s in segs])
    assert set(lengths) == set(range(1, 16))
    starts = np.array([s.start for s in segs])[lengths == 6]
    assert stats.chisquare(np.bincount(starts, minlength=15)).pvalue > 0.001
    assert all(0 <= s.start and s.stop <= 20 for s in segs)


def test_choose_segment_clamps_length():
    s = sampler.choose_segment(np.ones((3, 3)), np.random.default_rng(0), length=10)
    assert s.length == 3 and s.start == 0
