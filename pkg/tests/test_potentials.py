import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from foldcrf import pnn
from foldcrf.geometry import BackboneAtoms, place_hn
from foldcrf.pnn import PnnModel
from foldcrf.potentials import (
    Conformation,
    ConditionalTable,
    DistanceTable,
    EnergyModel,
    EspComponent,
    EspTable,
    HbondTable,
    RadiusComponent,
    bin_masses,
    build_conditional_table,
    build_distance_table,
    conditional_nonca_distribution,
    coordination_counts,
    epad_energy,
    epad_nonca_potential,
    epad_potential,
    esp_build,
    esp_energy,
    esp_from_counts,
    hbond_descriptors,
    hbond_energy,
    parse_weights,
    reference_cdf,
    reference_state_density,
    table_energy,
    table_potential,
    total_energy,
)
from foldcrf.potentials.esp import MAX_COUNT, N_RBINS, R_EDGES, r_bin
from foldcrf.potentials.tables import count_pairs, scheme_edges
from foldcrf.residues import AMINO_ACIDS
from foldcrf.synthetic import random_protein

from conftest import random_rotation

CA_EDGES = scheme_edges("ca")[0]


def protein_conf(n, rng, hn=True):
    bb, _ = random_protein(n, rng)
    if hn:
        bb = place_hn(bb)
    return Conformation(bb.CA, bb.sequence, backbone=bb)


def moved(conf, rng):
    rot = random_rotation(rng)
    shift = rng.normal(size=3) * 20
    bb = conf.backbone.transformed(rot, shift)
    return Conformation(bb.CA, conf.sequence, backbone=bb)


def four_residue_conf(d, seq="AGLV"):
    """Only residues 0 and 3 are three apart; their distance is ``d``."""
    trace = np.array([[0.0, 0, 0], [3.8, 0, 0], [3.8, 3.8, 0], [d, 0, 0]])
    return Conformation(trace, seq)


def quad_mass(lo, hi, rg):
    a = math.sqrt(5 / 3) * rg
    hi = min(hi, 2 * a)
    if lo >= hi:
        return 0.0
    return integrate.quad(lambda d: reference_state_density(d, rg), lo, hi, epsabs=1e-14, epsrel=1e-13)[0]


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# --- reference state -----------------------------------------------------------


def test_reference_hand_value():
    rg = math.sqrt(3 / 5)
    assert abs(reference_state_density(1.0, rg) - 15 / 16) < 1e-12


def test_reference_roots_exact():
    for rg in (0.5, 3.0, 12.66):
        a = math.sqrt(5 / 3) * rg
        assert reference_state_density(0.0, rg) == 0.0
        assert reference_state_density(2 * a, rg) == 0.0
        assert reference_state_density(2 * a + 1, rg) == 0.0


def test_reference_symbolic_integral():
    # with a = 1: 3/16 * (2^6/6 - 12*2^4/4 + 16*2^3/3) = 3/16 * 16/3
    two = Fraction(2)
    val = Fraction(3, 16) * (two**6 / 6 - 12 * two**4 / 4 + 16 * two**3 / 3)
    assert val == 1


def test_reference_integrates_to_one():
    rng = np.random.default_rng(0)
    for rg in rng.uniform(1, 40, 10):
        a = math.sqrt(5 / 3) * rg
        val, _ = integrate.quad(lambda d: reference_state_density(d, rg), 0, 2 * a, epsabs=1e-13, epsrel=1e-12)
        assert abs(val - 1) < 1e-10
        assert reference_cdf(2 * a, rg) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 40), st.floats(0, 1))
def test_reference_cdf_matches_quadrature(rg, frac):
    a = math.sqrt(5 / 3) * rg
    d = frac * 2 * a
    assert reference_cdf(d, rg) == pytest.approx(quad_mass(0, d, rg), abs=1e-10)
    assert reference_state_density(d, rg) >= 0


def test_bin_masses_sum_and_quadrature():
    for rg in (4.0, 12.0):
        m = bin_masses(CA_EDGES, rg)
        assert m.sum() == pytest.approx(1.0, abs=1e-12)
        bounds = np.concatenate([[0.0], CA_EDGES, [np.inf]])
        want = [quad_mass(lo, hi, rg) for lo, hi in zip(bounds[:-1], bounds[1:])]
        np.testing.assert_allclose(m, want, atol=1e-10)


def test_reference_rejects_bad_rg():
    with pytest.raises(ValueError):
        reference_state_density(1.0, 0.0)


# --- distance tables ------------------------------------------------------------


def test_single_observation_probability_one():
    t = build_distance_table([four_residue_conf(8.5)], pseudocount=0.0)
    assert list(t.probs) == [("A", "V")]
    want = np.zeros(13)
    want[5] = 1.0
    np.testing.assert_array_equal(t.lookup("V", "A"), want)


def test_pseudocount_formula_matches_counts(rng):
    confs = [protein_conf(25, rng, hn=False) for _ in range(3)]
    t = build_distance_table(confs, pseudocount=2.0)
    counts = {}
    for c in confs:
        for i in range(25):
            for j in range(i + 3, 25):
                key = tuple(sorted((c.sequence[i], c.sequence[j])))
                b = int(pnn.distance_bin(np.linalg.norm(c.trace[i] - c.trace[j])))
                counts.setdefault(key, np.zeros(13))[b] += 1
    assert set(counts) == set(t.probs)
    for key, c in counts.items():
        np.testing.assert_allclose(t.probs[key], (c + 2.0) / (c.sum() + 26.0), rtol=1e-12)
        assert t.probs[key].sum() == pytest.approx(1.0, abs=1e-9)


def test_pseudocount_only_gives_uniform():
    # pairs beyond 15 A are outside the non-Cα scheme, so the type pair has no counts
    trace = np.array([[0.0, 0, 0], [3.8, 0, 0], [3.8, 3.8, 0], [30.0, 0, 0]])
    bb = BackboneAtoms(trace, trace, trace, trace, trace, "AGLV")
    conf = Conformation(trace, "AGLV", backbone=bb)
    counts = count_pairs([conf], "nonca", ("N", "O"))
    # unordered keys of ordered (N, O) pairs; none is within range
    assert all(c.sum() == 0 for c in counts.values())
    t = build_distance_table([conf], "nonca", pseudocount=1.0, atoms=("N", "O"))
    for p in t.probs.values():
        np.testing.assert_allclose(p, 1 / 26)


def test_table_equal_to_reference_scores_zero(rng):
    conf = protein_conf(40, rng, hn=False)
    rg = 11.0
    qbar = bin_masses(CA_EDGES, rg)
    types = sorted(set(conf.sequence))
    t = DistanceTable("ca", {(a, b): qbar for a in types for b in types if a <= b})
    assert table_energy(t, conf, rg) == 0.0


def test_table_hand_case():
    rg = 10.0
    p = np.linspace(1, 2, 13)
    p /= p.sum()
    t = DistanceTable("ca", {("A", "V"): p})
    conf = four_residue_conf(8.5)
    want = -math.log(p[5] / quad_mass(8.0, 9.0, rg))
    assert table_energy(t, conf, rg) == pytest.approx(want, rel=1e-9)
    # beyond the reference diameter the pair does not score
    assert table_energy(t, four_residue_conf(2 * math.sqrt(5 / 3) * rg + 0.1), rg) == 0.0


def test_unknown_pair_types_score_zero():
    t = DistanceTable("ca", {("W", "W"): np.full(13, 1 / 13)})
    assert table_energy(t, four_residue_conf(8.5), 10.0) == 0.0


def test_table_rigid_invariance(rng):
    conf = protein_conf(30, rng, hn=False)
    t = build_distance_table([protein_conf(30, rng, hn=False) for _ in range(2)])
    e0 = table_energy(t, conf, 9.0)
    rot = random_rotation(rng)
    c2 = Conformation(conf.trace @ rot.T + rng.normal(size=3) * 30, conf.sequence)
    assert close(table_energy(t, c2, 9.0), e0)


def test_nonca_table_and_invariance(rng):
    confs = [protein_conf(20, rng) for _ in range(2)]
    t = build_distance_table(confs, "nonca", atoms=("N", "O"))
    for p in t.probs.values():
        assert p.shape == (26,) and p.sum() == pytest.approx(1, abs=1e-9)
    conf = protein_conf(20, rng)
    e0 = table_energy(t, conf, 8.0, ("N", "O"))
    assert close(table_energy(t, moved(conf, rng), 8.0, ("N", "O")), e0)


def test_distance_table_file_round_trip(tmp_path, rng):
    t = build_distance_table([protein_conf(20, rng, hn=False)])
    path = tmp_path / "t.tsv"
    t.write(path)
    text = path.read_text()
    assert "# interior bin edges (A): 4 5 6" in text
    back = DistanceTable.read(path)
    assert set(back.probs) == set(t.probs)
    for k in t.probs:
        np.testing.assert_array_equal(back.probs[k], t.probs[k])


def test_distance_table_rejects_bad_rows(tmp_path):
    with pytest.raises(ValueError):
        DistanceTable("ca", {("A", "A"): np.full(13, 0.5)})
    with pytest.raises(ValueError):
        DistanceTable("bogus", {})
    path = tmp_path / "t.tsv"
    path.write_text("# scheme=ca\nA\tA\t0\t1.0\n")
    with pytest.raises(ValueError):
        DistanceTable.read(path)


# --- EPAD ---------------------------------------------------------------------


def reference_pnn(rg):
    """Network whose every output equals the reference bin masses."""
    m = PnnModel.zeros(pnn.N_FEATURES, 2, 2)
    # hidden units sit at h(0) = 1/2, so a weight of 2 ln q on one unit gives logit ln q
    m.w0[:, 0] = 2 * np.log(bin_masses(CA_EDGES, rg))
    return m


def test_epad_reference_network_scores_zero(rng):
    conf = protein_conf(30, rng, hn=False)
    prof = rng.normal(size=(30, 20))
    assert abs(epad_energy(reference_pnn(12.0), prof, conf, rg=12.0)) < 1e-9


def test_epad_single_pair_composition(rng):
    m = PnnModel.from_flat(rng.normal(size=PnnModel.zeros(pnn.N_FEATURES, 4, 3).flat().size) * 0.3,
                           pnn.N_FEATURES, 4, 3)
    prof = rng.normal(size=(4, 20))
    conf = four_residue_conf(8.5)
    rg = pnn.estimate_rg(4) * 3  # keep the reference sphere wider than 9 A
    p = pnn.forward_distribution(m, pnn.build_features(prof, 0, 3))
    want = -math.log(p[5] / quad_mass(8.0, 9.0, rg))
    assert epad_energy(m, prof, conf, rg=rg) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("m_res", [3, 4, 5, 9, 17])
def test_epad_pair_count(m_res, rng):
    prof = rng.normal(size=(m_res, 20))
    pot = epad_potential(PnnModel.zeros(pnn.N_FEATURES, 2, 2), prof, rg=10.0)
    brute = [(i, j) for i in range(m_res) for j in range(m_res) if j - i >= 3]
    assert list(zip(pot.i, pot.j)) == brute
    assert len(brute) == m_res * (m_res - 5) // 2 + 3


def test_epad_rigid_invariance(rng):
    conf = protein_conf(25, rng, hn=False)
    prof = rng.normal(size=(25, 20))
    m = PnnModel.from_flat(rng.normal(size=PnnModel.zeros(pnn.N_FEATURES, 3, 3).flat().size) * 0.3,
                           pnn.N_FEATURES, 3, 3)
    e0 = epad_energy(m, prof, conf)
    rot = random_rotation(rng)
    c2 = Conformation(conf.trace @ rot.T - 17.0, conf.sequence)
    assert close(epad_energy(m, prof, c2), e0)


def test_epad_nonca_uses_conditional_mixture(rng):
    confs = [protein_conf(15, rng) for _ in range(2)]
    cond = build_conditional_table(confs, ("N", "O"))
    conf = protein_conf(15, rng)
    prof = rng.normal(size=(15, 20))
    m = PnnModel.from_flat(rng.normal(size=PnnModel.zeros(pnn.N_FEATURES, 3, 3).flat().size) * 0.3,
                           pnn.N_FEATURES, 3, 3)
    pot = epad_nonca_potential(m, prof, conf.sequence, cond, rg=9.0)
    # different atom names: both orders of every eligible residue pair
    assert len(pot.i) == sum(1 for i in range(15) for j in range(15) if abs(i - j) >= 3)
    k = int(np.flatnonzero((pot.i == 9) & (pot.j == 2))[0])
    row = cond.lookup(f"{conf.sequence[9]}:N", f"{conf.sequence[2]}:O")
    p_ca = pnn.forward_distribution(m, pnn.build_features(prof, 2, 9))
    mix = conditional_nonca_distribution(row, p_ca)
    edges = scheme_edges("nonca")[0]
    np.testing.assert_allclose(pot.scores[k], -np.log(mix / bin_masses(edges, 9.0)), rtol=1e-12)
    e0 = pot.energy(conf)
    assert close(pot.energy(moved(conf, rng)), e0)


def test_conditional_mixture_properties(rng):
    cond = rng.dirichlet(np.ones(26), 13)
    for c in range(13):
        onehot = np.zeros(13)
        onehot[c] = 1
        np.testing.assert_allclose(conditional_nonca_distribution(cond, onehot), cond[c], rtol=1e-12)
    np.testing.assert_allclose(conditional_nonca_distribution(cond, np.full(13, 1 / 13)), cond.mean(axis=0), rtol=1e-12)
    for _ in range(20):
        out = conditional_nonca_distribution(cond, rng.dirichlet(np.ones(13)))
        assert abs(out.sum() - 1) < 1e-12 and np.all(out >= 0)
    with pytest.raises(ValueError):
        conditional_nonca_distribution(cond[:5], np.full(13, 1 / 13))


def test_conditional_table_rows_are_distributions(rng):
    cond = build_conditional_table([protein_conf(20, rng) for _ in range(2)], ("CB", "CB"))
    assert isinstance(cond, ConditionalTable)
    for rows in cond.rows.values():
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)


# --- ESP ----------------------------------------------------------------------


def test_coordination_counts_brute_force(rng):
    x = rng.uniform(0, 20, size=(30, 3))
    want = [sum(1 for j in range(30) if j != i and np.linalg.norm(x[i] - x[j]) < 8.5) for i in range(30)]
    np.testing.assert_array_equal(coordination_counts(x), want)
    dense = np.zeros((60, 3)) + rng.normal(size=(60, 3)) * 0.1
    assert np.all(coordination_counts(dense) == MAX_COUNT)


def test_r_bins_and_clamp():
    assert r_bin(7.0) == 0 and r_bin(8.99) == 0 and r_bin(9.0) == 1
    assert r_bin(34.5) == r_bin(35.9) and r_bin(37.0) == r_bin(39.0) == N_RBINS - 1
    assert len(R_EDGES) - 1 == N_RBINS == 29
    with pytest.warns(RuntimeWarning):
        assert r_bin(3.0) == 0
    with pytest.warns(RuntimeWarning):
        assert r_bin(50.0) == N_RBINS - 1


def test_esp_independent_of_type_is_zero(rng):
    base = rng.integers(1, 20, size=(MAX_COUNT + 1, N_RBINS)).astype(float)
    scale = rng.integers(1, 5, size=20)
    t = esp_from_counts(scale[:, None, None] * base[None], pseudocount=0.0)
    np.testing.assert_allclose(t.energy, 0.0, atol=1e-12)
    t1 = esp_from_counts(np.broadcast_to(base, (20,) + base.shape), pseudocount=1.0)
    np.testing.assert_allclose(t1.energy, 0.0, atol=1e-12)


def test_esp_isolated_buried_type_is_positive():
    counts = np.full((20, MAX_COUNT + 1, N_RBINS), 10.0)
    leu = AMINO_ACIDS.index("L")
    counts[leu, 0, :] = 0.0  # leucine is almost never isolated
    t = esp_from_counts(counts)
    conf = Conformation(np.array([[0.0, 0, 0], [20.0, 0, 0]]), "LL")  # rg = 10, n = 0 for both
    assert esp_energy(t, conf) > 0
    assert esp_energy(t, conf) == pytest.approx(2 * t.energy[leu, 0, r_bin(10.0)])


def test_esp_rigid_invariance_and_round_trip(tmp_path, rng):
    confs = [protein_conf(60, rng, hn=False) for _ in range(3)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        t = esp_build(confs)
        conf = confs[0]
        e0 = esp_energy(t, conf)
        rot = random_rotation(rng)
        assert close(esp_energy(t, Conformation(conf.trace @ rot.T + 5.0, conf.sequence)), e0)
    path = tmp_path / "esp.tsv"
    t.write(path)
    np.testing.assert_array_equal(EspTable.read(path).energy, t.energy)


# --- hydrogen bonds -------------------------------------------------------------


def collinear_pair(gap):
    """Donor 0 N-H pointing straight at acceptor 2 O=C along x; residue 1 parked far away."""
    far = np.array([0.0, 100.0, 0.0])
    N = np.array([[0.0, 0, 0], far, far + [0, 0, 50]])
    HN = np.array([[1.0, 0, 0], [np.nan] * 3, [np.nan] * 3])
    o = 1.0 + gap
    O = np.array([far + [0, 0, -50], far + [5, 0, 0], [o, 0, 0]])
    C = np.array([far + [0, 0, -51], far + [6, 0, 0], [o + 1.23, 0, 0]])
    CA = np.array([far + [0, 0, -52], far + [7, 0, 0], [o + 1.23, 1.5, 0]])
    return BackboneAtoms(N, CA, C, O, CA.copy(), "AAA", HN)


def test_hbond_collinear_angles():
    d = hbond_descriptors(collinear_pair(2.0))
    assert len(d) == 1
    g = d[0]
    assert (g.donor, g.acceptor) == (0, 2)
    assert g.theta == pytest.approx(math.pi, abs=1e-7)
    assert g.psi == pytest.approx(math.pi, abs=1e-7)
    assert g.distance == pytest.approx((3.0 + 1.23 / 2) - 0.5)


def test_hbond_cutoff():
    # centre distance = gap + 1 + 1.23/2 - 0.5; make it 6 A
    assert hbond_descriptors(collinear_pair(6.0 - 1.115)) == []
    assert len(hbond_descriptors(collinear_pair(4.9 - 1.115))) == 1


def test_hbond_missing_hydrogen_skipped():
    bb = collinear_pair(2.0)
    bb.HN[0] = np.nan
    assert hbond_descriptors(bb) == []


def test_hbond_descriptors_invariant(rng):
    conf = protein_conf(30, rng)
    d0 = hbond_descriptors(conf.backbone)
    d1 = hbond_descriptors(moved(conf, rng).backbone)
    assert len(d0) == len(d1) > 0
    for a, b in zip(d0, d1):
        assert (a.donor, a.acceptor) == (b.donor, b.acceptor)
        assert abs(a.theta - b.theta) < 1e-9 and abs(a.psi - b.psi) < 1e-9 and abs(a.distance - b.distance) < 1e-9
        assert abs(np.angle(np.exp(1j * (a.chi - b.chi)))) < 1e-9
        assert abs(a.donor - a.acceptor) >= 2 and a.distance < 5.0


def hbond_table(rng):
    edges = (np.linspace(0, 5, 6), np.linspace(0, math.pi, 5), np.linspace(0, math.pi, 5), np.linspace(-math.pi, math.pi, 5))
    return HbondTable(edges, rng.normal(size=(5, 4, 4, 4)))


def test_hbond_energy_is_sum_of_lookups(rng):
    t = hbond_table(rng)
    conf = protein_conf(30, rng)
    want = 0.0
    for g in hbond_descriptors(conf.backbone):
        idx = tuple(int(np.searchsorted(e, v, side="right") - 1) for e, v in zip(t.edges, (g.distance, g.theta, g.psi, g.chi)))
        want += t.energy[idx]
    assert hbond_energy(t, conf.backbone) == pytest.approx(want, rel=1e-12)
    assert close(hbond_energy(t, moved(conf, rng).backbone), hbond_energy(t, conf.backbone))


def test_hbond_table_round_trip(tmp_path, rng):
    t = hbond_table(rng)
    path = tmp_path / "hb.tsv"
    t.write(path)
    back = HbondTable.read(path)
    np.testing.assert_array_equal(back.energy, t.energy)
    for a, b in zip(back.edges, t.edges):
        np.testing.assert_array_equal(a, b)


# --- weighted total -------------------------------------------------------------


def test_total_energy_weights(rng):
    conf = protein_conf(30, rng)
    rgc = RadiusComponent()
    t = build_distance_table([protein_conf(30, rng, hn=False)])
    pot = table_potential(t, conf.sequence, 9.0)
    esp = EspComponent(esp_from_counts(rng.integers(0, 5, size=(20, MAX_COUNT + 1, N_RBINS))))
    e_tab, e_esp = pot.energy(conf), esp(conf)
    assert total_energy(EnergyModel({"table": pot, "esp": esp}, {"table": 0.0, "esp": 0.0}), conf) == 0.0
    assert total_energy(EnergyModel({"table": pot}, {"table": 2.0}), conf) == pytest.approx(2 * e_tab, rel=1e-12)
    em = EnergyModel({"table": pot, "esp": esp}, {"table": 1.5, "esp": -0.5})
    report = em.evaluate(conf)
    assert report.parts == {"table": pytest.approx(e_tab), "esp": pytest.approx(e_esp)}
    assert report.total == pytest.approx(1.5 * e_tab - 0.5 * e_esp, rel=1e-12)
    assert close(em(moved(conf, rng)), report.total)
    assert EnergyModel({"rg": rgc})(conf) == pytest.approx(float(np.sqrt(np.mean(np.sum((conf.trace - conf.trace.mean(0)) ** 2, 1)))))


def test_energy_model_validation():
    with pytest.raises(ValueError):
        EnergyModel({})
    with pytest.raises(ValueError):
        EnergyModel({"esp": RadiusComponent()}, {"table": 1.0})
    with pytest.raises(ValueError):
        EnergyModel({"esp": RadiusComponent()}, {"esp": float("inf")})


def test_parse_weights():
    assert parse_weights("1,0.5,0,2") == {"epad": 1.0, "table": 0.5, "hbond": 0.0, "esp": 2.0}
    with pytest.raises(ValueError):
        parse_weights("1,2,3")
