import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from foldcrf import evaluate, io
from foldcrf.evaluate import MetricError

from conftest import random_rotation

GOLDEN = Path(__file__).parent / "data" / "golden"


def grid_rmsd_planar(a, b, step_deg=0.01):
    """Best RMSD over rotations about z (and the same after a flip about x) for xy-planar sets."""
    pa = a - a.mean(axis=0)
    pb = b - b.mean(axis=0)
    best = math.inf
    flip = np.diag([1.0, -1.0, -1.0])
    for f in (np.eye(3), flip):
        phi = np.radians(np.arange(0.0, 360.0, step_deg))
        c, s = np.cos(phi), np.sin(phi)
        rot = np.zeros((len(phi), 3, 3))
        rot[:, 0, 0], rot[:, 0, 1], rot[:, 1, 0], rot[:, 1, 1], rot[:, 2, 2] = c, -s, s, c, 1.0
        moved = np.einsum("kij,nj->kni", rot @ f, pa)
        r = np.sqrt(np.mean(np.sum((moved - pb) ** 2, axis=2), axis=1))
        best = min(best, float(r.min()))
    return best


def test_planar_hand_case_matches_grid():
    a = np.array([[0.0, 0, 0], [3.0, 0, 0], [3.0, 2.0, 0], [0.0, 1.0, 0]])
    b = np.array([[1.0, 1, 0], [1.5, 4, 0], [-0.5, 4.2, 0], [-0.2, 0.5, 0]])
    assert abs(evaluate.rmsd_superposed(a, b) - grid_rmsd_planar(a, b)) < 1e-3


def test_matches_independent_alignment(rng):
    for _ in range(20):
        a = rng.normal(size=(15, 3)) * 5
        b = a @ random_rotation(rng).T + rng.normal(size=(15, 3))
        rot, _ = Rotation.align_vectors(b - b.mean(0), a - a.mean(0))
        want = np.sqrt(np.mean(np.sum((rot.apply(a - a.mean(0)) - (b - b.mean(0))) ** 2, axis=1)))
        assert evaluate.rmsd_superposed(a, b) == pytest.approx(want, abs=1e-9)


def test_reflection_is_not_allowed(rng):
    a = rng.normal(size=(10, 3)) * 4
    mirror = a * [1.0, 1.0, -1.0]
    assert evaluate.rmsd_superposed(a, mirror) > 0.1
    r = evaluate.kabsch_rotation(a, mirror)
    assert np.linalg.det(r) == pytest.approx(1.0)


def test_scaled_copy_closed_form(rng):
    x = rng.normal(size=(12, 3)) * 6
    rg = math.sqrt(np.mean(np.sum((x - x.mean(0)) ** 2, axis=1)))
    for s in (0.5, 0.9, 1.3):
        y = s * x @ random_rotation(rng).T + rng.normal(size=3) * 10
        assert evaluate.rmsd_superposed(y, x) == pytest.approx(abs(1 - s) * rg, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(3, 30))
def test_rmsd_invariances(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 3)) * 5
    b = rng.normal(size=(n, 3)) * 5
    r = evaluate.rmsd_superposed(a, b)
    assert evaluate.rmsd_superposed(a, a @ random_rotation(rng).T + rng.normal(size=3) * 50) < 1e-9
    assert abs(evaluate.rmsd_superposed(b, a) - r) < 1e-9
    a2 = a @ random_rotation(rng).T + rng.normal(size=3) * 30
    b2 = b @ random_rotation(rng).T - rng.normal(size=3) * 30
    assert abs(evaluate.rmsd_superposed(a2, b2) - r) < 1e-9


def test_rmsd_small_and_mismatched():
    a = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    b = np.array([[0.0, 3, 0], [1.0, 3, 4]])
    assert evaluate.rmsd_superposed(a, b) == pytest.approx(math.sqrt((9 + 25) / 2))
    with pytest.raises(MetricError):
        evaluate.rmsd_superposed(a, np.zeros((3, 3)))


def test_decoy_statistics_examples():
    s = evaluate.decoy_statistics([3.0] * 7)
    assert s.good_frac == 100.0 and all(v == 3.0 for v in s.top.values())
    assert evaluate.decoy_statistics([7.0]).good_frac == 0.0
    s = evaluate.decoy_statistics(np.arange(1.0, 101.0)[::-1])
    assert s.top[10] == 5.5 and s.top[1] == 1.0 and s.top[5] == 3.0 and s.best_rmsd == 1.0
    assert evaluate.decoy_statistics([6.0, 6.0001]).good_frac == 50.0
    with pytest.raises(MetricError):
        evaluate.decoy_statistics([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 50), min_size=1, max_size=300))
def test_top_averages_nondecreasing(r):
    top = evaluate.decoy_statistics(r).top
    vals = [top[p] for p in (1, 2, 5, 10)]
    assert all(x <= y + 1e-12 for x, y in zip(vals, vals[1:]))


def test_native_discrimination_examples():
    # population stdev of {1,2,3} is sqrt(2/3), so the z of 0 is -2 / sqrt(2/3)
    d = evaluate.native_discrimination([1.0, 2.0, 3.0], 0.0)
    assert d.rank == 1 and d.zscore == pytest.approx(-2 / math.sqrt(2 / 3), rel=1e-12)
    d = evaluate.native_discrimination([1.0, 2.0, 3.0], 2.0)
    assert d.rank == 2 and d.zscore == 0.0
    assert evaluate.native_discrimination([1.0, 2.0, 3.0], 2.5).rank == 3
    flat = evaluate.native_discrimination([4.0, 4.0], 1.0)
    assert flat.rank == 1 and flat.zscore == 0.0 and not flat.defined
    with pytest.raises(MetricError):
        evaluate.native_discrimination([1.0], 0.0)


def test_pearson_examples():
    x = np.arange(10.0)
    assert evaluate.pearson_cc(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert evaluate.pearson_cc(x, -x) == pytest.approx(-1.0, abs=1e-15)
    assert math.isnan(evaluate.pearson_cc(x, np.ones(10)))
    pairs = [(1.2, 3.1), (2.4, 2.2), (0.3, 5.5), (4.4, 1.0), (3.3, 2.9),
             (2.0, 2.0), (5.1, 0.4), (1.7, 3.8), (0.9, 4.1), (3.8, 1.9)]
    a, b = (np.array(v) for v in zip(*pairs))
    n = len(a)
    cov = sum((p - sum(a) / n) * (q - sum(b) / n) for p, q in pairs)
    va = sum((p - sum(a) / n) ** 2 for p in a)
    vb = sum((q - sum(b) / n) ** 2 for q in b)
    assert abs(evaluate.pearson_cc(a, b) - cov / math.sqrt(va * vb)) < 1e-12
    with pytest.raises(MetricError):
        evaluate.pearson_cc([1.0], [2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 100), st.floats(-100, 100))
def test_pearson_affine(seed, scale, shift):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 12))
    r = evaluate.pearson_cc(x, y)
    assert abs(evaluate.pearson_cc(scale * x + shift, y) - r) < 1e-9
    assert abs(evaluate.pearson_cc(x, -y) + r) < 1e-12


def test_normalize_energies():
    z, ok = evaluate.normalize_energies([1.0, 2.0, 3.0])
    np.testing.assert_allclose(z, [-1.2247, 0.0, 1.2247], atol=1e-4)
    assert ok
    z, ok = evaluate.normalize_energies([5.0, 5.0, 5.0])
    assert not ok and np.all(z == 0)
    e = np.random.default_rng(0).normal(size=20)
    np.testing.assert_allclose(evaluate.normalize_energies(3 * e - 7)[0], evaluate.normalize_energies(e)[0], atol=1e-12)


def test_q3():
    assert evaluate.q3("HHEC", "HHEC") == 100.0
    assert evaluate.q3("HHHH", "EECC") == 0.0
    assert evaluate.q3("HECC", "HEHH") == 50.0
    with pytest.raises(MetricError):
        evaluate.q3("HH", "H")


def test_metrics_row_without_energies(rng):
    native = rng.normal(size=(10, 3)) * 5
    row = evaluate.metrics_row("t", [native + 1, native * 1.1], native)
    assert row["native_rank"] is None and row["zscore"] is None and row["pearson_cc"] is None
    line = evaluate.format_metrics([row]).splitlines()[1]
    assert line.endswith("NA\tNA\tNA")


def load_golden(name):
    d = GOLDEN / name
    native, _ = io.parse_ca_pdb(d / "native.pdb")
    files = sorted((d / "decoys").glob("*.pdb"))
    traces = [io.parse_ca_pdb(f)[0] for f in files]
    manifest = d / "decoys" / "decoys.tsv"
    energies = [r["energy"] for r in io.read_decoy_manifest(manifest)] if manifest.exists() else None
    return native, traces, energies


@pytest.mark.parametrize("name,native_energy", [("tgtA", -12.5), ("tgtB", None)])
def test_golden_metrics_byte_for_byte(name, native_energy):
    native, traces, energies = load_golden(name)
    row = evaluate.metrics_row(name, traces, native, energies, native_energy)
    assert evaluate.format_metrics([row]).encode() == (GOLDEN / name / "metrics.tsv").read_bytes()


def test_golden_metrics_invariant_under_rigid_motion(rng):
    native, traces, energies = load_golden("tgtA")
    base = evaluate.metrics_row("tgtA", traces, native, energies, -12.5)
    moved = [t @ random_rotation(rng).T + rng.normal(size=3) * 40 for t in traces]
    row = evaluate.metrics_row("tgtA", moved, native @ random_rotation(rng).T, energies, -12.5)
    for k in ("best_rmsd", "good_frac", "top1", "top2", "top5", "top10", "zscore", "pearson_cc"):
        assert abs(row[k] - base[k]) < 1e-9
    assert row["native_rank"] == base["native_rank"]
