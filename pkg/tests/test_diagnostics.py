import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ratioproto.core import geometric_mean
from ratioproto.diagnostics import (
    CheckpointRecord,
    compare_reports,
    compare_runs,
    estimate_alpha,
    measure_values,
    norm_ratio,
    psi_ratios,
    psi_values,
    ratio_report,
    write_comparison_csv,
)

XO = np.array([[1.0, 0.0], [-1.0, 0.0]])
XN = np.array([[2.0, 1.0], [-2.0, -1.0]])


def random_record(rng, n_classes=3, k=2, q=3, dim=4):
    labels = np.r_[np.repeat(np.arange(n_classes), k), np.repeat(np.arange(n_classes), q)]
    is_query = np.r_[np.zeros(n_classes * k, bool), np.ones(n_classes * q, bool)]
    zo = rng.normal(size=(len(labels), dim))
    zn = zo + 0.3 * rng.normal(size=zo.shape)
    return CheckpointRecord.from_embeddings(zo, zn, labels, is_query)


def test_alpha_examples():
    assert estimate_alpha(XO, 2 * XO) == 2.0
    assert estimate_alpha(XO, XO) == 1.0
    assert estimate_alpha(XO, XN) == 2.0


def test_alpha_grid_scan():
    grid = np.linspace(0, 4, 40001)
    costs = [np.linalg.norm(XN - a * XO) for a in grid]
    assert grid[int(np.argmin(costs))] == pytest.approx(2.0, abs=1e-4)


def test_alpha_optimal_against_random_scales():
    rng = np.random.default_rng(0)
    for _ in range(100):
        xo, xn = rng.normal(size=(2, 6, 3))
        a_hat = estimate_alpha(xo, xn)
        best = np.linalg.norm(xn - a_hat * xo)
        for a in rng.uniform(a_hat - 5, a_hat + 5, size=1000):
            assert best < np.linalg.norm(xn - a * xo)


def test_alpha_zero_origin():
    with pytest.raises(ValueError):
        estimate_alpha(np.zeros((2, 2)), XN)


def test_norm_ratio_examples():
    assert norm_ratio(XO, 3 * XO) == 0.0
    # residual (0,1),(0,-1) has norm sqrt2; change (1,1),(-1,-1) has norm 2
    assert norm_ratio(XO, XN) == pytest.approx(math.sqrt(2) / 2, rel=1e-12)
    assert norm_ratio(XO, XO) is None
    assert norm_ratio(XO, XO + 1e-14) is None


@settings(max_examples=100, deadline=None)
@given(
    arrays(np.float64, (4, 3), elements=st.floats(-10, 10)),
    arrays(np.float64, (4, 3), elements=st.floats(-10, 10)),
)
def test_norm_ratio_bounded(xo, xn):
    if np.linalg.norm(xo) < 1e-6:
        return
    phi = norm_ratio(xo, xn)
    assert phi is None or 0.0 <= phi <= 1.0


def two_class_record(q0_new):
    """Supports at (-2,0) and (2,0); queries at (-2,2) and (2,-2) before the update."""
    labels = [0, 1, 0, 1]
    is_query = [False, False, True, True]
    zo = np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [2.0, -2.0]])
    zn = zo.copy()
    zn[2] = q0_new
    return CheckpointRecord.from_embeddings(zo, zn, labels, is_query)


def test_psi_hand_example_symmetric():
    rec = CheckpointRecord.from_embeddings(
        np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [2.0, -2.0]]),
        np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 1.0], [2.0, -1.0]]),
        [0, 1, 0, 1],
        [False, False, True, True],
    )
    con, div = psi_ratios(rec)
    # same class: 1/2 for both queries; other class: sqrt(17)/sqrt(20) for both
    assert con == pytest.approx(0.5, rel=1e-9)
    assert div == pytest.approx(math.sqrt(17 / 20), rel=1e-9)


def test_psi_one_query_moved_halfway():
    rec = two_class_record([-2.0, 1.0])
    # after centering everything shifts by (0, -1/4); distances are recomputed by hand
    s0, s1, q0, q1 = rec.x_new
    o0, o1, r0, r1 = rec.x_origin
    assert np.allclose(q0 - s0, [0, 1]) and np.allclose(q1 - s1, [0, -2]) and np.allclose(q0 - s1, [-4, 1])
    same = [1 / 2, 2 / 2]
    diff = [math.sqrt(17) / math.sqrt(20), math.sqrt(16 + 4) / math.sqrt(20)]
    con, div = psi_ratios(rec)
    assert con == pytest.approx(math.sqrt(same[0] * same[1]), rel=1e-9)
    assert div == pytest.approx(math.sqrt(diff[0] * diff[1]), rel=1e-9)
    rep = ratio_report(rec)
    assert rep.properly_converged == (con / rep.alpha_hat < 1)


def test_psi_fixed_prototypes_switch():
    # moving a support changes the new prototype but not the fixed one
    zo = np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [2.0, -2.0]])
    zn = zo.copy()
    zn[0] = [-2.0, 1.0]
    zn[1] = [2.0, -1.0]
    rec = CheckpointRecord.from_embeddings(zo, zn, [0, 1, 0, 1], [False, False, True, True])
    con_new, _ = psi_ratios(rec)
    con_fixed, _ = psi_ratios(rec, fixed_prototypes=True)
    assert con_new == pytest.approx(0.5, rel=1e-9)
    assert con_fixed == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_uniform_scaling(alpha):
    rec0 = random_record(np.random.default_rng(1))
    rec = CheckpointRecord(rec0.x_origin, alpha * rec0.x_origin, rec0.labels, rec0.is_query)
    rep = ratio_report(rec)
    assert rep.alpha_hat == pytest.approx(alpha, rel=1e-12)
    assert rep.psi_con == pytest.approx(alpha, rel=1e-6) and rep.psi_div == pytest.approx(alpha, rel=1e-6)
    assert rep.con_alpha == pytest.approx(1, abs=1e-6) and rep.div_alpha == pytest.approx(1, abs=1e-6)
    if alpha != 1.0:
        assert rep.phi <= 1e-9


def test_uniform_scaling_flags_unset_exactly():
    xo = np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [2.0, -2.0]])
    rec = CheckpointRecord(xo, 2.0 * xo, [0, 1, 0, 1], [False, False, True, True])
    rep = ratio_report(rec)
    # stabilized distances leave the ratios within ~1e-12 of 1, so flags are noise-level
    assert abs(rep.con_alpha - 1) < 1e-9 and abs(rep.div_alpha - 1) < 1e-9 and abs(rep.con_div - 1) < 1e-9


def test_convergence_flag_by_construction():
    zo = np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [2.0, -2.0]])
    zn = np.array([[-2.0, 0.0], [2.0, 0.0], [-2.0, 1.0], [2.0, -1.0]])
    rec = CheckpointRecord(zo, zn, [0, 1, 0, 1], [False, False, True, True])
    rep = ratio_report(rec)
    assert rep.properly_converged and rep.properly_ratioed


def test_con_div_identity():
    rng = np.random.default_rng(2)
    for _ in range(50):
        rep = ratio_report(random_record(rng))
        assert rep.con_div == pytest.approx(rep.con_alpha / rep.div_alpha, rel=1e-12)


def test_psi_permutation_invariance():
    rng = np.random.default_rng(3)
    rec = random_record(rng)
    n_sup = int((~rec.is_query).sum())
    perm = np.r_[np.arange(n_sup), n_sup + rng.permutation(len(rec.labels) - n_sup)]
    shuffled = CheckpointRecord(rec.x_origin[perm], rec.x_new[perm], rec.labels[perm], rec.is_query[perm])
    a, b = psi_ratios(rec), psi_ratios(shuffled)
    assert a[0] == pytest.approx(b[0], rel=1e-13) and a[1] == pytest.approx(b[1], rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=20), st.data())
def test_geometric_mean_monotone(values, data):
    i = data.draw(st.integers(0, len(values) - 1))
    bumped = list(values)
    bumped[i] *= 1.01
    assert geometric_mean(bumped) > geometric_mean(values)


def test_psi_values_counts():
    rec = random_record(np.random.default_rng(4), n_classes=3, q=2)
    same, diff = psi_values(rec)
    assert len(same) == 6 and len(diff) == 12


def test_record_validation():
    with pytest.raises(ValueError):
        CheckpointRecord(np.ones((2, 2)), np.ones((2, 2)), [0, 1], [False, True])
    with pytest.raises(ValueError):
        CheckpointRecord(XO, np.zeros((3, 2)), [0, 1], [False, True])


def fake_log(records):
    return SimpleNamespace(checkpoints=[SimpleNamespace(record=r) for r in records])


def directional_records(rng, n, toward):
    """Queries stepping toward (or away from) their own prototype, with some scale noise."""
    out = []
    for _ in range(n):
        rec = random_record(rng)
        protos = rec.prototypes("origin")
        zn = rec.x_origin.copy()
        q = rec.is_query
        step = 0.4 if toward else -0.4
        zn[q] += step * (protos[rec.labels[q]] - zn[q])
        zn += 0.02 * rng.normal(size=zn.shape)
        out.append(CheckpointRecord.from_embeddings(rec.x_origin, zn, rec.labels, rec.is_query))
    return out


def test_compare_with_itself():
    log = fake_log(directional_records(np.random.default_rng(5), 20, True))
    for row in compare_runs(log, log):
        assert row.mw_p == 1.0
        assert row.fisher_p in (None, 1.0)
        assert row.geomean_a == row.geomean_b


def test_compare_directional():
    rng = np.random.default_rng(6)
    log_a = fake_log(directional_records(rng, 30, True))
    log_b = fake_log(directional_records(rng, 30, False))
    rows = {r.measure: r for r in compare_runs(log_a, log_b)}
    for m in ("con_alpha", "con_div"):
        assert rows[m].mw_p < 1e-6 and rows[m].fisher_p < 1e-6 and rows[m].favors == "A"
        assert rows[m].proportion_a > rows[m].proportion_b


def test_compare_norm_ratio_direction():
    rng = np.random.default_rng(7)

    def scaled(noise):
        recs = []
        for _ in range(25):
            rec = random_record(rng)
            zn = 1.3 * rec.x_origin + noise * rng.normal(size=rec.x_origin.shape)
            recs.append(CheckpointRecord.from_embeddings(rec.x_origin, zn, rec.labels, rec.is_query))
        return recs

    rows = {r.measure: r for r in compare_runs(fake_log(scaled(0.01)), fake_log(scaled(1.0)))}
    assert rows["norm_ratio"].favors == "A" and rows["norm_ratio"].mw_p < 1e-6


def test_geomean_column_definition():
    reports = [ratio_report(r) for r in directional_records(np.random.default_rng(8), 10, True)]
    rows = compare_reports(reports, reports)
    cols = measure_values(reports)
    for row in rows:
        assert row.geomean_a == geometric_mean(cols[row.measure])


def test_sentinel_excluded():
    rng = np.random.default_rng(9)
    reports = [ratio_report(r) for r in directional_records(rng, 5, True)]
    still = random_record(rng)
    reports.append(ratio_report(CheckpointRecord(still.x_origin, still.x_origin, still.labels, still.is_query)))
    cols = measure_values(reports)
    assert len(cols["norm_ratio"]) == 5 and len(cols["con_alpha"]) == 6


def test_compare_needs_two_checkpoints():
    reports = [ratio_report(r) for r in directional_records(np.random.default_rng(10), 3, True)]
    with pytest.raises(ValueError):
        compare_reports(reports[:1], reports)


def test_comparison_csv(tmp_path):
    reports = [ratio_report(r) for r in directional_records(np.random.default_rng(11), 4, True)]
    write_comparison_csv(compare_reports(reports, reports), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "measure,geomean_A,proportion_A,geomean_B,proportion_B,mw_p,fisher_p"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["norm_ratio", "con_alpha", "div_alpha", "con_div"]
