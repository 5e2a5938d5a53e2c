import json

import numpy as np
import pandas as pd
import pytest

from hnrad.combat import (
    ComBatFit,
    FeatureMatrix,
    combat_apply,
    combat_fit,
    combat_harmonize,
    concat_matrices,
    joint_fit_transform,
)
from hnrad.errors import BatchSizeError, DegenerateFeatureError, DesignError, SchemaError


def make_matrix(rng, sizes, n_features=20, shifts=None, scales=None, covariates=True, age_slope=0.0):
    """Batches of standard-normal features with per-batch location/scale effects."""
    rows, centers, cov = [], [], []
    for b, n in enumerate(sizes):
        x = rng.normal(size=(n, n_features))
        if scales is not None:
            x *= scales[b]
        if shifts is not None:
            x += shifts[b]
        age = rng.uniform(40, 80, n)
        x[:, 0] += age_slope * age
        rows.append(x)
        centers += [f"C{b}"] * n
        cov.append(np.column_stack([rng.integers(0, 2, n), age, rng.normal(80, 15, n)]))
    values = np.vstack(rows)
    ids = [f"P{i:04d}" for i in range(len(values))]
    names = [f"f{j}" for j in range(n_features)]
    return FeatureMatrix(ids, names, values, centers, np.vstack(cov) if covariates else None)


def batch_gap(m, j=0):
    means = [m.values[m.center == c, j].mean() for c in sorted(set(m.center))]
    return max(means) - min(means)


def test_location_shift_reduced_by_ninety_percent(rng):
    shifts = np.zeros((2, 20))
    shifts[1, 0] = 5.0
    m = make_matrix(rng, [200, 200], shifts=shifts)
    out = combat_harmonize(m)
    assert batch_gap(out) <= 0.1 * batch_gap(m)


def test_identical_batches_mean_gap_shrinks(rng):
    m = make_matrix(rng, [200, 200], covariates=False)
    out = combat_harmonize(m)
    G = m.values.shape[1]
    assert np.mean([batch_gap(out, j) for j in range(G)]) < np.mean([batch_gap(m, j) for j in range(G)])


def test_identical_batches_adjustment_vanishes_with_n():
    adj = []
    for n in (50, 400, 3200):
        m = make_matrix(np.random.default_rng(n), [n, n], covariates=False)
        adj.append(np.abs(combat_harmonize(m).values - m.values).mean())
    assert adj[0] > adj[1] > adj[2]
    assert adj[2] < 0.01


@pytest.mark.xfail(strict=True, reason="pooled empirical-Bayes location can exceed a feature's own tiny gap")
def test_identical_batches_every_feature_gap_shrinks(rng):
    m = make_matrix(rng, [200, 200], covariates=False)
    out = combat_harmonize(m)
    for j in range(m.values.shape[1]):
        assert batch_gap(out, j) < batch_gap(m, j)


def test_single_batch_is_identity(rng):
    m = make_matrix(rng, [60])
    out = combat_harmonize(m)
    np.testing.assert_allclose(out.values, m.values, atol=1e-6)


def test_covariate_slope_preserved(rng):
    shifts = np.zeros((3, 20))
    shifts[:, 0] = [0.0, 3.0, -2.0]
    m = make_matrix(rng, [150, 150, 150], shifts=shifts, age_slope=0.5)
    out = combat_harmonize(m)
    age = m.covariates[:, 1]
    slope = np.polyfit(age, out.values[:, 0], 1)[0]
    assert slope == pytest.approx(0.5, rel=0.10)


def test_shape_order_names_preserved(rng):
    m = make_matrix(rng, [30, 40, 25])
    out = combat_harmonize(m)
    assert out.values.shape == m.values.shape
    assert out.patient_ids == m.patient_ids
    assert out.feature_names == m.feature_names
    assert list(out.center) == list(m.center)


def test_deterministic(rng):
    m = make_matrix(rng, [30, 40, 25], shifts=rng.normal(size=(3, 20)))
    np.testing.assert_array_equal(combat_harmonize(m).values, combat_harmonize(m).values)


def test_second_pass_changes_little(rng):
    shifts = rng.normal(scale=2.0, size=(4, 20))
    scales = rng.uniform(0.5, 2.0, size=(4, 20))
    m = make_matrix(rng, [200, 200, 200, 200], shifts=shifts, scales=scales)
    once = combat_harmonize(m)
    twice = combat_harmonize(once)
    assert np.sqrt(np.mean((twice.values - once.values) ** 2)) < 1e-3


def test_leave_one_out_weighting_differs_but_still_corrects(rng):
    shifts = np.zeros((2, 20))
    shifts[1] = rng.normal(scale=3.0, size=20)
    m = make_matrix(rng, [100, 100], shifts=shifts)
    a = combat_harmonize(m)
    b = combat_harmonize(m, leave_one_out=True)
    assert not np.allclose(a.values, b.values)
    assert batch_gap(b, 1) < 0.5 * batch_gap(m, 1)


def test_errors(rng):
    m = make_matrix(rng, [20, 1])
    with pytest.raises(BatchSizeError):
        combat_harmonize(m)
    m = make_matrix(rng, [20, 20])
    m.values[3, 2] = np.nan
    with pytest.raises(SchemaError):
        combat_harmonize(m)
    m = make_matrix(rng, [20, 20])
    m.values[:, 4] = 1.0
    with pytest.raises(DegenerateFeatureError):
        combat_harmonize(m)


def test_batch_confounded_with_covariate_is_design_error(rng):
    m = make_matrix(rng, [20, 20])
    m.covariates[:, 0] = (m.center == "C1").astype(float)  # gender nested in batch
    with pytest.raises(DesignError):
        combat_harmonize(m)


def test_joint_equals_concatenated_harmonization(rng):
    m = make_matrix(rng, [30, 30, 30], shifts=rng.normal(size=(3, 20)))
    perm = rng.permutation(90)
    train, test = m.take(perm[:60]), m.take(perm[60:])
    tr, te = joint_fit_transform(train, test)
    direct = combat_harmonize(concat_matrices(train, test))
    np.testing.assert_array_equal(np.vstack([tr.values, te.values]), direct.values)
    assert tr.patient_ids == train.patient_ids and te.patient_ids == test.patient_ids


def test_row_order_does_not_change_values(rng):
    m = make_matrix(rng, [30, 30, 30], shifts=rng.normal(size=(3, 20)))
    perm = rng.permutation(90)
    a = combat_harmonize(m).to_frame()
    b = combat_harmonize(m.take(perm)).to_frame()
    pd.testing.assert_frame_equal(a.loc[b.index], b, rtol=1e-10)


def test_each_center_gets_own_estimates(rng):
    shifts = np.zeros((3, 20))
    shifts[:, 0] = [-3.0, 0.0, 3.0]
    m = make_matrix(rng, [40, 40, 40], shifts=shifts)
    train = m.take(np.nonzero(m.center != "C2")[0])
    test = m.take(np.nonzero(m.center == "C2")[0])
    _, _, fit = joint_fit_transform(train, test, return_fit=True)
    table = fit.gamma_table(m.feature_names)
    assert list(table.index) == ["C0", "C1", "C2"]
    assert table.loc["C0", "f0"] < table.loc["C1", "f0"] < table.loc["C2", "f0"]


def test_train_only_rejects_unseen_center(rng):
    m = make_matrix(rng, [30, 30, 30])
    train = m.take(np.nonzero(m.center != "C2")[0])
    test = m.take(np.nonzero(m.center == "C2")[0])
    with pytest.raises(DesignError):
        joint_fit_transform(train, test, train_only=True)


def test_train_only_leaves_train_independent_of_test(rng):
    m = make_matrix(rng, [40, 40], shifts=rng.normal(size=(2, 20)))
    idx = rng.permutation(80)
    train = m.take(idx[:60])
    tr1, _ = joint_fit_transform(train, m.take(idx[60:]), train_only=True)
    test2 = m.take(idx[60:])
    test2.values = test2.values + 100.0
    tr2, _ = joint_fit_transform(train, test2, train_only=True)
    np.testing.assert_array_equal(tr1.values, tr2.values)


def test_name_mismatch_and_overlap(rng):
    a = make_matrix(rng, [10, 10])
    b = make_matrix(rng, [10, 10])
    with pytest.raises(SchemaError):
        concat_matrices(a, b)  # same patient ids
    b.patient_ids = [p + "x" for p in b.patient_ids]
    b.feature_names = list(reversed(b.feature_names))
    with pytest.raises(SchemaError):
        joint_fit_transform(a, b)


def test_fit_json_round_trip(rng):
    m = make_matrix(rng, [30, 30], shifts=rng.normal(size=(2, 20)))
    fit = combat_fit(m)
    back = ComBatFit.from_dict(json.loads(json.dumps(fit.to_dict())))
    np.testing.assert_allclose(combat_apply(back, m).values, combat_apply(fit, m).values, rtol=1e-12)


def test_from_frames_joins_clinical(rng):
    feats = pd.DataFrame({"a": rng.normal(size=4), "b": rng.normal(size=4)},
                         index=pd.Index(["p1", "p2", "p3", "p4"], name="patient_id"))
    clin = pd.DataFrame({"patient_id": ["p4", "p3", "p2", "p1"], "center": ["X", "X", "Y", "Y"],
                         "gender": [0, 1, 0, 1], "age": [50, 60, 70, 65], "weight": [70, 80, 90, 60]})
    m = FeatureMatrix.from_frames(feats, clin)
    assert list(m.center) == ["Y", "Y", "X", "X"]
    with pytest.raises(SchemaError):
        FeatureMatrix.from_frames(feats, clin.iloc[:2])
