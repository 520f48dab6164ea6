import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbn.dataset import (
    UNASSIGNED,
    BoldSample,
    Cohort,
    CohortFormatError,
    ModulePartition,
    PlantedBlock,
    SyntheticConfig,
    ZeroVarianceWarning,
    class_correlations,
    generate_synthetic,
    load_cohort,
    node_features,
    pearson_matrix,
    save_cohort,
    stratified_kfold,
    uniform_graph,
)


def test_partition_from_sizes_leaves_tail_unassigned():
    p = ModulePartition.from_sizes(6, [2, 3], ["a", "b"])
    assert p.assignment == (0, 0, 1, 1, 1, UNASSIGNED)
    assert p.members(1).tolist() == [2, 3, 4]
    assert p.assigned().tolist() == [0, 1, 2, 3, 4]


def test_partition_rejects_empty_module():
    with pytest.raises(ValueError):
        ModulePartition((0, 0, UNASSIGNED), ("a", "b"))


def test_sample_validation():
    with pytest.raises(ValueError):
        BoldSample(np.zeros(5), 0)
    with pytest.raises(ValueError):
        BoldSample(np.array([[0.0, np.nan], [1.0, 2.0]]), 0)


def test_default_correlations_positive_definite_and_planted():
    cfg = SyntheticConfig()
    s0, s1 = class_correlations(cfg)
    for s in (s0, s1):
        assert np.all(np.linalg.eigvalsh(s) > 0)
        np.testing.assert_allclose(np.diag(s), 1.0)
    # DIFF block differs by the planted delta, everything else matches
    diff = s1 - s0
    assert diff[0, 1] == pytest.approx(0.4)
    assert diff[5, 6] == 0.0
    assert s0[5, 6] == pytest.approx(0.5)


def test_non_pd_correlation_rejected():
    cfg = SyntheticConfig(planted=(PlantedBlock(0, 1, (0.0, 0.95)),), base_correlation=-0.2)
    with pytest.raises(ValueError, match="positive definite"):
        class_correlations(cfg)


def test_generator_deterministic_and_balanced():
    cfg = SyntheticConfig(n=30, t=20)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert a == b
    assert np.bincount(a.labels).tolist() == [15, 15]
    c = generate_synthetic(SyntheticConfig(n=30, t=20, seed=cfg.seed + 1))
    assert not np.array_equal(a.X, c.X)


def test_generator_recovers_covariance():
    # pooled over many samples the empirical correlation approaches the target
    cfg = SyntheticConfig(n=200, t=64)
    cohort = generate_synthetic(cfg)
    targets = class_correlations(cfg)
    for c in (0, 1):
        x = np.concatenate([s.x for s in cohort.samples if s.label == c], axis=1)
        emp = np.corrcoef(x)
        assert np.max(np.abs(emp - targets[c])) < 0.05


def test_generator_marginal_variance_carries_no_label():
    cohort = generate_synthetic(SyntheticConfig(n=200, t=64))
    var = cohort.X.var(axis=2).mean(axis=1)
    assert abs(var[cohort.labels == 0].mean() - var[cohort.labels == 1].mean()) < 0.03


def test_save_load_roundtrip(tmp_path):
    cohort = generate_synthetic(SyntheticConfig(n=6, v=5, t=7, module_sizes=(2, 2), module_names=("a", "b"),
                                                planted=(PlantedBlock(0, 0, (0.0, 0.3)),)))
    save_cohort(cohort, tmp_path)
    back = load_cohort(tmp_path)
    assert back == cohort
    assert np.array_equal(back.X, cohort.X)  # %.17g is lossless


def test_load_reports_missing_file(tmp_path):
    cohort = generate_synthetic(SyntheticConfig(n=4, v=4, t=5, module_sizes=(2,), module_names=("a",),
                                                planted=()))
    save_cohort(cohort, tmp_path)
    (tmp_path / "samples" / "sample_2.csv").unlink()
    with pytest.raises(CohortFormatError, match="sample_2.csv"):
        load_cohort(tmp_path)


def test_load_reports_bad_shape(tmp_path):
    cohort = generate_synthetic(SyntheticConfig(n=4, v=4, t=5, module_sizes=(2,), module_names=("a",),
                                                planted=()))
    save_cohort(cohort, tmp_path)
    (tmp_path / "samples" / "sample_0.csv").write_text("1,2\n3,4\n")
    with pytest.raises(CohortFormatError, match="shape"):
        load_cohort(tmp_path)


def test_pearson_matches_numpy_abs_corrcoef():
    x = np.random.default_rng(0).normal(size=(6, 40))
    np.testing.assert_allclose(pearson_matrix(x), np.abs(np.corrcoef(x)), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 9), st.integers(3, 30))
def test_pearson_symmetric_unit_diagonal(seed, v, t):
    x = np.random.default_rng(seed).normal(size=(v, t))
    g = pearson_matrix(x)
    np.testing.assert_allclose(g, g.T, atol=0)
    np.testing.assert_allclose(np.diag(g), 1.0)
    assert g.min() >= 0 and g.max() <= 1


def test_pearson_zero_variance_row_warns():
    x = np.random.default_rng(0).normal(size=(3, 10))
    x[1] = 2.0
    with pytest.warns(ZeroVarianceWarning):
        g = pearson_matrix(x)
    assert g[1, 0] == 0 and g[1, 1] == 1


def test_node_features_and_uniform():
    x = np.random.default_rng(0).normal(size=(4, 9))
    np.testing.assert_array_equal(node_features(x, "identity"), np.eye(4))
    np.testing.assert_array_equal(node_features(x, "pearson"), pearson_matrix(x))
    with pytest.raises(ValueError):
        node_features(x, "other")
    np.testing.assert_array_equal(uniform_graph(3), np.ones((3, 3)))


def test_kfold_partitions_and_stratifies():
    labels = np.array([0] * 23 + [1] * 17)
    splits = stratified_kfold(labels, k=5, repetitions=3, seed=3)
    assert len(splits) == 15
    for rep in range(3):
        tests = [splits[rep * 5 + f][1] for f in range(5)]
        assert sorted(np.concatenate(tests).tolist()) == list(range(40))
        for tr, te in splits[rep * 5 : rep * 5 + 5]:
            assert not set(tr) & set(te)
            assert abs(np.sum(labels[te] == 1) - 17 / 5) < 1.01
    assert stratified_kfold(labels, 5, 3, seed=3)[0][1].tolist() == splits[0][1].tolist()
    assert splits[0][1].tolist() != splits[5][1].tolist()


def test_kfold_infeasible():
    with pytest.raises(ValueError):
        stratified_kfold([0, 0, 0, 1, 1], k=3)


def test_cohort_rejects_mixed_shapes():
    part = ModulePartition.from_sizes(2, [2], ["a"])
    with pytest.raises(ValueError):
        Cohort([BoldSample(np.ones((2, 3)) * [1, 2, 3], 0), BoldSample(np.ones((2, 4)), 0)], ("x",), part)


def test_zero_variance_warning_is_runtime_warning():
    assert issubclass(ZeroVarianceWarning, RuntimeWarning)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pearson_matrix(np.random.default_rng(1).normal(size=(3, 8)))
