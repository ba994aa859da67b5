import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfcal.designs import (
    ConfigurationError,
    DesignSpec,
    build_design,
    d1_spec,
    d2_spec,
    d3_spec,
)


def test_d1_default_row_count():
    table = build_design(d1_spec())
    assert table.n_rows == 200  # 10 subjects x 4 conditions x 5 blocks


def test_d2_default_row_count():
    table = build_design(d2_spec())
    assert table.n_rows == 672  # 42 subjects x 16 items


def test_d3_default_row_count():
    table = build_design(d3_spec())
    assert table.n_rows == 128  # 16 subjects x 8 items


@pytest.mark.parametrize("spec", [d1_spec(), d2_spec(), d3_spec()])
def test_contrast_columns_are_balanced_sum_codes(spec):
    table = build_design(spec)
    assert np.all(table.X[:, 0] == 1.0)
    for k in range(1, table.X.shape[1]):
        col = table.X[:, k]
        assert set(np.unique(col)) == {-1.0, 1.0}
        assert col.sum() == 0.0


def test_interaction_is_product_of_main_effects():
    table = build_design(d1_spec())
    labels = list(table.labels)
    a = table.X[:, labels.index("meA")]
    b = table.X[:, labels.index("meB")]
    np.testing.assert_array_equal(table.X[:, labels.index("int")], a * b)


def test_build_is_deterministic_and_order_stable():
    t1 = build_design(d3_spec())
    t2 = build_design(d3_spec())
    np.testing.assert_array_equal(t1.X, t2.X)
    np.testing.assert_array_equal(t1.subject, t2.subject)
    assert np.all(np.diff(t1.subject) >= 0)  # subject-major ordering


def test_d3_latin_square_balance():
    table = build_design(d3_spec())
    # every subject sees each item exactly once
    for s in range(16):
        items = table.item[table.subject == s]
        assert sorted(items) == list(range(8))
    # each item appears in each condition equally often across subjects
    for i in range(8):
        conds = table.condition[table.item == i]
        assert [int((conds == c).sum()) for c in range(4)] == [4, 4, 4, 4]


def test_d2_each_subject_balanced():
    table = build_design(d2_spec())
    labels = list(table.labels)
    x = table.X[:, labels.index("X")]
    for s in range(42):
        assert x[table.subject == s].sum() == 0.0


def test_unbalanced_configurations_rejected():
    with pytest.raises(ConfigurationError):
        build_design(d3_spec(n_items=6))
    with pytest.raises(ConfigurationError):
        build_design(d3_spec(n_subjects=10))
    with pytest.raises(ConfigurationError):
        build_design(d2_spec(n_items=5))
    with pytest.raises(ConfigurationError):
        build_design(d1_spec(n_reps=0))


def test_bad_specs_rejected():
    with pytest.raises(ConfigurationError):
        DesignSpec("D4", n_subjects=4)
    with pytest.raises(ConfigurationError):
        DesignSpec("D1", n_subjects=4, fixed_effect_labels=("meA", "intercept"))
    with pytest.raises(ConfigurationError):
        DesignSpec("D1", n_subjects=4, likelihood="poisson")


@given(
    n_subjects=st.integers(1, 12),
    n_reps=st.integers(1, 6),
)
@settings(max_examples=25)
def test_d1_row_count_and_balance_property(n_subjects, n_reps):
    table = build_design(d1_spec(n_subjects=n_subjects, n_reps=n_reps))
    assert table.n_rows == 4 * n_subjects * n_reps
    for k in range(1, table.X.shape[1]):
        assert table.X[:, k].sum() == 0.0
