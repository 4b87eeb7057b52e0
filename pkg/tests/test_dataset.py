import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expert_aggregation import Dataset, bootstrap, load_csv
from expert_aggregation.errors import DataError


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_23_rows(tmp_path):
    rows = "\n".join(f"{t},{2.0 + t}" for t in range(23))
    data = load_csv(write(tmp_path, "t,N\n" + rows + "\n"), "t", "N")
    assert data.d == 23
    assert data.x_names == ("t",) and data.y_name == "N"
    np.testing.assert_array_equal(data.x[:, 0], np.arange(23.0))


def test_load_single_row(tmp_path):
    data = load_csv(write(tmp_path, "t,N\n0,2.0\n"), 0, 1)
    assert data.d == 1
    assert data.x[0, 0] == 0.0 and data.y[0] == 2.0


def test_load_multi_column_x(tmp_path):
    data = load_csv(write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n"), ["a", "b"], "y")
    assert data.x.shape == (2, 2)
    np.testing.assert_array_equal(data.y, [3.0, 6.0])


def test_text_cell_names_position(tmp_path):
    with pytest.raises(DataError) as exc:
        load_csv(write(tmp_path, "t,N\n0,2.0\n1,abc\n"), "t", "N")
    assert exc.value.row == 3 and exc.value.column == "N"
    assert "abc" in str(exc.value)


@pytest.mark.parametrize(
    "text, fragment",
    [("", "empty"), ("t,N\n", "no data rows"), ("t,N\n0,1\n1\n", "expected 2 fields")],
)
def test_malformed_files(tmp_path, text, fragment):
    with pytest.raises(DataError, match=fragment):
        load_csv(write(tmp_path, text), 0, 1)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv")


def test_unknown_column(tmp_path):
    with pytest.raises(DataError, match="no column"):
        load_csv(write(tmp_path, "t,N\n0,1\n"), "q", "N")


def test_default_bootstrap_shape():
    parent = Dataset(np.arange(23.0), np.arange(23.0) ** 2)
    subs = bootstrap(parent, 26, 23, "with", seed=3)
    assert len(subs) == 26 and subs.m == 23 and subs.n_experts == 25
    assert len(subs.training) == 25
    assert subs.validation is subs[25]
    for sub in subs:
        assert sub.d == 23
        assert set(sub.y).issubset(set(parent.y))


def test_without_replacement_exhausts_parent():
    parent = Dataset(np.arange(5.0), np.array([3.0, 1.0, 4.0, 1.5, 9.0]))
    (sub,) = bootstrap(parent, 1, 5, "without", seed=1)
    assert sorted(sub.y) == sorted(parent.y)


def test_deterministic_and_seed_sensitive():
    parent = Dataset(np.arange(10.0), np.arange(10.0))
    a = bootstrap(parent, 3, 4, "with", seed=11)
    b = bootstrap(parent, 3, 4, "with", seed=11)
    c = bootstrap(parent, 3, 4, "with", seed=12)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert np.any(a.indices != c.indices)


@pytest.mark.parametrize("m, mode", [(0, "with"), (-2, "with"), (6, "without")])
def test_bootstrap_rejects(m, mode):
    parent = Dataset(np.arange(5.0), np.arange(5.0))
    with pytest.raises(DataError):
        bootstrap(parent, 2, m, mode, seed=0)


def test_with_replacement_index_frequencies():
    parent = Dataset(np.arange(4.0), np.arange(4.0))
    subs = bootstrap(parent, 10_000, 1, "with", seed=2024)
    freq = np.bincount(subs.indices.ravel(), minlength=4) / 10_000
    assert np.all(np.abs(freq - 0.25) <= 0.05)


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(1, 30),
    k1=st.integers(1, 8),
    m=st.integers(1, 30),
    without=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_subsamples_are_parent_members(d, k1, m, without, seed):
    parent = Dataset(np.random.default_rng(d).normal(size=(d, 2)), np.random.default_rng(d + 1).normal(size=d))
    if without and m > d:
        with pytest.raises(DataError):
            bootstrap(parent, k1, m, "without", seed)
        return
    subs = bootstrap(parent, k1, m, "without" if without else "with", seed)
    assert subs.indices.shape == (k1, m)
    for row, sub in zip(subs.indices, subs):
        # bit-exact copies of parent rows
        np.testing.assert_array_equal(sub.x, parent.x[row])
        np.testing.assert_array_equal(sub.y, parent.y[row])
        if without:
            assert len(set(row.tolist())) == m
