import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccml.datagen import (
    Dataset,
    GenSpec,
    generate,
    generate_split,
    inject_noise,
    load,
    noise_counts,
    save,
)
from ccml.errors import ParseError, StateError, ValidationError


@pytest.fixture(scope="module")
def small():
    return generate(GenSpec(n_samples=100, n_features=5, n_classes=4, seed=7))


def test_generate_is_deterministic(small):
    again = generate(GenSpec(n_samples=100, n_features=5, n_classes=4, seed=7))
    assert again == small
    assert np.array_equal(again.X, small.X)


def test_generate_every_row_has_a_label(small):
    assert small.Y.sum(axis=1).min() >= 1
    assert small.Y.sum(axis=1).max() <= small.n_classes
    assert np.array_equal(small.Y, small.Y_clean)
    assert small.noise_mask is None


def test_generate_rejects_one_class():
    with pytest.raises(ValidationError):
        generate(GenSpec(n_samples=100, n_classes=1))


@pytest.mark.parametrize("kwargs", [{"n_samples": 5}, {"n_samples": 50, "margin": 0.0}])
def test_generate_rejects_bad_spec(kwargs):
    with pytest.raises(ValidationError):
        generate(GenSpec(**kwargs))


def test_class_frequencies_decay():
    ds = generate(GenSpec(n_samples=5000, seed=3))
    freq = ds.Y.mean(axis=0)
    assert freq[0] > freq[-1] * 2
    assert freq[-1] > 0


def test_split_shares_concept_but_not_samples():
    spec = GenSpec(n_samples=200, n_features=4, n_classes=3, seed=11)
    train, val = generate_split(spec, 50)
    assert train == generate(spec)
    assert val.n_samples == 50
    assert set(train.ids).isdisjoint(val.ids)
    assert not np.array_equal(train.X[:50], val.X)


def test_zero_noise_is_identity(small):
    noisy = inject_noise(small, 0, seed=1)
    assert np.array_equal(noisy.Y, small.Y_clean)
    assert noisy.noise_mask.sum() == 0


def test_noise_counts_by_enumeration():
    ds = generate(GenSpec(n_samples=10, n_features=3, n_classes=4, seed=0))
    noisy = inject_noise(ds, 50, seed=5)
    per_row = noisy.noise_mask.sum(axis=1)
    assert (per_row > 0).sum() == 5
    assert set(per_row[per_row > 0]) == {2}
    assert noisy.noise_mask.sum() == 10


def test_noise_counts_minimum_one():
    assert noise_counts(1, 10, 4) == (1, 1)
    assert noise_counts(0, 10, 4) == (0, 0)
    assert noise_counts(40, 2000, 8) == (800, 3)


def test_noise_rejects_bad_rate(small):
    for rate in (-1, 101):
        with pytest.raises(ValidationError):
            inject_noise(small, rate, seed=0)


def test_noise_needs_clean_labels():
    ds = Dataset(ids=np.arange(3), X=np.zeros((3, 2)), Y=np.eye(3, dtype=int))
    with pytest.raises(StateError):
        inject_noise(ds, 10, seed=0)


@settings(max_examples=40, deadline=None)
@given(
    m=st.integers(10, 60),
    v=st.integers(2, 9),
    rate=st.integers(0, 100),
    seed=st.integers(0, 2**16),
)
def test_noise_changes_exactly_the_mask(m, v, rate, seed):
    ds = generate(GenSpec(n_samples=m, n_features=3, n_classes=v, seed=seed))
    noisy = inject_noise(ds, rate, seed=seed + 1)
    changed = noisy.Y != ds.Y_clean
    assert np.array_equal(changed, noisy.noise_mask.astype(bool))
    n_rows, n_cols = noise_counts(rate, m, v)
    assert noisy.noise_mask.sum() == n_rows * n_cols


@settings(max_examples=30, deadline=None)
@given(m=st.integers(10, 80), v=st.integers(2, 9), r1=st.integers(0, 100), r2=st.integers(0, 100))
def test_more_noise_flips_more_cells(m, v, r1, r2):
    lo, hi = sorted((r1, r2))
    ds = generate(GenSpec(n_samples=m, n_features=2, n_classes=v, seed=0))
    a = inject_noise(ds, lo, seed=1).noise_mask.sum()
    b = inject_noise(ds, hi, seed=1).noise_mask.sum()
    if (lo * m // 100) * (lo * v // 100) < (hi * m // 100) * (hi * v // 100):
        assert b > a
    assert b >= a


def test_round_trip(tmp_path, small):
    noisy = inject_noise(small, 30, seed=2)
    save(noisy, tmp_path / "train")
    assert load(tmp_path / "train") == noisy
    save(small, tmp_path / "clean")
    assert load(tmp_path / "clean") == small


def test_csv_header_layout(tmp_path, small):
    save(inject_noise(small, 30, seed=2), tmp_path / "d")
    header = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["id", "x_0"]
    assert header[-1] == "nm_3"
    manifest = json.loads((tmp_path / "d.manifest.json").read_text())
    assert manifest["n_classes"] == 4
    assert manifest["noise_rate_percent"] == 30


def test_manifest_class_count_mismatch(tmp_path, small):
    save(small, tmp_path / "d")
    path = tmp_path / "d.manifest.json"
    manifest = json.loads(path.read_text())
    manifest["n_classes"] = 3
    manifest["class_names"] = manifest["class_names"][:3]
    path.write_text(json.dumps(manifest))
    with pytest.raises(ValidationError):
        load(tmp_path / "d")


def test_empty_file_is_parse_error(tmp_path, small):
    save(small, tmp_path / "d")
    (tmp_path / "d.csv").write_text("")
    with pytest.raises(ParseError):
        load(tmp_path / "d")


def test_bad_field_names_line(tmp_path, small):
    save(small, tmp_path / "d")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    parts = lines[3].split(",")
    parts[2] = "abc"
    lines[3] = ",".join(parts)
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="line 4"):
        load(tmp_path / "d")
