import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betashap._seeding import derive_seed, rng_for
from betashap.data import (
    Dataset,
    NoiseRecord,
    apply_noise,
    box_muller,
    class_probability,
    flip_labels,
    gen_gaussian_classification,
    gen_snr_datasets,
    generate,
    generate_splits,
    load_csv,
    round_half_up,
    save_csv,
    snr_regression_coefficients,
)
from betashap.errors import InvalidParameterError, ParseError, SchemaMismatchError

BIG = 10**5


@pytest.fixture(scope="module")
def big_classification():
    return gen_gaussian_classification(BIG, seed=0)


def test_zero_input_gives_half():
    assert class_probability("gaussian-classification", np.zeros((1, 5)))[0] == 0.5
    x = np.array([[0.0, 3.0, -2.0]])
    assert class_probability("snr-classification", x)[0] == 0.5


@pytest.mark.parametrize("kind", ["gaussian-classification", "gaussian-regression",
                                  "snr-regression", "snr-classification"])
def test_generators_are_pure(kind):
    a, b = generate(kind, 50, 7), generate(kind, 50, 7)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    c = generate(kind, 50, 8)
    assert not np.array_equal(a.X, c.X)


def test_dimensions():
    assert generate("gaussian-classification", 3, 0).d == 5
    assert generate("gaussian-regression", 3, 0).d == 5
    assert generate("snr-regression", 3, 0).d == 10
    assert generate("snr-classification", 3, 0).d == 3
    assert generate("snr-regression", 3, 0).label_kind == "real"


def test_monotone_link(big_classification):
    d = big_classification
    hi = d.y[d.X[:, 0] > 1].mean()
    lo = d.y[d.X[:, 0] < -1].mean()
    assert hi > lo


def test_label_probability_matches_model(big_classification):
    d = big_classification
    p = class_probability("gaussian-classification", d.X)
    # mean label vs mean probability, Bernoulli standard error
    assert abs(d.y.mean() - p.mean()) < 4 * np.sqrt(0.25 / BIG)


def test_gaussian_moments(big_classification):
    X = big_classification.X
    assert np.all(np.abs(X.mean(axis=0)) < 4 / np.sqrt(BIG))
    assert np.all(np.abs(X.var(axis=0) - 1) < 10 / np.sqrt(BIG))
    assert np.all(np.abs(np.corrcoef(X.T) - np.eye(5)) < 0.02)


def test_snr_regression_residual_variance():
    d = gen_snr_datasets("snr-regression", BIG, seed=3)
    resid = d.y - d.X @ snr_regression_coefficients(3)
    assert abs(resid.var(ddof=1) - 1) < 0.05


def test_splits_share_coefficients():
    parts = generate_splits("snr-regression", [100, 200], seed=4)
    whole = generate("snr-regression", 300, 4)
    assert np.array_equal(np.vstack([p.X for p in parts]), whole.X)
    assert parts[1].ids.tolist() == list(range(200))
    with pytest.raises(InvalidParameterError):
        generate_splits("snr-regression", [-1, 2], 0)


def test_box_muller_reference():
    rng = rng_for(5, "check")
    z = box_muller(rng, 3)
    u = rng_for(5, "check").random(4)
    r = np.sqrt(-2 * np.log(1 - u[0::2]))
    ref = [r[0] * np.cos(2 * np.pi * u[1]), r[0] * np.sin(2 * np.pi * u[1]), r[1] * np.cos(2 * np.pi * u[3])]
    np.testing.assert_allclose(z, ref, rtol=1e-13)


def test_seed_derivation_is_stable():
    assert derive_seed(0, "a") == derive_seed(0, "a")
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert derive_seed(1, "a", 2) != derive_seed(12, "a")
    assert 0 <= derive_seed(2**64 - 1, "x") < 2**64


# --- label noise -------------------------------------------------------------

def test_flip_fraction_zero():
    d = gen_gaussian_classification(30, 0)
    out, rec = flip_labels(d, 0.0, seed=1)
    assert rec.flipped_ids == () and np.array_equal(out.y, d.y)


def test_flip_ten_percent():
    d = gen_gaussian_classification(200, 0)
    out, rec = flip_labels(d, 0.1, seed=1)
    assert len(rec.flipped_ids) == 20 == len(set(rec.flipped_ids))
    changed = np.flatnonzero(out.y != d.y)
    assert sorted(d.ids[changed].tolist()) == sorted(rec.flipped_ids)
    assert np.array_equal(out.X, d.X)
    assert np.array_equal(apply_noise(out, rec).y, d.y)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]
    d = gen_gaussian_classification(25, 0)
    assert len(flip_labels(d, 0.1, 0)[1].flipped_ids) == 3  # 2.5 rounds up


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 300), frac=st.floats(0, 0.99), seed=st.integers(0, 2**63))
def test_flip_properties(n, frac, seed):
    d = gen_gaussian_classification(n, 0)
    out, rec = flip_labels(d, frac, seed)
    assert len(rec.flipped_ids) == round_half_up(frac * n)
    assert int(np.sum(out.y != d.y)) == len(rec.flipped_ids)
    assert NoiseRecord.from_dict(json.loads(json.dumps(rec.to_dict()))) == rec


def test_flip_errors():
    with pytest.raises(InvalidParameterError):
        flip_labels(generate("gaussian-regression", 5, 0), 0.1, 0)
    with pytest.raises(InvalidParameterError):
        flip_labels(gen_gaussian_classification(5, 0), 1.0, 0)


# --- CSV / JSON ----------------------------------------------------------------

def test_load_small_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,y\n0.5,1,0\n-2,3e-3,1\n7,8,1\n")
    d = load_csv(p)
    assert (d.n, d.d) == (3, 2) and d.label_kind == "binary"
    assert d.ids.tolist() == [0, 1, 2]
    assert d.X[1].tolist() == [-2.0, 0.003]


def test_label_column_anywhere(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("target,a,b\n1.5,1,2\n2.5,3,4\n")
    d = load_csv(p, label="target")
    assert d.y.tolist() == [1.5, 2.5] and d.X.tolist() == [[1, 2], [3, 4]] and d.label_kind == "real"


def test_nan_cell_named(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,y\n1,2,0\n1,NaN,1\n")
    with pytest.raises(ParseError) as exc:
        load_csv(p)
    assert exc.value.row == 3 and exc.value.column == "x2"
    assert "x2" in str(exc.value)


@pytest.mark.parametrize("body,err", [
    ("x1,y\n1,abc\n", ParseError),
    ("x1,y\n1,2,3\n", ParseError),
    ("x1,y\ninf,1\n", ParseError),
    ("x1,label\n1,0\n", SchemaMismatchError),
    ("", ParseError),
    ("x1,y\n", ParseError),
])
def test_csv_errors(tmp_path, body, err):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(err):
        load_csv(p)


def test_csv_round_trip(tmp_path):
    d = generate("snr-regression", 40, 9)
    save_csv(d, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert back.X.tobytes() == d.X.tobytes() and back.y.tobytes() == d.y.tobytes()
    c = gen_gaussian_classification(10, 1)
    save_csv(c, tmp_path / "c.csv")
    assert load_csv(tmp_path / "c.csv").label_kind == "binary"


def test_json_round_trip():
    d = gen_gaussian_classification(7, 2)
    back = Dataset.from_dict(json.loads(d.to_json()))
    assert back.X.tobytes() == d.X.tobytes() and back.ids.tolist() == d.ids.tolist()


def test_dataset_validation():
    with pytest.raises(InvalidParameterError):
        Dataset([0, 0], np.zeros((2, 1)), [0, 1])
    with pytest.raises(InvalidParameterError):
        Dataset([0, 1], np.array([[0.0], [np.inf]]), [0, 1])
    with pytest.raises(InvalidParameterError):
        Dataset([0, 1], np.zeros((2, 1)), [0, 2])
    with pytest.raises(InvalidParameterError):
        generate("gaussian-classification", 0, 0)
    with pytest.raises(InvalidParameterError):
        generate("mnist", 5, 0)
