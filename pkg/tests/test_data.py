import numpy as np
import pytest

from srm.geometry import ObjectSet
from srm.harness.data import (DataError, QueryGenerator, load_objects, load_queries, save_objects,
                              synthetic_objects)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_file(tmp_path):
    objs = load_objects(write(tmp_path, "o.csv", "id,x,y\n0,1.5,2\n2,3,4\n1,0,0\n"))
    assert objs.n == 3
    assert objs.xy[2].tolist() == [3.0, 4.0]


def test_duplicate_id_is_named(tmp_path):
    with pytest.raises(DataError, match="duplicate id 1"):
        load_objects(write(tmp_path, "o.csv", "id,x,y\n0,1,2\n1,3,4\n1,0,0\n"))


@pytest.mark.parametrize("body, match", [
    ("id,x,y\n0,1,2\n1,abc,4\n", ":3:"),
    ("x,y\n1,2\n", "header"),
    ("id,x,y\n", "no objects"),
    ("id,x,y\n0,1,2\n5,3,4\n", "missing"),
    ("id,x,y\n0,1\n", "fields"),
    ("id,x,y\n0,nan,1\n", "non-finite"),
])
def test_malformed_files(tmp_path, body, match):
    with pytest.raises(DataError, match=match):
        load_objects(write(tmp_path, "o.csv", body))


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_objects(tmp_path / "nope.csv")


def test_large_file_round_trip(tmp_path):
    objs = synthetic_objects(52_913, "city", seed=4)
    path = tmp_path / "big.csv"
    save_objects(objs, path)
    back = load_objects(path)
    assert back.n == 52_913 and back == objs


def test_query_file_sorted_by_sequence(tmp_path):
    qs = load_queries(write(tmp_path, "q.csv", "x,y,radius,seq\n0,0,1,5\n1,1,2,3\n"))
    assert [q.sequence_no for q in qs] == [3, 5]
    with pytest.raises(DataError):
        load_queries(write(tmp_path, "b.csv", "x,y,radius,seq\n0,0,-1,0\n"))


@pytest.mark.parametrize("dist", ["uniform", "city"])
def test_synthetic_objects_in_unit_square(dist):
    xy = synthetic_objects(5000, dist, seed=1).xy
    assert xy.min() >= 0 and xy.max() <= 1
    assert np.array_equal(xy, synthetic_objects(5000, dist, seed=1).xy)


@pytest.mark.parametrize("gen", ["uniform", "skewed", "centroid"])
def test_streams_are_deterministic(gen):
    objs = synthetic_objects(500, "uniform", seed=0)
    a = QueryGenerator(objs, gen, seed=9).take(300)
    b = QueryGenerator(objs, gen, seed=9).take(300)
    c = QueryGenerator(objs, gen, seed=10).take(300)
    assert a == b and a != c
    assert [q.sequence_no for q in a] == list(range(300))


def test_uniform_anchor_frequencies_pass_chi_square():
    objs = synthetic_objects(2000, "uniform", seed=0)
    gen = QueryGenerator(objs, "uniform", seed=3)
    qs = gen.take(100_000)
    _, counts = np.unique([(q.location.x, q.location.y) for q in qs], axis=0, return_counts=True)
    k = gen.anchors
    assert len(counts) == k
    expected = len(qs) / k
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert abs(chi2 - (k - 1)) <= 3 * np.sqrt(2 * (k - 1))


def test_skewed_stream_favours_first_anchors():
    objs = synthetic_objects(2000, "uniform", seed=0)
    qs = QueryGenerator(objs, "skewed", seed=3).take(20_000)
    _, counts = np.unique([(q.location.x, q.location.y) for q in qs], axis=0, return_counts=True)
    top = np.sort(counts)[::-1]
    assert top[0] > 10 * np.median(counts)


def test_radius_is_share_of_diagonal():
    objs = ObjectSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
    q = QueryGenerator(objs, "uniform", radius_pct=10, seed=0).take(1)[0]
    assert q.radius == pytest.approx(0.5)


def test_single_checkin_users_borrow_a_radius():
    objs = synthetic_objects(1000, "uniform", seed=0)
    gen = QueryGenerator(objs, "centroid", seed=2, users=300)
    rng = np.random.default_rng(2)
    rng_sizes = np.random.default_rng(2)
    rng_sizes.integers(0, objs.n, gen.users)
    sizes = rng_sizes.geometric(0.3, gen.users)
    _, radii = gen._users(rng)
    single = sizes == 1
    assert single.any() and (radii > 0).all()
    assert set(radii[single]) <= set(radii[~single])


def test_generator_argument_checks():
    objs = synthetic_objects(10, "uniform")
    with pytest.raises(ValueError):
        QueryGenerator(objs, "nope")
    with pytest.raises(ValueError):
        QueryGenerator(objs, radius_pct=0)
    with pytest.raises(ValueError):
        synthetic_objects(10, "moon")
