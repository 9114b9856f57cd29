import math

import numpy as np
import pytest

from paretoflow.benchmarks import (
    PROBLEM_NAMES,
    ColumnStats,
    OfflineDataset,
    generate_offline_dataset,
    load_dataset,
    make_problem,
    save_dataset,
)
from paretoflow.moo import dominates


# Scalar reference implementations written from the textbook formulas.
def ref_zdt(x, kind):
    n = len(x)
    f1 = x[0]
    if kind == "zdt4":
        g = 1 + 10 * (n - 1) + sum(v * v - 10 * math.cos(4 * math.pi * v) for v in x[1:])
    elif kind == "zdt6":
        f1 = 1 - math.exp(-4 * x[0]) * math.sin(6 * math.pi * x[0]) ** 6
        g = 1 + 9 * (sum(x[1:]) / (n - 1)) ** 0.25
    else:
        g = 1 + 9 * sum(x[1:]) / (n - 1)
    if kind in ("zdt1", "zdt4"):
        h = 1 - math.sqrt(f1 / g)
    elif kind in ("zdt2", "zdt6"):
        h = 1 - (f1 / g) ** 2
    else:
        h = 1 - math.sqrt(f1 / g) - (f1 / g) * math.sin(10 * math.pi * f1)
    return [f1, g * h]


def ref_dtlz1(x):
    k = x[2:]
    g = 100 * (len(k) + sum((v - 0.5) ** 2 - math.cos(20 * math.pi * (v - 0.5)) for v in k))
    return [0.5 * x[0] * x[1] * (1 + g), 0.5 * x[0] * (1 - x[1]) * (1 + g), 0.5 * (1 - x[0]) * (1 + g)]


def ref_dtlz7(x):
    k = x[2:]
    g = 1 + 9 / len(k) * sum(k)
    h = 3 - sum(f / (1 + g) * (1 + math.sin(3 * math.pi * f)) for f in x[:2])
    return [x[0], x[1], (1 + g) * h]


def ref_vlmop2(x):
    c = 1 / math.sqrt(2)
    return [1 - math.exp(-sum((v - c) ** 2 for v in x)), 1 - math.exp(-sum((v + c) ** 2 for v in x))]


def ref_vlmop3(x):
    a, b = x
    r = a * a + b * b
    return [
        0.5 * r + math.sin(r),
        (3 * a - 2 * b + 4) ** 2 / 8 + (a - b + 1) ** 2 / 27 + 15,
        1 / (r + 1) - 1.1 * math.exp(-r),
    ]


REFERENCES = {
    "zdt1": lambda x: ref_zdt(x, "zdt1"),
    "zdt2": lambda x: ref_zdt(x, "zdt2"),
    "zdt3": lambda x: ref_zdt(x, "zdt3"),
    "zdt4": lambda x: ref_zdt(x, "zdt4"),
    "zdt6": lambda x: ref_zdt(x, "zdt6"),
    "dtlz1": ref_dtlz1,
    "dtlz7": ref_dtlz7,
    "vlmop1": lambda x: [x[0] ** 2, (x[0] - 2) ** 2],
    "vlmop2": ref_vlmop2,
    "vlmop3": ref_vlmop3,
    "omnitest": lambda x: [sum(math.sin(math.pi * v) for v in x), sum(math.cos(math.pi * v) for v in x)],
}


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_oracle_matches_reference(name):
    spec = make_problem(name)
    assert np.all(spec.lower < spec.upper) and np.all(np.isfinite(spec.lower + spec.upper))
    rng = np.random.default_rng(0)
    x = spec.lower + rng.random((100, spec.d)) * (spec.upper - spec.lower)
    got = spec.evaluate(x)
    assert got.shape == (100, spec.m)
    expected = np.array([REFERENCES[name](list(row)) for row in x])
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(spec.evaluate(x[0]), got[0])


def test_zdt_hand_values():
    assert np.array_equal(make_problem("ZDT1").evaluate(np.zeros(30)), [0.0, 1.0])
    x = np.zeros(30)
    x[0] = 1.0
    assert np.array_equal(make_problem("zdt2").evaluate(x), [1.0, 0.0])
    assert make_problem("zdt1").d == 30 and make_problem("zdt1").m == 2


def test_unknown_problem_lists_valid_names():
    with pytest.raises(KeyError, match="zdt1"):
        make_problem("ZDT9")


def test_wrong_width_rejected():
    with pytest.raises(ValueError):
        make_problem("zdt1").evaluate(np.zeros(5))


def _chord_midpoints(front, rng, count=200):
    for _ in range(count):
        a, b = np.sort(rng.random(2))
        if b - a > 1e-3:
            mid = 0.5 * (np.array([a, front(a)]) + np.array([b, front(b)]))
            yield mid, np.array([mid[0], front(mid[0])])


def test_zdt2_front_is_nonconvex():
    # chord midpoints lie beyond the front: each dominates the front point below it
    rng = np.random.default_rng(1)
    for mid, on_front in _chord_midpoints(make_problem("zdt2").pareto_front_hint, rng):
        assert dominates(mid, on_front)


def test_zdt1_front_is_convex():
    rng = np.random.default_rng(1)
    for mid, on_front in _chord_midpoints(make_problem("zdt1").pareto_front_hint, rng):
        assert dominates(on_front, mid)


def test_dataset_is_deterministic_and_consistent():
    spec = make_problem("zdt1")
    a = generate_offline_dataset(spec, 10, seed=3)
    b = generate_offline_dataset(spec, 10, seed=3)
    assert np.array_equal(a.designs, b.designs)
    assert np.array_equal(spec.evaluate(a.designs), a.labels)
    assert spec.in_bounds(a.designs).all()


@pytest.mark.parametrize("sampler", ["uniform", "latin-hypercube"])
@pytest.mark.parametrize("name", ["zdt4", "vlmop3", "omnitest"])
def test_dataset_in_bounds(name, sampler):
    spec = make_problem(name)
    ds = generate_offline_dataset(spec, 200, seed=0, sampler=sampler)
    assert spec.in_bounds(ds.designs).all()


def test_zdt1_f1_range():
    ds = generate_offline_dataset(make_problem("zdt1"), 5000, seed=0)
    assert ds.labels[:, 0].min() < 0.05 and ds.labels[:, 0].max() > 0.95


def test_dataset_errors():
    with pytest.raises(ValueError):
        generate_offline_dataset(make_problem("zdt1"), 0, seed=0)
    with pytest.raises(ValueError):
        generate_offline_dataset(make_problem("zdt1"), 5, seed=0, sampler="sobol")


def test_normalization_conventions():
    stats = ColumnStats.of(np.array([[0.0, 5.0, 2.0], [4.0, 5.0, 6.0]]))
    np.testing.assert_array_equal(stats.normalize([0.0, 5.0, 2.0]), [0.0, 0.5, 0.0])
    np.testing.assert_array_equal(stats.normalize([4.0, 5.0, 6.0]), [1.0, 0.5, 1.0])
    z = np.random.default_rng(0).normal(size=(50, 3))
    x = np.random.default_rng(1).normal(size=(50, 3)) * 10
    stats = ColumnStats.of(x)
    assert np.max(np.abs(stats.denormalize(stats.normalize(x)) - x)) <= 1e-12
    assert np.max(np.abs(stats.normalize(stats.denormalize(z)) - z)) <= 1e-12


def test_dataset_file_roundtrip(tmp_path):
    ds = generate_offline_dataset(make_problem("vlmop3"), 25, seed=4)
    csv_path, meta_path = save_dataset(ds, tmp_path / "data" / "ds.csv")
    assert csv_path.read_text().splitlines()[0] == "x0,x1,f0,f1,f2"
    back = load_dataset(csv_path, expect_d=2, expect_m=3)
    assert np.array_equal(back.designs, ds.designs) and np.array_equal(back.labels, ds.labels)
    assert back.metadata() == ds.metadata()
    with pytest.raises(ValueError):
        load_dataset(csv_path, expect_d=3)
    with pytest.raises(ValueError):
        load_dataset(csv_path, expect_m=2)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        OfflineDataset("zdt1", np.zeros((0, 2)), np.zeros((0, 2)))
