import itertools
import math

import numpy as np
import pytest

import stepalign as sa


def test_diagonal_alignment():
    costs = np.where(np.eye(3) > 0, -1.0, 0.0)
    r = sa.drop_dtw(costs, 0.5, 0.5)
    assert r["pairs"] == [(0, 0), (1, 1), (2, 2)]
    assert r["total_cost"] == -3.0


def test_drop_dtw_matches_brute_force():
    rng = np.random.default_rng(0)
    for mode in ("one_to_one", "many_to_one"):
        for _ in range(20):
            costs = rng.uniform(-1, 1, size=(3, 4))
            d = sa.percentile_drop_cost(costs, 0.5)
            got = sa.drop_dtw(costs, d, d, mode)["total_cost"]
            want = sa.brute_force_align(costs, d, d, mode)["total_cost"]
            assert abs(got - want) <= 1e-9


def test_percentile_nearest_rank():
    m = np.array([[-0.9, -0.5, 0.0, 0.4, 0.8]])
    assert sa.percentile_drop_cost(m, 0.8) == 0.4


def test_metrics_fixture():
    bg = sa.BACKGROUND
    r = sa.framewise_metrics([0, 0, bg, 1, 1], [bg, 0, 0, bg, 1])
    assert r["precision"] == pytest.approx(0.5, abs=1e-9)
    assert r["recall"] == pytest.approx(2 / 3, abs=1e-9)
    assert r["mof"] == pytest.approx(0.4, abs=1e-9)


def test_hungarian_against_permutations():
    rng = np.random.default_rng(1)
    c = rng.uniform(size=(4, 4))
    a = sa.hungarian(c)
    best = min(sum(c[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4)))
    assert sum(c[i, a[i]] for i in range(4)) == pytest.approx(best, abs=1e-12)


def test_info_nce_equal_candidates():
    v = sa.info_nce(np.array([1.0, 0.0]), np.array([[0.6, 0.8], [0.6, -0.8]]), 1, 0.03)
    assert abs(v - math.log(2)) <= 1e-12


def test_errors_are_translated():
    with pytest.raises(sa.InvariantError):
        sa.percentile_drop_cost(np.zeros((1, 1)), 1.5)
    assert issubclass(sa.DataError, sa.Error)


def test_cli_usage_error():
    assert sa.run_cli(["align", "--bogus"]) == 1
