import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfsign.envelope import EnvelopePair
from rfsign.fidelity import Curve, dfd, dtw_distance, score_signs, select_top_k, table_from_distances


def monotone_paths(n, m):
    """Every warping path from (0, 0) to (n-1, m-1) with unit steps."""
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                for rest in walk(i + di, j + dj):
                    yield [(i, j)] + rest
    return list(walk(0, 0))


def brute_dtw(a, b):
    return min(sum(abs(a[i] - b[j]) for i, j in p) for p in monotone_paths(len(a), len(b)))


def brute_dfd(pa, pb):
    return min(
        max(np.hypot(*(pa[i] - pb[j])) for i, j in p) for p in monotone_paths(len(pa), len(pb))
    )


values = st.lists(st.integers(-20, 20), min_size=1, max_size=6)


def test_dtw_worked_example():
    assert dtw_distance([0, 0, 0], [1, 1]) == 3


@settings(max_examples=150)
@given(values, values)
def test_dtw_matches_enumeration_integers(a, b):
    assert dtw_distance(a, b) == brute_dtw(a, b)


@settings(max_examples=150)
@given(values, values)
def test_dfd_matches_enumeration(a, b):
    ca, cb = Curve.from_values(a), Curve.from_values(b)
    assert dfd(ca, cb) == pytest.approx(brute_dfd(ca.points, cb.points), abs=1e-12)


@given(values, values)
def test_symmetry_and_bounds(a, b):
    ca, cb = Curve.from_values(a), Curve.from_values(b)
    assert dtw_distance(ca, cb) == dtw_distance(cb, ca)
    assert dfd(ca, cb) == dfd(cb, ca)
    assert dtw_distance(ca, cb) >= abs(a[0] - b[0])
    ends = max(np.hypot(*(ca.points[0] - cb.points[0])), np.hypot(*(ca.points[-1] - cb.points[-1])))
    assert dfd(ca, cb) >= ends - 1e-12
    assert dtw_distance(ca, ca) == 0 and dfd(ca, ca) == 0


def test_dfd_scale_divides_axes():
    a = Curve([0.0, 1.0], [0.0, 0.0])
    b = Curve([0.0, 1.0], [10.0, 10.0])
    assert dfd(a, b) == 10
    assert dfd(a, b, scale=(1.0, 5.0)) == pytest.approx(2.0)


def test_curve_validation():
    with pytest.raises(ValueError, match="empty"):
        Curve([], [])
    with pytest.raises(ValueError, match="increasing"):
        Curve([0.0, 0.0], [1.0, 2.0])


def test_table_arithmetic():
    table = table_from_distances({"a": 0.0, "b": 5.0, "c": 10.0}, {"a": 0.0, "b": 5.0, "c": 10.0}, eps=1e-6)
    assert [table[s].dtw_norm for s in "abc"] == [0.0, 0.5, 1.0]
    assert table["a"].s_dtw == pytest.approx(1e6)
    assert table["b"].s_dtw == pytest.approx(2.0)
    assert table["c"].s_dtw == pytest.approx(1.0)
    assert table["b"].score == pytest.approx(2.0)


def test_table_needs_two_signs():
    with pytest.raises(ValueError):
        table_from_distances({"a": 1.0}, {"a": 1.0})


def test_top_k_order_and_ties():
    table = table_from_distances({"b": 1.0, "a": 1.0, "c": 3.0}, {"b": 2.0, "a": 2.0, "c": 4.0})
    assert select_top_k(table, 2) == ["a", "b"]
    with pytest.raises(ValueError):
        select_top_k(table, 0)
    with pytest.raises(ValueError):
        select_top_k(table, 4)


@given(st.floats(0.1, 100.0))
def test_top_k_stable_under_rescaling(k):
    raw = {"a": 3.0, "b": 1.0, "c": 7.5, "d": 2.2}
    base = select_top_k(table_from_distances(raw, raw), 4)
    scaled = {s: k * x for s, x in raw.items()}
    assert select_top_k(table_from_distances(scaled, scaled), 4) == base


def envelope(rng, shift, n=12):
    t = np.arange(n) * 0.2
    upper = 100 * np.sin(t * 3) + 120 + shift * rng.standard_normal(n)
    return EnvelopePair(upper, upper - 200, t)


def test_identical_groups_rank_first():
    rng = np.random.default_rng(1)
    same = envelope(rng, 0)
    groups = {
        "exact": ([same], [same]),
        "close": ([envelope(rng, 0)], [envelope(rng, 5)]),
        "far": ([envelope(rng, 0)], [envelope(rng, 60)]),
    }
    table = score_signs(groups)
    assert table["exact"].dtw == 0 and table["exact"].dfd == 0
    assert select_top_k(table, 3) == ["exact", "close", "far"]


def test_score_signs_averages_cross_pairs():
    a, b, c = (Curve.from_values(v) for v in ([0, 0], [1, 1], [3, 3]))
    table = score_signs({"x": ([a], [b, c]), "y": ([a], [a])})
    assert table["x"].dtw == pytest.approx((2 + 6) / 2)


def test_score_signs_errors():
    a = Curve.from_values([1.0])
    with pytest.raises(ValueError):
        score_signs({"x": ([a], [a])})
    with pytest.raises(ValueError):
        score_signs({"x": ([a], []), "y": ([a], [a])})


def test_csv_and_json_export():
    table = table_from_distances({"a": 1.0, "b": 2.0}, {"a": 1.0, "b": 3.0})
    lines = table.to_csv().splitlines()
    assert lines[0].startswith("sign,dtw,dfd")
    assert len(lines) == 3
    assert '"schema_version": 1' in table.to_json()
