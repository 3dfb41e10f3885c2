import pytest

import oracles
from lagcausal.dsep import (REFERENCE_COUNTS, PathQuery, UnrolledDag, asymmetry_table, backward_query,
                            build_scenario, count_open_paths, forward_query, table_csv_rows)


def q(src, dst, Z=()):
    return PathQuery(src, dst, frozenset(Z))


def test_textbook_structures():
    a, b, c = ("a", 0), ("b", 1), ("c", 2)
    chain = UnrolledDag((a, b, c), frozenset({(a, b), (b, c)}))
    assert count_open_paths(chain, q(a, c)) == 1
    assert count_open_paths(chain, q(a, c, {b})) == 0
    b0, a1, c1 = ("b", 0), ("a", 1), ("c", 1)
    fork = UnrolledDag((a1, b0, c1), frozenset({(b0, a1), (b0, c1)}))
    assert count_open_paths(fork, q(a1, c1)) == 1
    assert count_open_paths(fork, q(a1, c1, {b0})) == 0
    a0, c0, d = ("a", 0), ("c", 0), ("d", 2)
    coll = UnrolledDag((a0, b, c0, d), frozenset({(a0, b), (c0, b), (b, d)}))
    assert count_open_paths(coll, q(a0, c0)) == 0
    assert count_open_paths(coll, q(a0, c0, {b})) == 1
    assert count_open_paths(coll, q(a0, c0, {d})) == 1


def test_symmetry_of_path_counts():
    dag = build_scenario(2, (0, 5))
    for a, b in [(("i", 0), ("j", 3)), (("j", 1), ("i", 4)), (("i", 2), ("i", 5))]:
        for Z in (set(), {("j", 0)}, {("i", 1), ("j", 2)}):
            Z = Z - {a, b}
            assert count_open_paths(dag, q(a, b, Z)) == count_open_paths(dag, q(b, a, Z))


@pytest.mark.parametrize("scenario", [1, 2, 3])
def test_matches_bruteforce_oracle(scenario):
    window = (0, 5) if scenario < 3 else (0, 4)
    dag = build_scenario(scenario, window)
    for k in (1, 2, 3):
        for query in (forward_query(k, 0), backward_query(k, 0)):
            ref = oracles.open_paths_bruteforce(sorted(dag.edges), query.src, query.dst, set(query.conditioning))
            assert count_open_paths(dag, query) == ref


def test_scenario_one_small_window():
    dag = build_scenario(1, (0, 2))
    cross = [e for e in dag.edges if e[0][0] != e[1][0]]
    self_ = [e for e in dag.edges if e[0][0] == e[1][0]]
    assert len(cross) == 2 and len(self_) == 4


def test_scenario_one_table():
    rows = asymmetry_table(1)
    assert [r.forward for r in rows] == list(range(1, 10))
    assert all(r.backward == 0 for r in rows)
    assert [r.delta for r in rows] == list(range(1, 10))
    assert count_open_paths(build_scenario(1), forward_query(3, 0 - 3)) == 3


@pytest.mark.parametrize("scenario", [2, 3])
def test_delta_positive_and_increasing(scenario):
    d = [r.delta for r in asymmetry_table(scenario)]
    assert all(x > 0 for x in d)
    assert all(b > a for a, b in zip(d, d[1:]))


def test_csv_rows_report_reference():
    rows = asymmetry_table(2)
    out = table_csv_rows(2, rows)
    labels = [r[0] for r in out]
    assert labels == ["direction", "forward", "backward", "delta", "reference_forward",
                      "reference_backward", "reference_delta", "matches_reference"]
    assert out[4][1] == str(REFERENCE_COUNTS[2][0][0]) == "370"
    assert out[5][1] == "312"
    out1 = table_csv_rows(1, asymmetry_table(1))
    assert set(out1[-1][1:]) == {"true"}


def test_invalid_queries():
    dag = build_scenario(1, (0, 3))
    with pytest.raises(ValueError):
        count_open_paths(dag, q(("i", 0), ("i", 0)))
    with pytest.raises(ValueError):
        count_open_paths(dag, q(("i", 0), ("j", 2), {("i", 0)}))
    with pytest.raises(ValueError):
        count_open_paths(dag, q(("x", 0), ("j", 2)))
    with pytest.raises(ValueError):
        UnrolledDag((("a", 1), ("b", 0)), frozenset({(("a", 1), ("b", 0))}))
    with pytest.raises(ValueError):
        build_scenario(4)
    with pytest.raises(ValueError):
        asymmetry_table(1, kmax=30)
